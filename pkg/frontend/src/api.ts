import type {
  ApiErrorBody,
  CatalogControl,
  GapReport,
  GapRequest,
  HealthInfo,
  TriageRequest,
  TriageResult,
} from './types.js';

/** Structured gateway error: HTTP status plus the body's code and message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: unknown = null,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function throwApiError(res: Response): Promise<never> {
  let body: ApiErrorBody | null = null;
  try {
    body = (await res.json()) as ApiErrorBody;
  } catch {
    // non-JSON error body; fall through to the generic error below
  }
  if (body && typeof body.code === 'string' && typeof body.message === 'string') {
    throw new ApiError(res.status, body.code, body.message, body.detail);
  }
  throw new ApiError(res.status, 'http.error', `HTTP ${res.status}`);
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const res = await fetch(base + path, { headers: { Accept: 'application/json' } });
  if (!res.ok) {
    await throwApiError(res);
  }
  return (await res.json()) as T;
}

async function postJson<T>(
  base: string,
  path: string,
  body: unknown,
  signal?: AbortSignal,
): Promise<T> {
  const res = await fetch(base + path, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json', Accept: 'application/json' },
    body: JSON.stringify(body),
    signal,
  });
  if (!res.ok) {
    await throwApiError(res);
  }
  return (await res.json()) as T;
}

/**
 * Typed client for the gateway's v1 API. The console talks to the
 * gateway through this client only.
 */
export function createApiClient(baseUrl = '') {
  return {
    health(): Promise<HealthInfo> {
      return getJson<HealthInfo>(baseUrl, '/health');
    },

    controls(): Promise<CatalogControl[]> {
      return getJson<{ controls: CatalogControl[] }>(baseUrl, '/catalog/controls').then(
        (doc) => doc.controls,
      );
    },

    triage(request: TriageRequest, signal?: AbortSignal): Promise<TriageResult> {
      return postJson<TriageResult>(baseUrl, '/triage', request, signal);
    },

    gapAnalysis(request: GapRequest): Promise<GapReport> {
      return postJson<GapReport>(baseUrl, '/gap-analysis', request);
    },
  };
}

export type ApiClient = ReturnType<typeof createApiClient>;
