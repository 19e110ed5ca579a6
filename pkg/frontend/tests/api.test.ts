import { afterEach, describe, expect, it, vi } from 'vitest';

import { ApiError, createApiClient } from '../src/api.js';
import type { GapReport, TriageResult } from '../src/types.js';
import { loadFixture } from './helpers.js';

const triageFixture = loadFixture<TriageResult>('triage.json');
const gapFixture = loadFixture<GapReport>('gap.json');
const errorBody = loadFixture<object>('error-unknown-control.json');

type RecordedCall = { url: string; init: RequestInit | undefined };

function stubFetch(status: number, body: string): RecordedCall[] {
  const calls: RecordedCall[] = [];
  vi.stubGlobal('fetch', (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    return Promise.resolve(
      new Response(body, { status, headers: { 'Content-Type': 'application/json' } }),
    );
  });
  return calls;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('createApiClient', () => {
  it('posts triage requests as JSON and returns the parsed payload', async () => {
    const calls = stubFetch(200, JSON.stringify(triageFixture));
    const client = createApiClient();
    const result = await client.triage({ text: 'stolen credentials', k: 5, threshold: 0.78 });
    expect(result).toEqual(triageFixture);
    expect(calls[0]?.url).toBe('/triage');
    expect(calls[0]?.init?.method).toBe('POST');
    expect(JSON.parse(String(calls[0]?.init?.body))).toEqual({
      text: 'stolen credentials',
      k: 5,
      threshold: 0.78,
    });
  });

  it('prefixes requests with the configured base url', async () => {
    const calls = stubFetch(200, JSON.stringify(gapFixture));
    const client = createApiClient('http://127.0.0.1:8642');
    await client.gapAnalysis({ technique_ids: ['T1486'], implemented_controls: [] });
    expect(calls[0]?.url).toBe('http://127.0.0.1:8642/gap-analysis');
  });

  it('passes the abort signal through to fetch', async () => {
    const calls = stubFetch(200, JSON.stringify(triageFixture));
    const abort = new AbortController();
    await createApiClient().triage({ text: 'x' }, abort.signal);
    expect(calls[0]?.init?.signal).toBe(abort.signal);
  });

  it('unwraps the controls listing', async () => {
    stubFetch(200, JSON.stringify({ controls: [{ id: 'CIS-1', title: 'T', description: 'd' }] }));
    const controls = await createApiClient().controls();
    expect(controls).toEqual([{ id: 'CIS-1', title: 'T', description: 'd' }]);
  });

  it('turns structured gateway errors into ApiError with code and message', async () => {
    stubFetch(400, JSON.stringify(errorBody));
    const err = await createApiClient()
      .gapAnalysis({ technique_ids: ['T1486'], implemented_controls: ['CIS-99'] })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err).toMatchObject({
      status: 400,
      code: 'validation.invalid',
      message: "implemented profile names unknown control 'CIS-99'",
    });
  });

  it('falls back to a generic ApiError on non-JSON error bodies', async () => {
    stubFetch(502, 'bad gateway');
    const err = await createApiClient()
      .triage({ text: 'x' })
      .catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err).toMatchObject({ status: 502, code: 'http.error', message: 'HTTP 502' });
  });
});
