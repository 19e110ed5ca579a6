import { ApiError, type ApiClient } from './api.js';
import {
  applyGap,
  applyTriage,
  canQueryGaps,
  confirmedTechniqueIds,
  exportSession,
  importSession,
  newSessionState,
  parseTechniqueEntry,
  SessionError,
  type SessionState,
} from './state.js';

export type OpOutcome =
  | { status: 'done' }
  | { status: 'cancelled' }
  | { status: 'error'; message: string; field?: 'incident' | 'gap' };

export type TriageOptions = {
  k?: number;
  threshold?: number;
  model?: string;
};

function isAbort(err: unknown): boolean {
  return err instanceof Error && err.name === 'AbortError';
}

function errorOutcome(err: unknown, field?: 'incident' | 'gap'): OpOutcome {
  if (err instanceof ApiError || err instanceof SessionError) {
    return { status: 'error', message: err.message, field };
  }
  if (err instanceof Error) {
    // e.g. fetch network failure; surface it, never fail silently
    return { status: 'error', message: `Request failed: ${err.message}` };
  }
  throw err;
}

/**
 * Session operations over the gateway client. Holds the single-tab
 * session and enforces at most one in-flight triage request: a new
 * submit cancels the previous one.
 */
export class ConsoleController {
  readonly state: SessionState;
  private readonly client: ApiClient;
  private triageAbort: AbortController | null = null;
  private gapGeneration = 0;

  constructor(client: ApiClient, state: SessionState = newSessionState()) {
    this.client = client;
    this.state = state;
  }

  /** POST /triage for non-empty text; empty text never reaches the API. */
  async submitIncident(text: string, options: TriageOptions = {}): Promise<OpOutcome> {
    if (text.trim() === '') {
      return { status: 'error', message: 'Enter an incident description first.', field: 'incident' };
    }
    this.triageAbort?.abort();
    const abort = new AbortController();
    this.triageAbort = abort;
    try {
      const result = await this.client.triage({ text, ...options }, abort.signal);
      if (abort.signal.aborted) {
        return { status: 'cancelled' };
      }
      applyTriage(this.state, result);
      return { status: 'done' };
    } catch (err) {
      if (isAbort(err)) {
        return { status: 'cancelled' };
      }
      return errorOutcome(err);
    } finally {
      if (this.triageAbort === abort) {
        this.triageAbort = null;
      }
    }
  }

  /**
   * POST /gap-analysis with the confirmed technique ids, any manually
   * entered ids, and the implemented-controls profile. Stale responses
   * from superseded requests are dropped.
   */
  async refreshGaps(explicitEntry = ''): Promise<OpOutcome> {
    const explicitIds = parseTechniqueEntry(explicitEntry);
    if (!canQueryGaps(this.state, explicitIds)) {
      return {
        status: 'error',
        message: 'Confirm at least one candidate or enter technique ids.',
        field: 'gap',
      };
    }
    const ids = confirmedTechniqueIds(this.state);
    for (const id of explicitIds) {
      if (!ids.includes(id)) {
        ids.push(id);
      }
    }
    const generation = ++this.gapGeneration;
    try {
      const report = await this.client.gapAnalysis({
        technique_ids: ids,
        implemented_controls: this.state.implementedControls,
      });
      if (generation !== this.gapGeneration) {
        return { status: 'cancelled' };
      }
      applyGap(this.state, report);
      return { status: 'done' };
    } catch (err) {
      const field = err instanceof ApiError && err.code.startsWith('validation.') ? 'gap' : undefined;
      return errorOutcome(err, field);
    }
  }

  /** Serialize the session as "session.v1" JSON. */
  exportJson(): string {
    return exportSession(this.state);
  }

  /** Replace the session with an imported "session.v1" document. */
  importSession(json: string): OpOutcome {
    try {
      Object.assign(this.state, importSession(json));
      return { status: 'done' };
    } catch (err) {
      return errorOutcome(err);
    }
  }
}
