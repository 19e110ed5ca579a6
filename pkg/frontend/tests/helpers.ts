import { readFileSync } from 'node:fs';

import type { ApiClient } from '../src/api.js';
import type {
  CatalogControl,
  GapReport,
  GapRequest,
  HealthInfo,
  TriageRequest,
  TriageResult,
} from '../src/types.js';

export function loadFixture<T>(name: string): T {
  // cwd-relative: vitest runs from the package root in every environment
  return JSON.parse(readFileSync(`tests/fixtures/${name}`, 'utf8')) as T;
}

/** Candidate row substrings in document order. */
export function candidateRows(html: string): string[] {
  return html.split('<li class="candidate').slice(1);
}

/** Gap row substrings in document order. */
export function gapRows(html: string): string[] {
  return html.split('<li class="gap"').slice(1);
}

/** All values of an attribute, in document order. */
export function attrValues(html: string, attr: string): string[] {
  const values: string[] = [];
  const pattern = new RegExp(`${attr}="([^"]*)"`, 'g');
  for (const match of html.matchAll(pattern)) {
    values.push(match[1] as string);
  }
  return values;
}

export type TriageBehavior = (req: TriageRequest, signal?: AbortSignal) => Promise<TriageResult>;
export type GapBehavior = (req: GapRequest) => Promise<GapReport>;

/** Resolve with the fixture, echoing the submitted text. */
export function resolveTriage(result: TriageResult): TriageBehavior {
  return (req) => Promise.resolve({ ...result, incident_text: req.text });
}

/** Never resolves; rejects with AbortError once the signal fires. */
export function hangUntilAborted(): TriageBehavior {
  return (_req, signal) =>
    new Promise((_resolve, reject) => {
      signal?.addEventListener('abort', () => {
        const err = new Error('request aborted');
        err.name = 'AbortError';
        reject(err);
      });
    });
}

export interface ScriptedClientOptions {
  triage?: TriageBehavior[];
  gap?: GapBehavior[];
  health?: HealthInfo;
  controls?: CatalogControl[];
}

/** API client test double driven by per-call behavior scripts. */
export function scriptedClient(options: ScriptedClientOptions = {}) {
  const triageScript = options.triage ?? [];
  const gapScript = options.gap ?? [];
  const triageCalls: TriageRequest[] = [];
  const gapCalls: GapRequest[] = [];
  const client: ApiClient = {
    health: () =>
      options.health !== undefined
        ? Promise.resolve(options.health)
        : Promise.reject(new Error('health not scripted')),
    controls: () =>
      options.controls !== undefined
        ? Promise.resolve(options.controls)
        : Promise.reject(new Error('controls not scripted')),
    triage(req, signal) {
      triageCalls.push(req);
      const behavior = triageScript.shift();
      if (behavior === undefined) {
        throw new Error('unexpected triage call');
      }
      return behavior(req, signal);
    },
    gapAnalysis(req) {
      gapCalls.push(req);
      const behavior = gapScript.shift();
      if (behavior === undefined) {
        throw new Error('unexpected gap call');
      }
      return behavior(req);
    },
  };
  return { client, triageCalls, gapCalls, triageScript, gapScript };
}
