import type { GapReport, TriageResult, Verdict } from './types.js';

/** Client-side validation failure (bad input or a corrupt session file). */
export class SessionError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'SessionError';
  }
}

/**
 * Per-tab analyst session. Verdicts are keyed by technique id and only
 * ever reference candidates in the last triage result; the gap report
 * is whatever the gateway last returned, never a local derivation.
 */
export interface SessionState {
  incidentText: string;
  triage: TriageResult | null;
  verdicts: Record<string, Verdict>;
  implementedControls: string[];
  gap: GapReport | null;
}

export function newSessionState(): SessionState {
  return {
    incidentText: '',
    triage: null,
    verdicts: {},
    implementedControls: [],
    gap: null,
  };
}

/** Adopt a fresh triage result; every candidate starts pending. */
export function applyTriage(state: SessionState, result: TriageResult): void {
  state.triage = result;
  state.incidentText = result.incident_text;
  state.verdicts = {};
  for (const entry of result.ranked) {
    state.verdicts[entry.technique_id] = 'pending';
  }
}

export function setVerdict(state: SessionState, techniqueId: string, verdict: Verdict): void {
  if (state.triage === null) {
    throw new SessionError('no triage result to record verdicts against');
  }
  if (!(techniqueId in state.verdicts)) {
    throw new SessionError(`verdict names unknown candidate ${techniqueId}`);
  }
  state.verdicts[techniqueId] = verdict;
}

/** Confirmed technique ids in the triage result's ranked order. */
export function confirmedTechniqueIds(state: SessionState): string[] {
  if (state.triage === null) {
    return [];
  }
  return state.triage.ranked
    .map((entry) => entry.technique_id)
    .filter((id) => state.verdicts[id] === 'confirmed');
}

export function toggleControl(state: SessionState, controlId: string): void {
  const index = state.implementedControls.indexOf(controlId);
  if (index >= 0) {
    state.implementedControls.splice(index, 1);
  } else {
    state.implementedControls.push(controlId);
    state.implementedControls.sort();
  }
}

export function applyGap(state: SessionState, report: GapReport): void {
  state.gap = report;
}

/** Verdict buttons stay disabled until a triage result exists. */
export function canRecordVerdicts(state: SessionState): boolean {
  return state.triage !== null;
}

/** The gap panel needs at least one confirmation or an explicit technique entry. */
export function canQueryGaps(state: SessionState, explicitIds: string[]): boolean {
  return confirmedTechniqueIds(state).length > 0 || explicitIds.length > 0;
}

/** Parse a manual technique entry like "T1486, T1059" into unique ids. */
export function parseTechniqueEntry(text: string): string[] {
  const ids: string[] = [];
  for (const piece of text.split(/[\s,]+/)) {
    const id = piece.trim();
    if (id !== '' && !ids.includes(id)) {
      ids.push(id);
    }
  }
  return ids;
}

const VERDICT_VALUES: Verdict[] = ['confirmed', 'rejected', 'pending'];

/** Serialize the session as schema "session.v1" JSON. */
export function exportSession(state: SessionState): string {
  return JSON.stringify(
    {
      schema: 'session.v1',
      incident_text: state.incidentText,
      triage: state.triage,
      verdicts: state.verdicts,
      implemented_controls: state.implementedControls,
      gap: state.gap,
    },
    null,
    2,
  );
}

/**
 * Parse and validate a "session.v1" export. Rejects sessions whose
 * verdicts reference candidates outside their own triage result;
 * candidates without a recorded verdict default to pending.
 */
export function importSession(json: string): SessionState {
  let doc: unknown;
  try {
    doc = JSON.parse(json);
  } catch {
    throw new SessionError('session file is not valid JSON');
  }
  if (typeof doc !== 'object' || doc === null || Array.isArray(doc)) {
    throw new SessionError('session file must be a JSON object');
  }
  const raw = doc as Record<string, unknown>;
  if (raw.schema !== 'session.v1') {
    throw new SessionError("session file must declare schema 'session.v1'");
  }
  if (typeof raw.incident_text !== 'string') {
    throw new SessionError('session incident_text must be a string');
  }
  const triage = raw.triage === null ? null : (raw.triage as TriageResult);
  if (triage !== null && (typeof triage !== 'object' || triage.schema !== 'triage.v1')) {
    throw new SessionError("session triage must be null or a 'triage.v1' document");
  }
  const gap = raw.gap === null || raw.gap === undefined ? null : (raw.gap as GapReport);
  if (gap !== null && (typeof gap !== 'object' || gap.schema !== 'gap.v1')) {
    throw new SessionError("session gap must be null or a 'gap.v1' document");
  }
  if (!Array.isArray(raw.implemented_controls)) {
    throw new SessionError('session implemented_controls must be an array');
  }
  const implemented: string[] = [];
  for (const item of raw.implemented_controls) {
    if (typeof item !== 'string') {
      throw new SessionError('session implemented_controls entries must be strings');
    }
    if (!implemented.includes(item)) {
      implemented.push(item);
    }
  }
  implemented.sort();

  if (typeof raw.verdicts !== 'object' || raw.verdicts === null || Array.isArray(raw.verdicts)) {
    throw new SessionError('session verdicts must be an object');
  }
  const rankedIds = triage === null ? [] : triage.ranked.map((entry) => entry.technique_id);
  const verdicts: Record<string, Verdict> = {};
  for (const id of rankedIds) {
    verdicts[id] = 'pending';
  }
  for (const [id, value] of Object.entries(raw.verdicts as Record<string, unknown>)) {
    if (!rankedIds.includes(id)) {
      throw new SessionError(`session verdict references ${id}, not a candidate in its triage`);
    }
    if (typeof value !== 'string' || !VERDICT_VALUES.includes(value as Verdict)) {
      throw new SessionError(`session verdict for ${id} must be confirmed, rejected, or pending`);
    }
    verdicts[id] = value as Verdict;
  }

  return {
    incidentText: raw.incident_text,
    triage,
    verdicts,
    implementedControls: implemented,
    gap,
  };
}
