import { describe, expect, it } from 'vitest';

import { ApiError } from '../src/api.js';
import { ConsoleController } from '../src/controller.js';
import { setVerdict } from '../src/state.js';
import type { GapReport, TriageResult } from '../src/types.js';
import {
  hangUntilAborted,
  loadFixture,
  resolveTriage,
  scriptedClient,
  type GapBehavior,
} from './helpers.js';

const triageFixture = loadFixture<TriageResult>('triage.json');
const gapFixture = loadFixture<GapReport>('gap.json');

async function confirmedController(gapScript: GapBehavior[]) {
  const { client, gapCalls } = scriptedClient({
    triage: [resolveTriage(triageFixture)],
    gap: gapScript,
  });
  const controller = new ConsoleController(client);
  await controller.submitIncident('stolen credentials');
  setVerdict(controller.state, triageFixture.ranked[0]!.technique_id, 'confirmed');
  return { controller, gapCalls };
}

describe('submit_incident', () => {
  it('rejects empty and whitespace text client-side without calling the API', async () => {
    const { client, triageCalls } = scriptedClient();
    const controller = new ConsoleController(client);
    for (const text of ['', '   ', '\n\t']) {
      const outcome = await controller.submitIncident(text);
      expect(outcome).toMatchObject({ status: 'error', field: 'incident' });
    }
    expect(triageCalls).toHaveLength(0);
    expect(controller.state.triage).toBeNull();
  });

  it('applies the triage response and resets verdicts to pending', async () => {
    const { client, triageCalls } = scriptedClient({ triage: [resolveTriage(triageFixture)] });
    const controller = new ConsoleController(client);
    const outcome = await controller.submitIncident('stolen credentials', { k: 5, threshold: 0.78 });
    expect(outcome).toEqual({ status: 'done' });
    expect(triageCalls).toEqual([{ text: 'stolen credentials', k: 5, threshold: 0.78 }]);
    expect(controller.state.triage?.ranked).toEqual(triageFixture.ranked);
    expect(controller.state.incidentText).toBe('stolen credentials');
    expect(new Set(Object.values(controller.state.verdicts))).toEqual(new Set(['pending']));
  });

  it('cancels the in-flight triage when a new one is submitted', async () => {
    const { client } = scriptedClient({ triage: [hangUntilAborted(), resolveTriage(triageFixture)] });
    const controller = new ConsoleController(client);
    const first = controller.submitIncident('first incident');
    const second = controller.submitIncident('second incident');
    expect(await first).toEqual({ status: 'cancelled' });
    expect(await second).toEqual({ status: 'done' });
    expect(controller.state.triage?.incident_text).toBe('second incident');
  });

  it('routes gateway errors to the banner with the ApiError message', async () => {
    const { client } = scriptedClient({
      triage: [() => Promise.reject(new ApiError(404, 'not_found', "unknown model 'huge'"))],
    });
    const controller = new ConsoleController(client);
    const outcome = await controller.submitIncident('anything');
    expect(outcome).toEqual({ status: 'error', message: "unknown model 'huge'", field: undefined });
    expect(controller.state.triage).toBeNull();
  });

  it('surfaces network failures instead of failing silently', async () => {
    const { client } = scriptedClient({ triage: [() => Promise.reject(new TypeError('fetch failed'))] });
    const controller = new ConsoleController(client);
    const outcome = await controller.submitIncident('anything');
    expect(outcome).toMatchObject({ status: 'error' });
    expect((outcome as { message: string }).message).toContain('fetch failed');
  });
});

describe('record_verdicts_and_refresh_gaps', () => {
  it('refuses to query without a confirmation or explicit entry', async () => {
    const { client, gapCalls } = scriptedClient({ triage: [resolveTriage(triageFixture)] });
    const controller = new ConsoleController(client);
    await controller.submitIncident('stolen credentials');
    const outcome = await controller.refreshGaps();
    expect(outcome).toMatchObject({ status: 'error', field: 'gap' });
    expect(gapCalls).toHaveLength(0);
  });

  it('posts confirmed technique ids with the implemented profile', async () => {
    const { controller, gapCalls } = await confirmedController([() => Promise.resolve(gapFixture)]);
    controller.state.implementedControls.push('CIS-4');
    const outcome = await controller.refreshGaps();
    expect(outcome).toEqual({ status: 'done' });
    expect(gapCalls).toEqual([
      {
        technique_ids: [triageFixture.ranked[0]!.technique_id],
        implemented_controls: ['CIS-4'],
      },
    ]);
    expect(controller.state.gap).toEqual(gapFixture);
  });

  it('merges explicit technique entries after the confirmed ids', async () => {
    const { controller, gapCalls } = await confirmedController([() => Promise.resolve(gapFixture)]);
    const confirmed = triageFixture.ranked[0]!.technique_id;
    await controller.refreshGaps(`T1486, ${confirmed}`);
    expect(gapCalls[0]?.technique_ids).toEqual([confirmed, 'T1486']);
  });

  it('supports explicit-entry queries with zero confirmations', async () => {
    const { client, gapCalls } = scriptedClient({ gap: [() => Promise.resolve(gapFixture)] });
    const controller = new ConsoleController(client);
    const outcome = await controller.refreshGaps('T1486');
    expect(outcome).toEqual({ status: 'done' });
    expect(gapCalls[0]?.technique_ids).toEqual(['T1486']);
  });

  it('routes validation errors to the gap panel as field-level messages', async () => {
    const { controller } = await confirmedController([
      () =>
        Promise.reject(
          new ApiError(400, 'validation.invalid', "implemented profile names unknown control 'CIS-99'"),
        ),
    ]);
    const outcome = await controller.refreshGaps();
    expect(outcome).toEqual({
      status: 'error',
      message: "implemented profile names unknown control 'CIS-99'",
      field: 'gap',
    });
  });

  it('drops stale responses when a newer query has been issued', async () => {
    let releaseFirst: (report: GapReport) => void = () => undefined;
    const firstResponse = new Promise<GapReport>((resolve) => {
      releaseFirst = resolve;
    });
    const staleReport = structuredClone(gapFixture);
    staleReport.warnings = ['stale'];
    const { controller } = await confirmedController([
      () => firstResponse,
      () => Promise.resolve(gapFixture),
    ]);
    const first = controller.refreshGaps();
    const second = controller.refreshGaps();
    expect(await second).toEqual({ status: 'done' });
    releaseFirst(staleReport);
    expect(await first).toEqual({ status: 'cancelled' });
    expect(controller.state.gap).toEqual(gapFixture);
  });
});

describe('session import/export via the controller', () => {
  it('round-trips through exportJson and importSession', async () => {
    const { client } = scriptedClient({ triage: [resolveTriage(triageFixture)] });
    const controller = new ConsoleController(client);
    await controller.submitIncident('stolen credentials');
    setVerdict(controller.state, triageFixture.ranked[1]!.technique_id, 'rejected');

    const other = new ConsoleController(scriptedClient().client);
    expect(other.importSession(controller.exportJson())).toEqual({ status: 'done' });
    expect(other.state).toEqual(controller.state);
  });

  it('reports corrupt session files as errors', () => {
    const controller = new ConsoleController(scriptedClient().client);
    const outcome = controller.importSession('{"schema": "nope"}');
    expect(outcome).toMatchObject({ status: 'error' });
    expect((outcome as { message: string }).message).toContain('session.v1');
  });
});
