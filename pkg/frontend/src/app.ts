import { createApiClient, type ApiClient } from './api.js';
import { ConsoleController, type OpOutcome } from './controller.js';
import { renderCandidates, renderErrorBanner, renderGapReport, escapeHtml } from './render.js';
import {
  canQueryGaps,
  canRecordVerdicts,
  parseTechniqueEntry,
  setVerdict,
  SessionError,
  toggleControl,
} from './state.js';
import type { CatalogControl, Verdict } from './types.js';

function byId<T extends HTMLElement>(root: ParentNode, id: string): T {
  const el = root.querySelector<T>(`#${id}`);
  if (el === null) {
    throw new Error(`console markup is missing #${id}`);
  }
  return el;
}

function optionalNumber(input: HTMLInputElement): number | undefined {
  if (input.value.trim() === '') {
    return undefined;
  }
  const value = Number(input.value);
  return Number.isNaN(value) ? undefined : value;
}

/** Wire the console UI inside `root` against the given API client. */
export function initConsole(root: ParentNode, client: ApiClient): ConsoleController {
  const controller = new ConsoleController(client);
  const state = controller.state;

  const banner = byId<HTMLDivElement>(root, 'error-banner');
  const healthLine = byId<HTMLParagraphElement>(root, 'health-line');
  const incidentText = byId<HTMLTextAreaElement>(root, 'incident-text');
  const incidentMessage = byId<HTMLParagraphElement>(root, 'incident-message');
  const optK = byId<HTMLInputElement>(root, 'opt-k');
  const optThreshold = byId<HTMLInputElement>(root, 'opt-threshold');
  const submitButton = byId<HTMLButtonElement>(root, 'submit-incident');
  const candidatesPanel = byId<HTMLDivElement>(root, 'candidates');
  const profilePanel = byId<HTMLDivElement>(root, 'profile');
  const gapPanel = byId<HTMLElement>(root, 'gap-panel');
  const gapEntry = byId<HTMLInputElement>(root, 'gap-entry');
  const gapMessage = byId<HTMLParagraphElement>(root, 'gap-message');
  const refreshButton = byId<HTMLButtonElement>(root, 'refresh-gaps');
  const gapReport = byId<HTMLDivElement>(root, 'gap-report');
  const sessionJson = byId<HTMLTextAreaElement>(root, 'session-json');
  const exportButton = byId<HTMLButtonElement>(root, 'export-session');
  const importButton = byId<HTMLButtonElement>(root, 'import-session');

  function showBanner(message: string): void {
    banner.innerHTML = renderErrorBanner(message);
  }

  function clearMessages(): void {
    banner.innerHTML = '';
    incidentMessage.textContent = '';
    gapMessage.textContent = '';
  }

  function routeError(outcome: OpOutcome): void {
    if (outcome.status !== 'error') {
      return;
    }
    if (outcome.field === 'incident') {
      incidentMessage.textContent = outcome.message;
    } else if (outcome.field === 'gap') {
      gapMessage.textContent = outcome.message;
    } else {
      showBanner(outcome.message);
    }
  }

  function syncControls(): void {
    const explicit = parseTechniqueEntry(gapEntry.value);
    refreshButton.disabled = !canQueryGaps(state, explicit);
    gapPanel.classList.toggle('panel-disabled', refreshButton.disabled);
    candidatesPanel.classList.toggle('panel-disabled', !canRecordVerdicts(state));
  }

  function drawCandidates(): void {
    if (state.triage === null) {
      candidatesPanel.innerHTML =
        '<p class="empty">Submit an incident to rank technique candidates.</p>';
    } else {
      candidatesPanel.innerHTML = renderCandidates(state.triage, state.verdicts);
    }
    syncControls();
  }

  function drawGaps(): void {
    if (state.gap === null) {
      gapReport.innerHTML =
        '<p class="empty">Confirm candidates (or enter technique ids) and refresh.</p>';
    } else {
      gapReport.innerHTML = renderGapReport(state.gap);
    }
    syncControls();
  }

  function drawProfile(controls: CatalogControl[]): void {
    profilePanel.innerHTML = controls
      .map((c) => {
        const checked = state.implementedControls.includes(c.id) ? ' checked' : '';
        return (
          `<label class="profile-row" title="${escapeHtml(c.description)}">` +
          `<input type="checkbox" data-control-id="${escapeHtml(c.id)}"${checked}>` +
          `<span>${escapeHtml(c.id)}</span> ${escapeHtml(c.title)}</label>`
        );
      })
      .join('');
  }

  async function maybeRefreshGaps(): Promise<void> {
    if (canQueryGaps(state, parseTechniqueEntry(gapEntry.value))) {
      const outcome = await controller.refreshGaps(gapEntry.value);
      routeError(outcome);
      if (outcome.status === 'done') {
        drawGaps();
      }
    }
  }

  submitButton.addEventListener('click', async () => {
    clearMessages();
    const outcome = await controller.submitIncident(incidentText.value, {
      k: optionalNumber(optK),
      threshold: optionalNumber(optThreshold),
    });
    routeError(outcome);
    if (outcome.status === 'done') {
      drawCandidates();
    }
  });

  candidatesPanel.addEventListener('click', (event) => {
    const target = (event.target as HTMLElement).closest<HTMLButtonElement>('[data-verdict-action]');
    if (target === null) {
      return;
    }
    try {
      setVerdict(
        state,
        target.dataset.forTechnique ?? '',
        target.dataset.verdictAction as Verdict,
      );
    } catch (err) {
      if (err instanceof SessionError) {
        showBanner(err.message);
        return;
      }
      throw err;
    }
    drawCandidates();
  });

  profilePanel.addEventListener('change', (event) => {
    const target = event.target as HTMLInputElement;
    const controlId = target.dataset.controlId;
    if (controlId === undefined) {
      return;
    }
    toggleControl(state, controlId);
    void maybeRefreshGaps();
  });

  gapEntry.addEventListener('input', syncControls);

  refreshButton.addEventListener('click', async () => {
    clearMessages();
    const outcome = await controller.refreshGaps(gapEntry.value);
    routeError(outcome);
    if (outcome.status === 'done') {
      drawGaps();
    }
  });

  exportButton.addEventListener('click', () => {
    sessionJson.value = controller.exportJson();
  });

  importButton.addEventListener('click', () => {
    clearMessages();
    const outcome = controller.importSession(sessionJson.value);
    routeError(outcome);
    if (outcome.status === 'done') {
      incidentText.value = state.incidentText;
      drawCandidates();
      drawGaps();
      profilePanel
        .querySelectorAll<HTMLInputElement>('input[data-control-id]')
        .forEach((box) => {
          box.checked = state.implementedControls.includes(box.dataset.controlId ?? '');
        });
    }
  });

  drawCandidates();
  drawGaps();

  void client
    .health()
    .then((health) => {
      healthLine.textContent =
        `model ${health.default_model} · ${health.controls} controls · ` +
        `${health.techniques} techniques · ${health.metric_specs} metric specs`;
    })
    .catch(() => {
      showBanner('Gateway is unreachable: health check failed.');
    });

  void client
    .controls()
    .then(drawProfile)
    .catch(() => {
      showBanner('Could not load the control catalog for the profile panel.');
    });

  return controller;
}

/** Entry point for the served page. */
export function bootConsole(): void {
  const root = document.getElementById('app');
  if (root === null) {
    throw new Error('console page has no #app element');
  }
  initConsole(root, createApiClient(''));
}
