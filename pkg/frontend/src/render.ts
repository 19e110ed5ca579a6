import type { GapReport, TriageCandidate, TriageResult, Verdict } from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

/** Display form of a payload score; formatting only, never rescoring. */
export function formatScore(score: number): string {
  return score.toFixed(4);
}

function verdictButton(techniqueId: string, verdict: Verdict, current: Verdict): string {
  const active = verdict === current ? ' active' : '';
  const label = verdict === 'confirmed' ? 'Confirm' : verdict === 'rejected' ? 'Reject' : 'Pending';
  return (
    `<button class="verdict-btn verdict-${verdict}${active}"` +
    ` data-verdict-action="${verdict}" data-for-technique="${escapeHtml(techniqueId)}">` +
    `${label}</button>`
  );
}

function candidateRow(entry: TriageCandidate, rank: number, verdict: Verdict): string {
  const id = escapeHtml(entry.technique_id);
  // The review badge mirrors the payload's flagged field verbatim; the
  // console never re-derives it from score and threshold.
  const badge = entry.flagged ? '<span class="flag-badge">review</span>' : '';
  const warning = entry.warning
    ? `<div class="candidate-warning">${escapeHtml(entry.warning)}</div>`
    : '';
  const controls = entry.controls
    .map((c) => `<span class="control-chip" title="${escapeHtml(c.title)}">${escapeHtml(c.id)}</span>`)
    .join('');
  return `
    <li class="candidate verdict-state-${verdict}" data-technique-id="${id}" data-flagged="${entry.flagged}">
      <div class="candidate-head">
        <span class="rank">${rank}</span>
        <span class="technique-id">${id}</span>
        <span class="technique-name">${escapeHtml(entry.name)}</span>
        <span class="score">${formatScore(entry.score)}</span>
        ${badge}
      </div>
      <div class="candidate-controls">${controls}</div>
      ${warning}
      <div class="candidate-verdicts">
        ${verdictButton(entry.technique_id, 'confirmed', verdict)}
        ${verdictButton(entry.technique_id, 'rejected', verdict)}
        ${verdictButton(entry.technique_id, 'pending', verdict)}
      </div>
    </li>`;
}

/**
 * Candidate list in the payload's own order (the gateway ranks by
 * descending score; the console does not re-sort).
 */
export function renderCandidates(
  triage: TriageResult,
  verdicts: Record<string, Verdict>,
): string {
  if (triage.ranked.length === 0) {
    return '<p class="empty">No candidates returned.</p>';
  }
  const rows = triage.ranked
    .map((entry, i) => candidateRow(entry, i + 1, verdicts[entry.technique_id] ?? 'pending'))
    .join('');
  const overall = triage.flagged_overall
    ? '<p class="overall-flag">Top candidate below threshold: review the whole list.</p>'
    : '';
  return (
    `<p class="triage-meta">model <strong>${escapeHtml(triage.model)}</strong>` +
    ` · k ${triage.k} · threshold ${triage.threshold}</p>` +
    overall +
    `<ol class="candidates">${rows}</ol>`
  );
}

function gapRow(gap: GapReport['gaps'][number]): string {
  const techniques = gap.techniques
    .map((t) => `<span class="technique-chip">${escapeHtml(t)}</span>`)
    .join('');
  const metrics =
    gap.metrics.length === 0
      ? '<span class="no-metrics">no metric specs</span>'
      : gap.metrics
          .map(
            (m) =>
              `<code class="metric-formula" data-spec-index="${m.spec_index}">` +
              `${escapeHtml(m.formula)}</code>`,
          )
          .join('');
  return `
    <li class="gap" data-control-id="${escapeHtml(gap.control.id)}">
      <div class="gap-head">
        <span class="control-id">${escapeHtml(gap.control.id)}</span>
        <span class="control-title">${escapeHtml(gap.control.title)}</span>
      </div>
      <div class="gap-provenance">Demanded by: ${techniques}</div>
      <div class="gap-metrics">Metrics: ${metrics}</div>
    </li>`;
}

/** Gap report exactly as the gateway returned it. */
export function renderGapReport(report: GapReport): string {
  const required = report.required_controls
    .map((id) => `<span class="control-chip">${escapeHtml(id)}</span>`)
    .join('');
  const implemented =
    report.implemented_controls.length === 0
      ? '<em>none</em>'
      : report.implemented_controls
          .map((id) => `<span class="control-chip implemented">${escapeHtml(id)}</span>`)
          .join('');
  const gaps =
    report.gaps.length === 0
      ? '<p class="empty" id="no-gaps">No gaps: every required control is implemented.</p>'
      : `<ol class="gaps">${report.gaps.map(gapRow).join('')}</ol>`;
  const warnings =
    report.warnings.length === 0
      ? ''
      : `<ul class="gap-warnings">${report.warnings
          .map((w) => `<li>${escapeHtml(w)}</li>`)
          .join('')}</ul>`;
  return (
    `<div class="gap-summary">` +
    `<div>Observed: ${report.observed_techniques.map(escapeHtml).join(', ') || '<em>none</em>'}</div>` +
    `<div>Required: ${required || '<em>none</em>'}</div>` +
    `<div>Implemented: ${implemented}</div>` +
    `</div>` +
    gaps +
    warnings
  );
}

export function renderErrorBanner(message: string): string {
  return `<div class="error-banner" role="alert">${escapeHtml(message)}</div>`;
}
