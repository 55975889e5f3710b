import type {
  ActivityView,
  Label,
  MetricsPayload,
  ProcessSummary,
  RunManifest,
  RunPayload,
  StepView,
} from "./types.js";
import { LABELS } from "./types.js";
import { LABEL_COLORS, LABEL_TITLES, labelClass } from "./labels.js";
import type { ApiRequestError } from "./api.js";
import type { RunDiff } from "./viewmodel.js";
import {
  distributionSegments,
  formatPercent,
  formatScore,
  formatServicePercent,
  stepCount,
  wasteSummary,
} from "./viewmodel.js";

/**
 * HTML renderers for the review screens.
 *
 * Each function maps a service payload to a markup string and nothing
 * else: no fetching, no state, no arithmetic beyond percent formatting
 * (which lives in the view-model helpers). The thin browser shell owns
 * event wiring via the data-action attributes emitted here.
 */

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function chip(label: Label | null): string {
  if (label === null) {
    return `<span class="chip chip-pending" title="not classified">&mdash;</span>`;
  }
  const style = `--chip-color: ${LABEL_COLORS[label]}`;
  return `<span class="${labelClass(label)}" style="${style}" title="${LABEL_TITLES[label]}">${label}</span>`;
}

export function renderProcessList(processes: ProcessSummary[], activeId?: string): string {
  if (processes.length === 0) {
    return `<p class="empty">No processes uploaded yet. POST BPMN XML to /api/v1/processes to add one.</p>`;
  }
  const items = processes
    .map((p) => {
      const active = p.process_id === activeId ? " active" : "";
      const gold = p.has_gold ? `<span class="tag">gold</span>` : "";
      return (
        `<li class="process-row${active}" data-action="open-process" data-process="${escapeHtml(p.process_id)}">` +
        `<span class="name">${escapeHtml(p.name)}</span>` +
        `<span class="meta">${p.activity_count} activities</span>${gold}</li>`
      );
    })
    .join("");
  return `<ul class="process-list">${items}</ul>`;
}

export function renderRunList(runs: RunManifest[], activeId?: string): string {
  if (runs.length === 0) {
    return `<p class="empty">No runs for this process yet.</p>`;
  }
  const items = runs
    .map((r) => {
      const active = r.run_id === activeId ? " active" : "";
      const health =
        r.activities_ok === r.activities_total
          ? `<span class="tag ok">ok</span>`
          : `<span class="tag warn">${r.activities_ok}/${r.activities_total} ok</span>`;
      return (
        `<li class="run-row${active}" data-action="open-run" data-run="${escapeHtml(r.run_id)}">` +
        `<span class="name">rev ${r.revision} &middot; ${escapeHtml(r.run_id)}</span>` +
        `<span class="meta">${escapeHtml(r.vaa_label || "zero-shot")} &middot; ${escapeHtml(r.provider_label)}</span>` +
        `${health}</li>`
      );
    })
    .join("");
  return `<ul class="run-list">${items}</ul>`;
}

export function renderDistributionBar(run: RunPayload): string {
  const segments = distributionSegments(run.distribution);
  const total = segments.reduce((acc, s) => acc + s.count, 0);
  if (total === 0) {
    return `<div class="distribution empty">No labeled steps.</div>`;
  }
  const parts = segments
    .filter((s) => s.count > 0)
    .map(
      (s) =>
        `<div class="segment segment-${s.label.toLowerCase()}" style="width: ${s.percentText}; background: ${s.color}" ` +
        `title="${s.label}: ${s.count} steps">${s.label} ${s.percentText}</div>`,
    )
    .join("");
  const legend = segments
    .map((s) => `<span class="legend-item">${chip(s.label)} ${s.count} (${s.percentText})</span>`)
    .join(" ");
  return `<div class="distribution"><div class="bar">${parts}</div><div class="legend">${legend}</div></div>`;
}

function labelPicker(runId: string, step: StepView): string {
  const options = LABELS.map((candidate) => {
    const current = candidate === step.label ? " current" : "";
    return (
      `<button class="pick pick-${candidate.toLowerCase()}${current}" data-action="override-label" ` +
      `data-run="${escapeHtml(runId)}" data-step="${escapeHtml(step.step_id)}" data-label="${candidate}">${candidate}</button>`
    );
  }).join("");
  return `<span class="label-picker">${options}</span>`;
}

function renderStepRow(runId: string, step: StepView, changed?: string): string {
  const changedClass = changed ? ` diff-changed diff-${changed}` : "";
  const justification = step.justification
    ? `<div class="justification">${escapeHtml(step.justification)}</div>`
    : "";
  return (
    `<tr class="step-row${changedClass}" data-step="${escapeHtml(step.step_id)}">` +
    `<td class="ordinal">${step.ordinal}</td>` +
    `<td class="text"><div class="step-text">${escapeHtml(step.text)}</div>` +
    `<button class="link" data-action="edit-step" data-run="${escapeHtml(runId)}" ` +
    `data-step="${escapeHtml(step.step_id)}">edit</button></td>` +
    `<td class="label">${chip(step.label)}${justification}</td>` +
    `<td class="actions">${labelPicker(runId, step)}</td></tr>`
  );
}

function renderActivity(runId: string, activity: ActivityView, diff?: RunDiff): string {
  const ok = activity.status === "Ok";
  const badge = ok
    ? `<span class="tag ok">Ok</span>`
    : `<span class="tag warn">${escapeHtml(activity.status)}</span>`;
  const rows = activity.steps
    .map((s) => renderStepRow(runId, s, diff?.changes.get(s.step_id)))
    .join("");
  const body = activity.steps.length
    ? `<table class="steps"><thead><tr><th>#</th><th>Step</th><th>Label</th><th>Override</th></tr></thead>` +
      `<tbody>${rows}</tbody></table>`
    : `<p class="empty">No steps; the phase that produces them failed for this activity.</p>`;
  return (
    `<section class="activity" data-activity="${escapeHtml(activity.activity_id)}">` +
    `<header><h3>${escapeHtml(activity.activity_name)}</h3>${badge}` +
    `<button class="link" data-action="reanalyze" data-run="${escapeHtml(runId)}" ` +
    `data-activity="${escapeHtml(activity.activity_id)}">re-analyze</button></header>` +
    `${body}</section>`
  );
}

export function renderRunHeader(run: RunPayload): string {
  const parent = run.parent_run
    ? `<a class="link" data-action="open-run" data-run="${escapeHtml(run.parent_run)}" href="#/runs/${escapeHtml(run.parent_run)}">parent rev ${run.revision - 1}</a>`
    : `<span class="meta">original analysis</span>`;
  const child = run.child_run
    ? `<a class="link newer" data-action="open-run" data-run="${escapeHtml(run.child_run)}" href="#/runs/${escapeHtml(run.child_run)}">newer revision available</a>`
    : "";
  const note = run.review_note
    ? `<p class="review-note">Note: ${escapeHtml(run.review_note)}</p>`
    : "";
  const id = encodeURIComponent(run.run_id);
  const exports =
    `<a class="link" href="/api/v1/runs/${id}/export?format=json" download>export json</a> ` +
    `<a class="link" href="/api/v1/runs/${id}/export?format=csv" download>export csv</a>`;
  return (
    `<header class="run-header"><h2>${escapeHtml(run.process_name)}</h2>` +
    `<p class="meta">run ${escapeHtml(run.run_id)} &middot; revision ${run.revision} &middot; ` +
    `${stepCount(run)} steps &middot; provider ${escapeHtml(run.provider_label)}</p>` +
    `<p class="meta">${parent} ${child} ${exports}</p>${note}` +
    `<p class="waste">${escapeHtml(wasteSummary(run))}</p></header>`
  );
}

/**
 * The full run view: header, distribution bar, then every activity with
 * its steps, labels and justifications. When a parent payload is supplied
 * the rows that differ from it are highlighted.
 */
export function renderRun(run: RunPayload, diff?: RunDiff): string {
  const activities = run.activities.map((a) => renderActivity(run.run_id, a, diff)).join("");
  const removed =
    diff && diff.removed.length
      ? `<section class="removed"><h3>Removed since parent</h3><ul>` +
        diff.removed
          .map((r) => `<li class="diff-changed diff-removed">${chip(r.label)} ${escapeHtml(r.text)}</li>`)
          .join("") +
        `</ul></section>`
      : "";
  return (
    `<article class="run-view">${renderRunHeader(run)}${renderDistributionBar(run)}` +
    `${activities}${removed}</article>`
  );
}

export function renderMetricsPanel(metrics: MetricsPayload): string {
  const labels = metrics.confusion.labels;
  const header = labels.map((l) => `<th>${escapeHtml(l)}</th>`).join("");
  const rows = metrics.confusion.counts
    .map((row, i) => {
      const cells = row
        .map(
          (count, j) =>
            `<td>${count}<span class="pct">${formatServicePercent(metrics.confusion.row_percentages[i]?.[j] ?? 0)}</span></td>`,
        )
        .join("");
      return `<tr><th>${escapeHtml(labels[i] ?? "")}</th>${cells}</tr>`;
    })
    .join("");
  const f1Rows = Object.entries(metrics.f1.per_class)
    .map(
      ([name, line]) =>
        `<tr><th>${escapeHtml(name)}</th><td>${formatScore(line.precision)}</td>` +
        `<td>${formatScore(line.recall)}</td><td>${formatScore(line.f1)}</td><td>${line.support}</td></tr>`,
    )
    .join("");
  const alignment = Object.entries(metrics.alignment.counts)
    .map(
      ([category, count]) =>
        `<li>${escapeHtml(category)}: ${count} (${formatServicePercent(metrics.alignment.percentages[category] ?? 0)})</li>`,
    )
    .join("");
  return (
    `<section class="metrics"><h3>Against ground truth</h3>` +
    `<p class="meta">${metrics.scored_steps} scored &middot; ${metrics.unmatched_steps} unmatched &middot; ` +
    `${metrics.ambiguous_steps} ambiguous &middot; ${metrics.alignment.total_generated} generated vs ` +
    `${metrics.alignment.total_ground_truth} ground-truth steps</p>` +
    `<table class="confusion"><caption>Gold rows vs predicted columns</caption>` +
    `<thead><tr><th></th>${header}</tr></thead><tbody>${rows}</tbody></table>` +
    `<table class="f1"><thead><tr><th></th><th>Precision</th><th>Recall</th><th>F1</th><th>Support</th></tr></thead>` +
    `<tbody>${f1Rows}</tbody></table>` +
    `<p class="macro">Macro F1 ${formatScore(metrics.f1.macro)}</p>` +
    `<ul class="alignment">${alignment}</ul></section>`
  );
}

/**
 * Failure banner. Conflicts mean a newer revision exists, so the
 * affordance is a reload; everything else gets a retry button.
 */
export function renderError(error: ApiRequestError): string {
  const action =
    error.code === "RUN_CONFLICT"
      ? `<button class="link" data-action="reload-run">reload latest revision</button>`
      : `<button class="link" data-action="retry">retry</button>`;
  const hint =
    error.code === "RUN_CONFLICT"
      ? `<p class="hint">Someone already revised this run; reload to edit the newest revision.</p>`
      : "";
  return (
    `<div class="error-banner" role="alert"><span class="code">${escapeHtml(error.code)}</span> ` +
    `<span class="message">${escapeHtml(error.message)}</span> ${action}${hint}</div>`
  );
}

export { formatPercent };
