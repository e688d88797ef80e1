/** Pure HTML renderers; main.ts owns the DOM and event delegation.
 *
 * Everything rendered is text from the API payloads (ids, scores,
 * presence and quality); there is nothing biometric to draw because raw
 * templates never reach the browser.
 */

import {
  barWidth,
  escapeHtml,
  formatAge,
  formatScore,
  segmentLabel,
} from "./format.js";
import type { CaseView } from "./types.js";
import { SEGMENT_NAMES } from "./types.js";

export interface QueueStateLike {
  cases: CaseView[];
  nextCursor: string | null;
  error: string | null;
  conflict: { caseId: string; message: string } | null;
}

export function renderConflictBanner(
  conflict: { caseId: string; message: string } | null,
): string {
  if (!conflict) return "";
  return `<div class="banner conflict" data-case="${escapeHtml(conflict.caseId)}">
    Decision conflict on ${escapeHtml(conflict.caseId)}: ${escapeHtml(conflict.message)}
    <button data-action="dismiss-conflict">dismiss</button>
  </div>`;
}

export function renderErrorBanner(error: string | null): string {
  if (!error) return "";
  return `<div class="banner error">${escapeHtml(error)}
    <button data-action="retry-refresh">retry</button>
  </div>`;
}

export function renderQueue(state: QueueStateLike, nowMs = Date.now()): string {
  const rows = state.cases
    .map(
      (c) => `<tr data-case="${escapeHtml(c.case_id)}">
      <td><a href="#/cases/${escapeHtml(c.case_id)}">${escapeHtml(c.case_id)}</a></td>
      <td class="score">${formatScore(c.top_score)}</td>
      <td>${c.candidates.length}</td>
      <td>${formatAge(c.created_at, nowMs)}</td>
      <td>
        <button data-action="decide" data-case="${escapeHtml(c.case_id)}" data-decision="Duplicate">Duplicate</button>
        <button data-action="decide" data-case="${escapeHtml(c.case_id)}" data-decision="Unique">Unique</button>
      </td>
    </tr>`,
    )
    .join("\n");
  const empty = `<p class="empty">No pending cases. New flags appear on the next poll.</p>`;
  const more = state.nextCursor
    ? `<button data-action="load-more">load more</button>`
    : "";
  return `${renderConflictBanner(state.conflict)}${renderErrorBanner(state.error)}
  <h2>Pending adjudication queue</h2>
  ${
    state.cases.length === 0
      ? empty
      : `<table class="queue">
    <thead><tr><th>case</th><th>top score</th><th>candidates</th><th>age</th><th>decision</th></tr></thead>
    <tbody>${rows}</tbody></table>${more}`
  }`;
}

function segmentBars(caseView: CaseView): string {
  const candidate = caseView.candidates[0];
  const perSegment = candidate?.per_segment ?? {};
  return SEGMENT_NAMES.map((name) => {
    const present = caseView.probe.presence[name];
    const quality = caseView.probe.quality[name] ?? 0;
    const score = perSegment[name] ?? 0;
    if (!present) {
      return `<div class="segment absent" data-segment="${name}">
        <span class="label">${segmentLabel(name)}</span>
        <span class="bar disabled" title="segment absent"></span>
        <span class="value">absent</span>
      </div>`;
    }
    return `<div class="segment" data-segment="${name}">
      <span class="label">${segmentLabel(name)}</span>
      <span class="bar"><span class="fill" style="width:${barWidth(score)}%"></span></span>
      <span class="value">${formatScore(score)} (q ${quality.toFixed(2)})</span>
    </div>`;
  }).join("\n");
}

export function renderCaseDetail(caseView: CaseView): string {
  const candidates = caseView.candidates
    .map(
      (c, rank) => `<tr>
      <td>${rank + 1}</td><td>${c.gallery_id}</td>
      <td class="score">${formatScore(c.score)}</td>
      <td>${c.effective_weight_sum?.toFixed(2) ?? "-"}</td>
    </tr>`,
    )
    .join("\n");
  const decided = caseView.state !== "Pending";
  const actions = decided
    ? `<p class="state ${caseView.state.toLowerCase()}">Decided: ${caseView.state}
       by ${escapeHtml(caseView.adjudicator ?? "?")}</p>`
    : `<button data-action="decide" data-case="${escapeHtml(caseView.case_id)}" data-decision="Duplicate">Duplicate</button>
       <button data-action="decide" data-case="${escapeHtml(caseView.case_id)}" data-decision="Unique">Unique</button>`;
  return `<h2>${escapeHtml(caseView.case_id)} <span class="state">${caseView.state}</span></h2>
  <p><a href="#/queue">back to queue</a></p>
  <section class="breakdown"><h3>Per-segment match scores (top candidate)</h3>
  ${segmentBars(caseView)}</section>
  <section><h3>Candidates</h3>
  <table class="candidates">
  <thead><tr><th>rank</th><th>gallery id</th><th>fused score</th><th>weight mass</th></tr></thead>
  <tbody>${candidates}</tbody></table></section>
  <section class="actions">${actions}</section>`;
}

export function renderNotFound(caseId: string): string {
  return `<h2>Case not found</h2>
  <p>No case ${escapeHtml(caseId)} exists on this service.</p>
  <p><a href="#/queue">back to queue</a></p>`;
}
