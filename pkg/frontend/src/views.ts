/**
 * Pure view rendering: state in, HTML string out.
 *
 * No fetching, no timers, no policy computation happens here. In particular
 * every status badge is the gateway's status string rendered verbatim — the
 * only thing the view decides is which *controls* to show, and the Revoke
 * control is gated on the literal status "GRANTED" because revoking anything
 * else would be rejected by the chain anyway.
 */
import type { AuditTrail, PendingItem, PolicyRow, RecordDetail } from "./api.js";

export function escapeHtml(value: string): string {
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

const esc = escapeHtml;

export interface PendingEntry extends PendingItem {
  /** Inline gateway error from the last action on this item, if any. */
  error?: string;
}

export interface PendingViewModel {
  keeper: string;
  items: PendingEntry[];
  /** Set when the last poll failed; the list below it may be stale. */
  offline?: string | null;
}

export function renderPending(vm: PendingViewModel): string {
  const parts: string[] = [];
  parts.push(`<section class="pending-view" data-keeper="${esc(vm.keeper)}">`);
  parts.push(`<h2>Pending access requests</h2>`);
  if (vm.offline) {
    parts.push(`<div class="offline">${esc(vm.offline)}</div>`);
  }
  if (vm.items.length === 0) {
    parts.push(`<div class="empty-state">No pending access requests.</div>`);
  } else {
    parts.push(`<ul class="pending">`);
    for (const item of vm.items) {
      parts.push(
        `<li data-request-id="${esc(item.requestId)}">` +
          `<span class="party">${esc(item.party)}</span> asks ` +
          `<span class="level">${esc(item.level)}</span> on ` +
          `<span class="record">${esc(item.record)}</span>` +
          `<button data-action="grant" data-request-id="${esc(item.requestId)}">Grant</button>` +
          `<button data-action="deny" data-request-id="${esc(item.requestId)}">Deny</button>` +
          (item.error ? `<span class="error">${esc(item.error)}</span>` : "") +
          `</li>`,
      );
    }
    parts.push(`</ul>`);
  }
  parts.push(`</section>`);
  return parts.join("\n");
}

function renderPolicyRow(row: PolicyRow): string {
  const revoke =
    row.status === "GRANTED"
      ? `<button data-action="revoke" data-request-id="${esc(row.requestId)}">Revoke</button>`
      : "";
  return (
    `<tr data-request-id="${esc(row.requestId)}">` +
    `<td class="party">${esc(row.party)}</td>` +
    `<td class="level">${esc(row.level)}</td>` +
    `<td class="status">${esc(row.status)}</td>` +
    `<td class="expiry">${row.expiry === null ? "" : String(row.expiry)}</td>` +
    `<td class="actions">${revoke}</td>` +
    `</tr>`
  );
}

export function renderPolicies(detail: RecordDetail): string {
  const parts: string[] = [];
  parts.push(`<section class="record-view" data-record="${esc(detail.record)}">`);
  parts.push(
    `<h2>${esc(detail.record)}</h2>` +
      `<dl><dt>location</dt><dd>${esc(detail.location)}</dd>` +
      `<dt>status</dt><dd class="status">${esc(detail.status)}</dd>` +
      `<dt>agreement</dt><dd>${esc(detail.agreement)}</dd>` +
      `<dt>keepers</dt><dd>${detail.keepers.map(esc).join(", ")}</dd></dl>`,
  );
  if (detail.policies.length === 0) {
    parts.push(`<div class="empty-state">No access policies for this record.</div>`);
  } else {
    parts.push(
      `<table class="policies"><thead><tr>` +
        `<th>party</th><th>level</th><th>status</th><th>expiry</th><th></th>` +
        `</tr></thead><tbody>`,
    );
    for (const row of detail.policies) {
      parts.push(renderPolicyRow(row));
    }
    parts.push(`</tbody></table>`);
  }
  parts.push(`</section>`);
  return parts.join("\n");
}

export function renderNotFound(what: string): string {
  return `<section class="not-found">Unknown record: ${esc(what)}</section>`;
}

function cell(tx: Record<string, unknown>, field: string): string {
  const value = tx[field];
  return value === undefined || value === null ? "" : esc(String(value));
}

/** Chain-ordered trail, rendered in exactly the order the gateway sent. */
export function renderAudit(trail: AuditTrail): string {
  const parts: string[] = [];
  parts.push(`<section class="audit-view" data-record="${esc(trail.record)}">`);
  parts.push(`<h2>Audit trail for ${esc(trail.record)}</h2>`);
  if (trail.entries.length === 0) {
    parts.push(`<div class="empty-state">No activity recorded.</div>`);
  } else {
    parts.push(`<ol class="audit">`);
    for (const entry of trail.entries) {
      parts.push(
        `<li data-tx-id="${cell(entry.tx, "txId")}">` +
          `<span class="block">#${entry.blockIndex}</span>` +
          `<span class="tag">${cell(entry.tx, "stateTag")}</span>` +
          `<span class="author">${cell(entry.tx, "author")}</span>` +
          `<span class="at">${cell(entry.tx, "timestamp")}</span>` +
          `</li>`,
      );
    }
    parts.push(`</ol>`);
  }
  parts.push(`</section>`);
  return parts.join("\n");
}
