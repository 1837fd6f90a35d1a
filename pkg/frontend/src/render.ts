/**
 * HTML fragments for the dashboard panes.
 *
 * Pure string builders so they can be asserted on directly. All values that
 * originated outside this page go through escapeHtml before interpolation.
 */

import type { DeviceState } from "./store.js";
import type { EnergyReport, EventRecord, PresenceView, RuleRow } from "./types.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderDeviceRow(row: DeviceState): string {
  const checked = row.on ? " checked" : "";
  // exempt loads must never be switchable from the dashboard
  const disabled = row.exempt ? " disabled" : "";
  const badge = row.exempt
    ? `<span class="badge exempt" title="always powered; not remotely switchable">exempt</span>`
    : "";
  const pending = row.pending ? ` <span class="badge pending">…</span>` : "";
  return `
    <li class="device-row${row.exempt ? " is-exempt" : ""}" data-device="${escapeHtml(row.id)}">
      <label class="switch">
        <input type="checkbox" data-device="${escapeHtml(row.id)}"${checked}${disabled}>
        <span class="slider"></span>
      </label>
      <span class="device-name">${escapeHtml(row.name)}</span>
      ${badge}${pending}
      <span class="device-meta">${escapeHtml(row.building)} · ${row.watts.toFixed(0)} W</span>
    </li>`;
}

export function renderDeviceList(rows: DeviceState[]): string {
  const byBuilding = new Map<string, DeviceState[]>();
  for (const row of rows) {
    const group = byBuilding.get(row.building) ?? [];
    group.push(row);
    byBuilding.set(row.building, group);
  }
  const sections = [...byBuilding.entries()]
    .sort((a, b) => a[0].localeCompare(b[0]))
    .map(
      ([building, group]) => `
      <section class="building">
        <h3>${escapeHtml(building)}</h3>
        <ul class="device-list">${group.map(renderDeviceRow).join("")}</ul>
      </section>`,
    );
  return sections.join("");
}

export function renderPresence(view: PresenceView): string {
  const fences = Object.entries(view.fences)
    .sort((a, b) => a[0].localeCompare(b[0]))
    .map(
      ([fence, state]) => `
      <span class="badge ${state.status === "inside" ? "inside" : "outside"}">
        ${escapeHtml(fence)}: ${escapeHtml(state.status)}</span>`,
    )
    .join("");
  const fix = view.last_fix
    ? `${view.last_fix.lat.toFixed(5)}, ${view.last_fix.lon.toFixed(5)} at ${escapeHtml(view.last_fix.at)}`
    : "no fix yet";
  return `
    <div class="presence-card" data-user="${escapeHtml(view.user)}">
      <h3>${escapeHtml(view.user)}
        <span class="badge mode">${escapeHtml(view.mode ?? "?")}</span></h3>
      <div class="fences">${fences}</div>
      <div class="last-fix">${fix}</div>
    </div>`;
}

export function renderReportSummary(report: EnergyReport): string {
  const combined = report.comparison.combined;
  const rows = Object.entries(combined.modes)
    .sort((a, b) => b[1].estimate_kwh - a[1].estimate_kwh)
    .map(([mode, row]) => {
      const ratio = row.ratio === null ? "n/a" : `${(row.ratio * 100).toFixed(1)}%`;
      return `
      <tr>
        <td>${escapeHtml(mode)}</td>
        <td class="num">${row.estimate_kwh.toFixed(3)}</td>
        <td class="num">${ratio}</td>
      </tr>`;
    })
    .join("");
  return `
    <table class="report-table">
      <thead>
        <tr><th>baseline</th><th class="num">kWh</th><th class="num">measured / baseline</th></tr>
      </thead>
      <tbody>
        <tr class="actual-row">
          <td>measured</td>
          <td class="num">${combined.actual_kwh.toFixed(3)}</td>
          <td class="num"></td>
        </tr>
        ${rows}
      </tbody>
    </table>`;
}

export function renderRules(rules: RuleRow[]): string {
  if (rules.length === 0) return `<p class="empty">no standing rules</p>`;
  const items = rules
    .map((rule) => {
      const when = rule.when
        ? ` when ${escapeHtml(rule.when.user)} ${escapeHtml(rule.when.state)} ${escapeHtml(rule.when.fence)}`
        : "";
      return `
      <li data-rule="${escapeHtml(rule.id)}">
        <code>${escapeHtml(rule.id)}</code>
        <span class="rule-action">${escapeHtml(rule.action)}</span>
        ${rule.devices.map((d) => `<span class="badge">${escapeHtml(d)}</span>`).join("")}
        <span class="rule-when">@ ${escapeHtml(rule.realm)}${when}</span>
      </li>`;
    })
    .join("");
  return `<ul class="rule-list">${items}</ul>`;
}

const FEED_LABELS: Record<string, string> = {
  FixAccepted: "fix",
  FixRejected: "fix rejected",
  Presence: "presence",
  Decision: "decision",
  DeviceCommand: "command",
  DeviceReply: "reply",
  LedgerAppend: "energy",
  PolicyEdit: "policy",
};

export function renderFeedLine(event: EventRecord): string {
  const label = FEED_LABELS[event.kind] ?? event.kind;
  const detail = Object.entries(event.payload)
    .filter(([, v]) => typeof v === "string" || typeof v === "number" || typeof v === "boolean")
    .map(([k, v]) => `${k}=${String(v)}`)
    .join(" ");
  return `
    <li class="feed-line kind-${escapeHtml(event.kind)}">
      <span class="feed-at">${escapeHtml(event.at)}</span>
      <span class="feed-kind">${escapeHtml(label)}</span>
      <span class="feed-detail">${escapeHtml(detail)}</span>
    </li>`;
}
