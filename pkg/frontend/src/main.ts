/**
 * Browser entry point: seed the store, start the feed, wire the controls.
 *
 * Everything below talks to the page; the logic it glues together lives in
 * the DOM-free modules so it stays testable from node.
 */

import { ApiClient, ApiError } from "./api.js";
import { chartSvg, layoutComparison } from "./chart.js";
import { startEventFeed } from "./feed.js";
import {
  renderDeviceList,
  renderFeedLine,
  renderPresence,
  renderReportSummary,
  renderRules,
} from "./render.js";
import { DashboardStore } from "./store.js";
import type { EventRecord } from "./types.js";

const FEED_PANE_LIMIT = 40;

const client = new ApiClient("");
const store = new DashboardStore();

const el = (id: string) => document.getElementById(id);

function setStatus(text: string, tone: "ok" | "warn" = "ok"): void {
  const node = el("status");
  if (!node) return;
  node.textContent = text;
  node.className = `status ${tone}`;
}

function redrawDevices(): void {
  const node = el("devices");
  if (node) node.innerHTML = renderDeviceList([...store.devices.values()]);
}

async function redrawPresence(): Promise<void> {
  const node = el("presence");
  if (!node) return;
  const users = [...store.modes.keys()].sort();
  const cards = await Promise.all(
    users.map(async (user) => renderPresence(await client.presence(user))),
  );
  node.innerHTML = cards.join("");
}

async function redrawReport(): Promise<void> {
  const chartNode = el("chart");
  const tableNode = el("report");
  if (!chartNode && !tableNode) return;
  const report = await client.energyReport();
  const combined = report.comparison.combined;
  if (chartNode) {
    chartNode.innerHTML = chartSvg(layoutComparison(combined.actual_kwh, combined.modes));
  }
  if (tableNode) {
    tableNode.innerHTML = renderReportSummary(report);
  }
  const windowNode = el("report-window");
  if (windowNode) {
    windowNode.textContent = `${report.window.from} .. ${report.window.to}`;
  }
}

async function redrawRules(): Promise<void> {
  const node = el("rules");
  if (!node) return;
  const policies = await client.policies();
  node.innerHTML = renderRules(policies.rules);
}

function appendFeedLines(events: EventRecord[]): void {
  const node = el("feed");
  if (!node) return;
  node.insertAdjacentHTML("afterbegin", events.map(renderFeedLine).reverse().join(""));
  while (node.children.length > FEED_PANE_LIMIT) {
    node.removeChild(node.lastChild as Node);
  }
}

function wireSwitches(): void {
  const node = el("devices");
  if (!node) return;
  node.addEventListener("change", async (ev) => {
    const input = ev.target as HTMLInputElement | null;
    const id = input?.dataset?.device;
    if (!input || !id) return;
    const ticket = store.beginToggle(id);
    if (!ticket) {
      redrawDevices();
      return;
    }
    redrawDevices();
    try {
      await client.setDeviceState(id, ticket.desired);
      store.settleToggle(ticket, true);
    } catch (err) {
      store.settleToggle(ticket, false);
      if (err instanceof ApiError && err.status === 409) {
        setStatus("blocked: a standing rule mandates the opposite state", "warn");
      } else {
        setStatus(err instanceof Error ? err.message : "switch failed", "warn");
      }
    }
    redrawDevices();
  });
}

async function boot(): Promise<void> {
  setStatus("connecting…");
  // cursor first, then the snapshot: anything that lands in between is
  // re-delivered by the feed, and re-applying a state is harmless
  const tail = await client.events(0);
  store.applyEvents(tail.events);
  store.loadDevices(await client.devices());
  redrawDevices();
  wireSwitches();
  await Promise.all([redrawPresence(), redrawReport(), redrawRules()]);
  appendFeedLines(tail.events.slice(-FEED_PANE_LIMIT));

  startEventFeed(client, {
    since: tail.next,
    onBatch: (events) => {
      setStatus("live");
      const changed = store.applyEvents(events);
      if (changed.size > 0) redrawDevices();
      appendFeedLines(events);
      const kinds = new Set(events.map((e) => e.kind));
      if (kinds.has("Presence") || kinds.has("PolicyEdit")) void redrawPresence();
      if (kinds.has("PolicyEdit")) void redrawRules();
      if (kinds.has("LedgerAppend")) void redrawReport();
    },
    onError: () => setStatus("reconnecting…", "warn"),
  });
  setStatus("live");
}

boot().catch((err) => {
  setStatus(err instanceof Error ? err.message : "failed to load", "warn");
});
