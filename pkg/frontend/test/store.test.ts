import { beforeEach, describe, expect, it } from "vitest";

import { DashboardStore, parseAck } from "../src/store.js";
import type { DeviceRow, EventRecord } from "../src/types.js";

const ROWS: DeviceRow[] = [
  { id: "lamp", name: "Desk lamp", building: "home", on: false, exempt: false, watts: 0 },
  { id: "fridge", name: "Refrigerator", building: "home", on: true, exempt: true, watts: 185 },
];

let seq = 0;
function ev(kind: string, payload: Record<string, unknown>): EventRecord {
  seq += 1;
  return { seq, at: `2011-10-12T08:00:${String(seq).padStart(2, "0")}`, kind, payload };
}

describe("DashboardStore", () => {
  let store: DashboardStore;

  beforeEach(() => {
    seq = 0;
    store = new DashboardStore();
    store.loadDevices(ROWS);
  });

  it("applies switch commands from the feed", () => {
    const changed = store.applyEvents([
      ev("DeviceCommand", { device: "lamp", state: "ON", origin: "policy" }),
    ]);
    expect(changed).toEqual(new Set(["lamp"]));
    expect(store.device("lamp")?.on).toBe(true);
  });

  it("applies device acknowledgements and ignores noise lines", () => {
    store.applyEvents([ev("DeviceCommand", { device: "lamp", state: "ON", origin: "api" })]);
    const changed = store.applyEvents([
      ev("DeviceReply", { device: "lamp", line: "OK lamp OFF" }),
      ev("DeviceReply", { device: "lamp", line: "ERR lamp BADCMD" }),
    ]);
    expect(changed).toEqual(new Set(["lamp"]));
    expect(store.device("lamp")?.on).toBe(false);
  });

  it("tracks presence transitions and mode edits", () => {
    store.applyEvents([
      ev("PolicyEdit", { edit: "start", modes: { alex: "frugal" } }),
      ev("Presence", { user: "alex", fence: "office", kind: "enter" }),
      ev("PolicyEdit", { edit: "mode", user: "alex", mode: "luxury" }),
    ]);
    expect(store.presence.get("alex")?.get("office")).toBe("inside");
    expect(store.modes.get("alex")).toBe("luxury");
  });

  it("never hands out a toggle for an exempt device", () => {
    expect(store.beginToggle("fridge")).toBeNull();
    expect(store.beginToggle("toaster")).toBeNull();
  });

  it("flips optimistically and reverts when the request fails", () => {
    const ticket = store.beginToggle("lamp");
    expect(ticket).toEqual({ device: "lamp", desired: true, previous: false });
    expect(store.device("lamp")).toMatchObject({ on: true, pending: true });

    store.settleToggle(ticket!, false);
    expect(store.device("lamp")).toMatchObject({ on: false, pending: false });
  });

  it("refuses a second press while one is in flight", () => {
    const ticket = store.beginToggle("lamp");
    expect(ticket).not.toBeNull();
    expect(store.beginToggle("lamp")).toBeNull();
    store.settleToggle(ticket!, true);
    expect(store.device("lamp")?.pending).toBe(false);
  });

  it("lets the feed outrank a late local failure", () => {
    const ticket = store.beginToggle("lamp");
    // the acknowledgement lands before the request callback settles
    store.applyEvents([ev("DeviceReply", { device: "lamp", line: "OK lamp ON" })]);
    store.settleToggle(ticket!, false);
    expect(store.device("lamp")).toMatchObject({ on: true, pending: false });
  });

  it("remembers when the last event landed", () => {
    store.applyEvents([ev("LedgerAppend", { device: "lamp", wh: 12.5 })]);
    expect(store.lastEventAt).toBe("2011-10-12T08:00:01");
  });
});

describe("parseAck", () => {
  it("reads well-formed acknowledgements", () => {
    expect(parseAck("OK lamp ON")).toEqual({ device: "lamp", on: true });
    expect(parseAck("OK hvac_home OFF")).toEqual({ device: "hvac_home", on: false });
  });

  it("rejects everything else", () => {
    for (const line of ["ERR lamp EXEMPT", "OK lamp", "OK lamp MAYBE", "", "STATE lamp ON"]) {
      expect(parseAck(line)).toBeNull();
    }
  });
});
