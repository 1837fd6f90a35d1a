/**
 * Wire types for the deployment HTTP API.
 *
 * These mirror the JSON the runtime serves verbatim; field names follow the
 * server's snake_case so payloads can be used without reshaping.
 */

export type DeviceRow = {
  id: string;
  name: string;
  building: string;
  on: boolean;
  exempt: boolean;
  watts: number;
};

export type DevicesResponse = { devices: DeviceRow[] };

export type FenceState = { status: string; streak: number };

export type PresenceView = {
  user: string;
  mode: string | null;
  fences: Record<string, FenceState>;
  last_fix: { lat: number; lon: number; at: string } | null;
};

export type LocationResult = {
  accepted: boolean;
  reason: string | null;
  events: { fence: string; kind: string }[];
  commands: { device: string; on: boolean; result: string }[];
};

export type SwitchResult = {
  ok: boolean;
  device: string;
  on: boolean;
};

export type RealmRow = {
  id: string;
  name: string;
  parent: string | null;
  depth: number;
};

export type RuleRow = {
  id: string;
  realm: string;
  devices: string[];
  action: string;
  when: { user: string; fence: string; state: string } | null;
};

export type PoliciesView = {
  realms: RealmRow[];
  rules: RuleRow[];
  modes: Record<string, Record<string, number>>;
  users: Record<string, unknown>;
};

export type ModeComparison = {
  estimate_kwh: number;
  ratio: number | null;
};

export type SiteComparison = {
  actual_kwh: number;
  per_device_kwh: Record<string, number>;
  modes: Record<string, ModeComparison>;
};

export type EnergyReport = {
  deployment: string;
  window: { from: string; to: string };
  comparison: {
    sites: Record<string, SiteComparison>;
    combined: { actual_kwh: number; modes: Record<string, ModeComparison> };
  };
  rollup: Record<string, number>;
};

export type EventRecord = {
  seq: number;
  at: string;
  kind: string;
  payload: Record<string, unknown>;
};

export type EventsResponse = { events: EventRecord[]; next: number };
