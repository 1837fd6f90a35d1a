/**
 * Typed client for the runtime's JSON endpoints.
 *
 * Every helper resolves with the parsed body on success and throws ApiError
 * on HTTP failure, except where a non-2xx status is part of the contract
 * (a rejected location fix comes back as 422 with the same result shape).
 */

import type {
  DeviceRow,
  DevicesResponse,
  EnergyReport,
  EventsResponse,
  LocationResult,
  PoliciesView,
  PresenceView,
  RuleRow,
  SwitchResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly body: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type RequestOptions = {
  body?: unknown;
  // statuses the caller treats as a normal answer, not a failure
  soft?: number[];
  signal?: AbortSignal;
};

export class ApiClient {
  constructor(
    readonly base: string = "",
    readonly token: string | null = null,
  ) {}

  private async request<T>(method: string, path: string, opts: RequestOptions = {}): Promise<T> {
    const headers: Record<string, string> = { Accept: "application/json" };
    if (opts.body !== undefined) headers["Content-Type"] = "application/json";
    // the server only checks credentials on mutating verbs
    if (this.token !== null && method !== "GET") {
      headers["Authorization"] = `Bearer ${this.token}`;
    }
    const res = await fetch(`${this.base}${path}`, {
      method,
      headers,
      body: opts.body === undefined ? undefined : JSON.stringify(opts.body),
      signal: opts.signal ?? null,
    });
    let doc: unknown = null;
    try {
      doc = await res.json();
    } catch {
      doc = null;
    }
    if (!res.ok && !(opts.soft ?? []).includes(res.status)) {
      const body = (doc ?? {}) as Record<string, unknown>;
      const message = typeof body.error === "string" ? body.error : `HTTP ${res.status}`;
      throw new ApiError(res.status, message, body);
    }
    return doc as T;
  }

  async devices(): Promise<DeviceRow[]> {
    const doc = await this.request<DevicesResponse>("GET", "/api/devices");
    return doc.devices;
  }

  presence(user: string): Promise<PresenceView> {
    return this.request("GET", `/api/presence/${encodeURIComponent(user)}`);
  }

  policies(): Promise<PoliciesView> {
    return this.request("GET", "/api/policies");
  }

  energyReport(window?: { from?: string; to?: string }): Promise<EnergyReport> {
    const query = new URLSearchParams();
    if (window?.from) query.set("from", window.from);
    if (window?.to) query.set("to", window.to);
    const qs = query.toString();
    return this.request("GET", `/api/report/energy${qs ? `?${qs}` : ""}`);
  }

  setDeviceState(id: string, on: boolean): Promise<SwitchResult> {
    return this.request("POST", `/api/devices/${encodeURIComponent(id)}/state`, {
      body: { state: on ? "on" : "off" },
    });
  }

  postLocation(
    user: string,
    fix: { nmea?: string; lat?: number; lon?: number },
  ): Promise<LocationResult> {
    return this.request("POST", "/api/location", {
      body: { user, ...fix },
      soft: [422],
    });
  }

  setUserMode(user: string, mode: string | { name: string; fractions: Record<string, number> }) {
    return this.request<Record<string, unknown>>(
      "POST",
      `/api/users/${encodeURIComponent(user)}/mode`,
      { body: { mode } },
    );
  }

  putRule(rule: RuleRow): Promise<Record<string, unknown>> {
    const { id, ...body } = rule;
    return this.request("PUT", `/api/policies/${encodeURIComponent(id)}`, { body });
  }

  events(since: number, waitSeconds = 0, signal?: AbortSignal): Promise<EventsResponse> {
    const query = new URLSearchParams({ since: String(since) });
    if (waitSeconds > 0) query.set("wait", String(waitSeconds));
    return this.request("GET", `/api/events?${query.toString()}`, { signal });
  }
}
