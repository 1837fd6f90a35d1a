/**
 * Minimal in-node stand-in for the runtime's HTTP surface.
 *
 * It implements just enough of the documented endpoints for the client and
 * feed tests to run hermetically: a device table with the same switch
 * refusals (404 unknown, 403 exempt, 409 mandated), and a long-polling event
 * feed fed by pushEvent(). `sloppy` makes /api/events ignore `since` and
 * return the whole log, for exercising client-side deduplication.
 */

import http from "node:http";
import type { AddressInfo } from "node:net";
import type { DeviceRow, EventRecord } from "../src/types.js";

export type StubDevice = DeviceRow & { mandated?: boolean };

export type SeenRequest = {
  method: string;
  path: string;
  auth: string | null;
  body: unknown;
};

export type Stub = {
  url: string;
  port: number;
  requests: SeenRequest[];
  events: EventRecord[];
  pushEvent: (kind: string, payload: Record<string, unknown>) => EventRecord;
  failNextEvents: (count: number) => void;
  close: () => Promise<void>;
};

export type StubOptions = {
  devices?: StubDevice[];
  token?: string;
  report?: unknown;
  sloppy?: boolean;
};

const DEFAULT_REPORT = {
  deployment: "stub",
  window: { from: "2011-10-12T00:00:00", to: "2011-10-13T00:00:00" },
  comparison: {
    sites: {},
    combined: {
      actual_kwh: 7.5,
      modes: {
        frugal: { estimate_kwh: 7.4, ratio: 7.5 / 7.4 },
        moderate: { estimate_kwh: 10.1, ratio: 7.5 / 10.1 },
        luxury: { estimate_kwh: 17.7, ratio: 7.5 / 17.7 },
      },
    },
  },
  rollup: {},
};

export function startStub(opts: StubOptions = {}): Promise<Stub> {
  const devices = new Map<string, StubDevice>();
  for (const row of opts.devices ?? []) devices.set(row.id, { ...row });

  const events: EventRecord[] = [];
  const requests: SeenRequest[] = [];
  let failEvents = 0;
  type Waiter = { since: number; respond: () => void; timer: NodeJS.Timeout };
  const waiters = new Set<Waiter>();

  const record = (kind: string, payload: Record<string, unknown>): EventRecord => {
    const row: EventRecord = {
      seq: events.length + 1,
      at: new Date().toISOString(),
      kind,
      payload,
    };
    events.push(row);
    for (const w of [...waiters]) {
      if (row.seq > w.since) {
        waiters.delete(w);
        clearTimeout(w.timer);
        w.respond();
      }
    }
    return row;
  };

  const json = (res: http.ServerResponse, status: number, body: unknown) => {
    const text = JSON.stringify(body);
    res.writeHead(status, { "Content-Type": "application/json" });
    res.end(text);
  };

  const eventsAfter = (since: number) =>
    opts.sloppy ? [...events] : events.filter((e) => e.seq > since);

  const respondEvents = (res: http.ServerResponse, since: number) => {
    const rows = eventsAfter(since);
    const tail = events.length > 0 ? events[events.length - 1].seq : since;
    json(res, 200, { events: rows, next: rows.length > 0 ? tail : since });
  };

  const server = http.createServer((req, res) => {
    res.on("error", () => {});
    const url = new URL(req.url ?? "/", "http://stub");
    const chunks: Buffer[] = [];
    req.on("data", (c) => chunks.push(c));
    req.on("end", () => {
      const raw = Buffer.concat(chunks).toString("utf-8");
      const body = raw ? JSON.parse(raw) : null;
      requests.push({
        method: req.method ?? "?",
        path: url.pathname + url.search,
        auth: req.headers.authorization ?? null,
        body,
      });

      if (opts.token && req.method !== "GET") {
        if (req.headers.authorization !== `Bearer ${opts.token}`) {
          return json(res, 401, { error: "missing or wrong bearer token" });
        }
      }

      if (req.method === "GET" && url.pathname === "/api/devices") {
        return json(res, 200, { devices: [...devices.values()] });
      }

      const switchMatch = url.pathname.match(/^\/api\/devices\/([^/]+)\/state$/);
      if (req.method === "POST" && switchMatch) {
        const id = decodeURIComponent(switchMatch[1]);
        const row = devices.get(id);
        if (!row) return json(res, 404, { error: `unknown device '${id}'` });
        if (row.exempt) {
          return json(res, 403, { error: `device '${id}' is exempt from remote control` });
        }
        if (row.mandated) {
          return json(res, 409, {
            error: "an organizational rule currently mandates the opposite state",
            provenance: [["office-building", "org:curfew"]],
          });
        }
        const on = body?.state === "on";
        row.on = on;
        record("DeviceCommand", { device: id, state: on ? "ON" : "OFF", origin: "api" });
        record("DeviceReply", { device: id, line: `OK ${id} ${on ? "ON" : "OFF"}` });
        return json(res, 200, { ok: true, device: id, on });
      }

      if (req.method === "POST" && url.pathname === "/api/location") {
        if (body?.lat === 0 && body?.lon === 0) {
          return json(res, 422, { accepted: false, reason: "no_lock", events: [], commands: [] });
        }
        return json(res, 200, { accepted: true, reason: null, events: [], commands: [] });
      }

      if (req.method === "GET" && url.pathname === "/api/report/energy") {
        return json(res, 200, opts.report ?? DEFAULT_REPORT);
      }

      if (req.method === "GET" && url.pathname === "/api/events") {
        if (failEvents > 0) {
          failEvents -= 1;
          return json(res, 500, { error: "synthetic failure" });
        }
        const since = Number(url.searchParams.get("since") ?? "0");
        const wait = Number(url.searchParams.get("wait") ?? "0");
        if (eventsAfter(since).length > 0 || wait <= 0) {
          return respondEvents(res, since);
        }
        const waiter: Waiter = {
          since,
          respond: () => respondEvents(res, since),
          timer: setTimeout(() => {
            waiters.delete(waiter);
            respondEvents(res, since);
          }, wait * 1000),
        };
        waiters.add(waiter);
        res.on("close", () => {
          waiters.delete(waiter);
          clearTimeout(waiter.timer);
        });
        return;
      }

      return json(res, 404, { error: `no route for ${req.method} ${url.pathname}` });
    });
  });

  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const port = (server.address() as AddressInfo).port;
      resolve({
        url: `http://127.0.0.1:${port}`,
        port,
        requests,
        events,
        pushEvent: record,
        failNextEvents: (count) => {
          failEvents = count;
        },
        close: () =>
          new Promise<void>((done) => {
            for (const w of waiters) {
              clearTimeout(w.timer);
              w.respond();
            }
            waiters.clear();
            server.close(() => done());
            server.closeAllConnections();
          }),
      });
    });
  });
}
