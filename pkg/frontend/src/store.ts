/**
 * Client-side state for the dashboard.
 *
 * The store is a follower of the runtime's event feed: a device snapshot
 * seeds it, then feed records move it forward. Switch presses made in this
 * page flip the row optimistically; the feed (or the request failing)
 * settles them. The feed always wins: once a command or acknowledgement for
 * the device arrives, a late local failure no longer reverts the row.
 */

import type { DeviceRow, EventRecord } from "./types.js";

export type DeviceState = DeviceRow & { pending: boolean };

export type ToggleTicket = { device: string; desired: boolean; previous: boolean };

// feed record payloads this store reads; everything else passes through
type CommandPayload = { device?: unknown; state?: unknown };
type ReplyPayload = { device?: unknown; line?: unknown };
type PresencePayload = { user?: unknown; fence?: unknown; kind?: unknown };
type ModeEditPayload = { edit?: unknown; user?: unknown; mode?: unknown; modes?: unknown };

export class DashboardStore {
  readonly devices = new Map<string, DeviceState>();
  // user -> fence -> "inside" | "outside"
  readonly presence = new Map<string, Map<string, string>>();
  readonly modes = new Map<string, string>();
  lastEventAt: string | null = null;
  private readonly inFlight = new Map<string, ToggleTicket>();

  loadDevices(rows: DeviceRow[]): void {
    this.devices.clear();
    for (const row of rows) {
      this.devices.set(row.id, { ...row, pending: false });
    }
  }

  device(id: string): DeviceState | undefined {
    return this.devices.get(id);
  }

  /** Flip a row optimistically; null if the device cannot be switched from here. */
  beginToggle(id: string): ToggleTicket | null {
    const row = this.devices.get(id);
    if (!row || row.exempt || row.pending) return null;
    const ticket: ToggleTicket = { device: id, desired: !row.on, previous: row.on };
    row.on = ticket.desired;
    row.pending = true;
    this.inFlight.set(id, ticket);
    return ticket;
  }

  /** Settle a local toggle. A failure reverts only if the feed has not spoken since. */
  settleToggle(ticket: ToggleTicket, ok: boolean): void {
    const current = this.inFlight.get(ticket.device);
    if (current !== ticket) return; // superseded by the feed or a newer press
    this.inFlight.delete(ticket.device);
    const row = this.devices.get(ticket.device);
    if (!row) return;
    row.pending = false;
    if (!ok) row.on = ticket.previous;
  }

  /** Apply one feed batch; returns ids of devices whose rows changed. */
  applyEvents(events: EventRecord[]): Set<string> {
    const changed = new Set<string>();
    for (const e of events) {
      this.lastEventAt = e.at;
      switch (e.kind) {
        case "DeviceCommand": {
          const p = e.payload as CommandPayload;
          if (typeof p.device === "string" && (p.state === "ON" || p.state === "OFF")) {
            if (this.setOn(p.device, p.state === "ON")) changed.add(p.device);
          }
          break;
        }
        case "DeviceReply": {
          const p = e.payload as ReplyPayload;
          const ack = typeof p.line === "string" ? parseAck(p.line) : null;
          if (ack && this.setOn(ack.device, ack.on)) changed.add(ack.device);
          break;
        }
        case "Presence": {
          const p = e.payload as PresencePayload;
          if (typeof p.user === "string" && typeof p.fence === "string") {
            const fences = this.presence.get(p.user) ?? new Map<string, string>();
            fences.set(p.fence, p.kind === "enter" ? "inside" : "outside");
            this.presence.set(p.user, fences);
          }
          break;
        }
        case "PolicyEdit": {
          const p = e.payload as ModeEditPayload;
          if (p.edit === "mode" && typeof p.user === "string" && typeof p.mode === "string") {
            this.modes.set(p.user, p.mode);
          } else if (p.edit === "start" && p.modes && typeof p.modes === "object") {
            for (const [user, mode] of Object.entries(p.modes as Record<string, unknown>)) {
              if (typeof mode === "string") this.modes.set(user, mode);
            }
          }
          break;
        }
        default:
          break; // fixes, decisions, and ledger rows feed the activity pane only
      }
    }
    return changed;
  }

  private setOn(id: string, on: boolean): boolean {
    const row = this.devices.get(id);
    if (!row) return false;
    // the feed is authoritative; drop any optimistic ticket for this device
    this.inFlight.delete(id);
    const moved = row.on !== on || row.pending;
    row.on = on;
    row.pending = false;
    return moved;
  }
}

/** Parse a device acknowledgement line ("OK <id> ON|OFF"); null for anything else. */
export function parseAck(line: string): { device: string; on: boolean } | null {
  const cols = line.split(" ");
  if (cols.length !== 3 || cols[0] !== "OK") return null;
  if (cols[2] !== "ON" && cols[2] !== "OFF") return null;
  return { device: cols[1], on: cols[2] === "ON" };
}
