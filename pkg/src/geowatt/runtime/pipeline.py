"""The synchronous control pipeline: ingest -> presence -> policy -> devices -> ledger.

One lock serializes every mutation, so decisions apply in a single logical
queue. Every externally caused change is appended to the event log; the
input-bearing records are sufficient to rebuild the exact state (recover).
"""

from __future__ import annotations

import logging
import threading
from datetime import datetime
from typing import Any, Iterable, Mapping

from ..config import SystemConfig, build_engine, build_fleet
from ..devicenet import DeviceFleet, InProcessLink, parse_reply
from ..energy import EnergyLedger, ModeEstimate, comparison_report, estimate_mode, realm_rollup
from ..errors import ConfigError, ValidationError
from ..geoloc import (
    FixQuality,
    GeoFix,
    NmeaError,
    UnsupportedSentence,
    parse_nmea,
)
from ..policy import Decision, PolicyRule, PresenceCondition, UserMode
from ..presence import PresenceTracker
from .clock import SimClock
from .eventlog import EventKind, EventLog, EventRecord

log = logging.getLogger(__name__)


class Runtime:
    """Owns the trackers, policy engine, fleet link, ledger, and event log."""

    def __init__(
        self,
        config: SystemConfig,
        clock,
        fleet: DeviceFleet | None = None,
        link=None,
        log_path: str | None = None,
    ):
        self.config = config
        self.clock = clock
        self.fleet = fleet if fleet is not None else build_fleet(config, clock.now())
        self.link = link if link is not None else InProcessLink(self.fleet)
        self.engine = build_engine(config)
        self.tracker = PresenceTracker(fences=dict(config.fences))
        self.ledger = EnergyLedger(site_of=config.device_site())
        self.log = EventLog(log_path)
        self._lock = threading.RLock()
        self._closed_through: dict[str, datetime] = {
            d: self.fleet.started_at for d in config.devices
        }
        self.log.append(
            self.clock.now(),
            EventKind.POLICY_EDIT,
            {
                "edit": "start",
                "config": config.name,
                "modes": {u: b.mode for u, b in sorted(config.users.items())},
            },
        )

    # -- helpers -----------------------------------------------------------

    def _ctx(self) -> dict[tuple[str, str], str]:
        ctx: dict[tuple[str, str], str] = {}
        for user in self.config.users:
            for fence_id in self.config.fences:
                ctx[(user, fence_id)] = self.tracker.state_of(user, fence_id).status
        return ctx

    def _states(self) -> dict[str, bool]:
        return {d: self.fleet.state(d) for d in self.config.devices}

    def _advance(self, at: datetime | None) -> datetime:
        now = at if at is not None else self.clock.now()
        self.clock.advance_to(now)
        self.fleet.advance(now)
        return now

    def _send_set(self, device_id: str, on: bool, origin: str, at: datetime,
                  provenance: tuple | None = None) -> dict:
        """Issue one SET over the wire, logging command, reply, and any ledger close."""
        state_word = "ON" if on else "OFF"
        was_on = self.fleet.state(device_id)
        seg_start = self._closed_through[device_id]
        reply = self.link.send(f"SET {device_id} {state_word}")
        payload: dict[str, Any] = {"device": device_id, "state": state_word, "origin": origin}
        if provenance is not None:
            payload["provenance"] = [list(p) for p in provenance]
        self.log.append(at, EventKind.DEVICE_COMMAND, payload)
        self.log.append(at, EventKind.DEVICE_REPLY, {"device": device_id, "line": reply})
        parsed = parse_reply(reply)
        if parsed["kind"] == "ok" and was_on != on:
            # the previous segment just closed; meter and ledger it
            wh = self.fleet.meter_read(device_id, seg_start, at)
            if was_on:
                self.ledger.append(device_id, seg_start, at, wh)
                self.log.append(
                    at,
                    EventKind.LEDGER_APPEND,
                    {
                        "device": device_id,
                        "t0": seg_start.isoformat(),
                        "t1": at.isoformat(),
                        "wh": wh,
                    },
                )
            self._closed_through[device_id] = at
        return parsed

    def _run_commands(self, commands, origin: str, at: datetime) -> list[dict]:
        sent = []
        for device_id, on, decision in commands:
            parsed = self._send_set(device_id, on, origin, at, provenance=decision.provenance)
            sent.append({"device": device_id, "on": on, "result": parsed["kind"]})
        return sent

    def _log_decisions(self, decisions: Iterable[Decision], at: datetime) -> None:
        for d in decisions:
            self.log.append(
                at,
                EventKind.DECISION,
                {
                    "device": d.device_id,
                    "state": "ON" if d.turn_on else "OFF",
                    "provenance": [list(p) for p in d.provenance],
                },
            )

    # -- pipeline entry points ----------------------------------------------

    def post_location(
        self,
        user: str,
        nmea: str | None = None,
        lat: float | None = None,
        lon: float | None = None,
        at: datetime | None = None,
    ) -> dict:
        """Ingest one location report and run it through the full pipeline."""
        with self._lock:
            now = self._advance(at)
            base: dict[str, Any] = {"user": user}
            if nmea is not None:
                base["nmea"] = nmea
            else:
                base["lat"] = lat
                base["lon"] = lon

            def reject(reason: str) -> dict:
                self.log.append(now, EventKind.FIX_REJECTED, {**base, "reason": reason})
                return {"accepted": False, "reason": reason, "events": [], "commands": []}

            if user not in self.config.users:
                return reject("unknown_user")
            if nmea is not None:
                try:
                    parsed = parse_nmea(nmea)
                except NmeaError as exc:
                    return reject(type(exc).__name__)
                if isinstance(parsed, UnsupportedSentence):
                    return reject(f"unsupported:{parsed.talker_type}")
                if parsed.quality is not FixQuality.FIX:
                    return reject("no_lock")
                fix = parsed
                lat, lon = fix.latitude, fix.longitude
            else:
                if lat is None or lon is None:
                    return reject("missing_coordinates")
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                    return reject("out_of_range")
                fix = GeoFix(now.time(), lat, lon, FixQuality.FIX, "")

            self.log.append(now, EventKind.FIX_ACCEPTED, {**base, "lat": lat, "lon": lon})
            events = self.tracker.observe(user, fix, at=now)
            all_commands: list[dict] = []
            event_rows: list[dict] = []
            for event in events:
                self.log.append(
                    now,
                    EventKind.PRESENCE,
                    {"user": event.user, "fence": event.fence_id, "kind": event.kind},
                )
                event_rows.append({"fence": event.fence_id, "kind": event.kind})
                decisions, commands = self.engine.on_presence_event(
                    event.user, event.fence_id, self._ctx(), self._states()
                )
                self._log_decisions(decisions, now)
                all_commands.extend(self._run_commands(commands, "policy", now))
            return {
                "accepted": True,
                "reason": None,
                "events": event_rows,
                "commands": all_commands,
            }

    def set_device_state(
        self, device_id: str, on: bool, origin: str = "api", at: datetime | None = None
    ) -> dict:
        """Manual or API switch. API switches yield to organizational mandates."""
        with self._lock:
            now = self._advance(at)
            spec = self.config.devices.get(device_id)
            if spec is None:
                return {"ok": False, "error": "unknown_device"}
            if spec.exempt:
                return {"ok": False, "error": "exempt"}
            if origin == "api":
                held = self._static_mandate(device_id)
                if held is not None and held.turn_on != on:
                    return {
                        "ok": False,
                        "error": "mandated",
                        "provenance": [list(p) for p in held.provenance],
                    }
            parsed = self._send_set(device_id, on, origin, now)
            if parsed["kind"] == "err":
                return {"ok": False, "error": parsed["reason"].lower()}
            return {"ok": True, "device": device_id, "on": on}

    def _static_mandate(self, device_id: str) -> Decision | None:
        """Resolve against standing (non-generated) rules only."""
        from ..policy import resolve as resolve_rules

        rules_by_realm: dict[str, list[PolicyRule]] = {}
        for rule in self.engine.static_rules.values():
            rules_by_realm.setdefault(rule.realm_id, []).append(rule)
        chain = self.engine.tree.chain(self.engine.device_realm[device_id])
        return resolve_rules(chain, rules_by_realm, device_id, self._ctx())

    def set_user_mode(self, user: str, mode: str | dict, at: datetime | None = None) -> dict:
        """Switch a user's mode and immediately re-evaluate their devices."""
        with self._lock:
            now = self._advance(at)
            if isinstance(mode, Mapping):
                mode_obj: str | UserMode = UserMode(
                    name=str(mode.get("name", "custom")),
                    fractions={g: float(f) for g, f in mode.get("fractions", {}).items()},
                )
                mode_name = mode_obj.name
                edit: dict[str, Any] = {"edit": "mode", "user": user, "mode": dict(mode)}
            else:
                mode_obj = mode
                mode_name = mode
                edit = {"edit": "mode", "user": user, "mode": mode}
            self.engine.set_user_mode(user, mode_obj)
            self.log.append(now, EventKind.POLICY_EDIT, edit)
            decisions, commands = self.engine._evaluate(
                self.engine.user_devices(user), self._ctx(), self._states()
            )
            self._log_decisions(decisions, now)
            sent = self._run_commands(commands, "policy", now)
            return {"ok": True, "user": user, "mode": mode_name, "commands": sent}

    def upsert_rule(self, raw: dict, at: datetime | None = None) -> dict:
        """Add or replace one standing rule, then re-evaluate its scope."""
        with self._lock:
            now = self._advance(at)
            condition = None
            when = raw.get("when")
            if when is not None and when != "always":
                fence = when.get("fence")
                if fence not in self.config.fences:
                    raise ValidationError(f"unknown fence {fence!r}")
                state = when.get("state")
                if state not in ("inside", "outside"):
                    raise ValidationError("condition state must be inside/outside")
                condition = PresenceCondition(
                    user=when.get("user", ""), fence_id=fence, inside=state == "inside"
                )
            try:
                rule = PolicyRule(
                    rule_id=str(raw["id"]),
                    realm_id=str(raw["realm"]),
                    device_scope=frozenset(raw["devices"]),
                    action=str(raw["action"]),
                    condition=condition,
                    priority_note=str(raw.get("note", "")),
                )
                self.engine.upsert_rule(rule)
            except (KeyError, ConfigError) as exc:
                raise ValidationError(str(exc)) from exc
            self.log.append(now, EventKind.POLICY_EDIT, {"edit": "rule", "rule": raw})
            decisions, commands = self.engine._evaluate(
                sorted(rule.device_scope), self._ctx(), self._states()
            )
            self._log_decisions(decisions, now)
            sent = self._run_commands(commands, "policy", now)
            return {"ok": True, "rule": rule.rule_id, "commands": sent}

    def close_segment(self, device_id: str, upto: datetime) -> None:
        """Meter one device from its open-segment start through `upto`."""
        with self._lock:
            self._advance(upto)
            start = self._closed_through[device_id]
            if upto <= start:
                return
            wh = self.fleet.meter_read(device_id, start, upto)
            self.ledger.append(device_id, start, upto, wh)
            self.log.append(
                upto,
                EventKind.LEDGER_APPEND,
                {"device": device_id, "t0": start.isoformat(), "t1": upto.isoformat(), "wh": wh},
            )
            self._closed_through[device_id] = upto

    def finalize(self, upto: datetime) -> None:
        """Close every open meter segment through `upto` (end of a replay)."""
        with self._lock:
            for device_id in sorted(self.config.devices):
                self.close_segment(device_id, upto)

    # -- read-side ----------------------------------------------------------

    def snapshot(self) -> dict:
        """Full externally observable state, for recovery comparison."""
        with self._lock:
            return {
                "seq": self.log.last_seq,
                "clock": self.clock.now().isoformat(),
                "devices": {
                    d: {
                        "on": self.fleet.state(d),
                        "since": self.fleet.devices[d].state_since.isoformat(),
                    }
                    for d in sorted(self.config.devices)
                },
                "presence": {
                    user: {
                        fence: {
                            "status": (s := self.tracker.state_of(user, fence)).status,
                            "candidate": s.candidate,
                            "streak": s.streak,
                        }
                        for fence in sorted(self.config.fences)
                    }
                    for user in sorted(self.config.users)
                },
                "modes": {u: b.mode for u, b in sorted(self.engine.bindings.items())},
                "rules": [r.rule_id for r in self.engine.all_rules()],
                "ledger": [
                    [e.device_id, e.t0.isoformat(), e.t1.isoformat(), e.wh]
                    for e in self.ledger.entries
                ],
            }

    def actuals(self, window: tuple[datetime, datetime]) -> dict[str, tuple[dict[str, float], float]]:
        """Measured kWh per site over the window, straight off the meters."""
        with self._lock:
            t0 = max(window[0], self.fleet.started_at)
            t1 = min(window[1], self.fleet.now)
            out: dict[str, tuple[dict[str, float], float]] = {}
            for site in sorted(self.config.fences):
                per_device = {
                    d: self.fleet.meter_read(d, t0, t1) / 1000.0
                    for d, spec in sorted(self.config.devices.items())
                    if spec.building == site
                }
                out[site] = (per_device, sum(per_device.values()))
            return out

    def estimates(self) -> dict[str, dict[str, ModeEstimate]]:
        return {
            site: {
                mode: estimate_mode(site, mode, self.config.schedule, self.fleet, self.config.estimates)
                for mode in sorted(self.config.modes)
            }
            for site in sorted(self.config.estimates)
        }

    def report_bundle(self, window: tuple[datetime, datetime]) -> dict:
        """Comparison report plus realm rollup over the window."""
        with self._lock:
            actual = self.actuals(window)
            report = comparison_report(actual, self.estimates())
            device_kwh: dict[str, float] = {}
            for per_device, _ in actual.values():
                device_kwh.update(per_device)
            rollup = realm_rollup(device_kwh, self.config.tree, self.config.device_realm())
            return {
                "deployment": self.config.name,
                "window": {"from": window[0].isoformat(), "to": window[1].isoformat()},
                "comparison": report,
                "rollup": {k: round(v, 9) for k, v in sorted(rollup.items())},
            }

    def presence_view(self, user: str) -> dict:
        with self._lock:
            fences = {}
            for fence_id in sorted(self.config.fences):
                state = self.tracker.state_of(user, fence_id)
                fences[fence_id] = {"status": state.status, "streak": state.streak}
            last = self.tracker.last_fix.get(user)
            return {
                "user": user,
                "mode": self.engine.bindings[user].mode if user in self.engine.bindings else None,
                "fences": fences,
                "last_fix": None
                if last is None
                else {"lat": last[0], "lon": last[1], "at": last[2].isoformat()},
            }

    def devices_view(self) -> list[dict]:
        with self._lock:
            rows = []
            for device_id in sorted(self.config.devices):
                spec = self.config.devices[device_id]
                rows.append(
                    {
                        "id": device_id,
                        "name": spec.name,
                        "building": spec.building,
                        "on": self.fleet.state(device_id),
                        "exempt": spec.exempt,
                        "watts": self.fleet.power_at(device_id),
                    }
                )
            return rows

    def policies_view(self) -> dict:
        with self._lock:
            return {
                "realms": [
                    {
                        "id": r.realm_id,
                        "name": r.name,
                        "parent": r.parent,
                        "depth": r.depth,
                    }
                    for r in sorted(self.engine.tree.realms.values(), key=lambda r: (r.depth, r.realm_id))
                ],
                "rules": [
                    {
                        "id": r.rule_id,
                        "realm": r.realm_id,
                        "devices": sorted(r.device_scope),
                        "action": r.action,
                        "when": None
                        if r.condition is None
                        else {
                            "user": r.condition.user,
                            "fence": r.condition.fence_id,
                            "state": "inside" if r.condition.inside else "outside",
                        },
                    }
                    for r in self.engine.all_rules()
                ],
                "modes": {
                    name: dict(mode.fractions) for name, mode in sorted(self.engine.modes.items())
                },
                "users": {u: b.mode for u, b in sorted(self.engine.bindings.items())},
            }

    def close(self) -> None:
        self.log.close()
        self.link.close()


def recover(records: list[EventRecord], config: SystemConfig) -> Runtime:
    """Rebuild a runtime by replaying the log's input-bearing records.

    Derived records (presence, decisions, policy commands, replies, ledger
    rows) are regenerated by the pipeline itself, so only external inputs
    are re-applied. The pipeline is deterministic; the rebuilt state matches
    the live one record for record. A log truncated mid-way through one
    input's fallout recovers to the state where that input has been fully
    processed, which is the at-least-once semantics a crash needs.
    """
    if not records:
        raise ValidationError("cannot recover from an empty log")
    first = records[0]
    if first.kind != EventKind.POLICY_EDIT or first.payload.get("edit") != "start":
        raise ValidationError("log does not begin with a start record")
    runtime = Runtime(config, SimClock(first.at))
    for record in records[1:]:
        payload = record.payload
        if record.kind in (EventKind.FIX_ACCEPTED, EventKind.FIX_REJECTED):
            runtime.post_location(
                payload.get("user", ""),
                nmea=payload.get("nmea"),
                lat=payload.get("lat"),
                lon=payload.get("lon"),
                at=record.at,
            )
        elif record.kind == EventKind.DEVICE_COMMAND and payload.get("origin") in ("manual", "api"):
            runtime.set_device_state(
                payload["device"],
                payload["state"] == "ON",
                origin=payload["origin"],
                at=record.at,
            )
        elif record.kind == EventKind.POLICY_EDIT:
            if payload.get("edit") == "mode":
                runtime.set_user_mode(payload["user"], payload["mode"], at=record.at)
            elif payload.get("edit") == "rule":
                runtime.upsert_rule(payload["rule"], at=record.at)
        elif record.kind == EventKind.LEDGER_APPEND:
            # transition-driven closes regenerate with their command; a close
            # past the rebuilt bookkeeping came from an explicit finalize
            t1 = datetime.fromisoformat(payload["t1"])
            if t1 > runtime._closed_through[payload["device"]]:
                runtime.close_segment(payload["device"], t1)
        # everything else is derived and regenerates itself
    return runtime
