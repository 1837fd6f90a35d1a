"""Scripted scenario replay.

A scenario is a timeline of location fixes, manual switch presses, and mode
changes. Replay feeds them through a Runtime on a simulated clock, optionally
paced in real time divided by a speedup factor, and writes a report at the
end. Device commands cross a real TCP socket by default so the wire protocol
is exercised, not bypassed.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any

import yaml

from ..config import SystemConfig, build_fleet
from ..devicenet import FleetServer, InProcessLink, SocketLink
from ..errors import ValidationError
from .clock import SimClock
from .pipeline import Runtime


@dataclass(frozen=True)
class LocationFix:
    at: datetime
    user: str
    nmea: str | None = None
    lat: float | None = None
    lon: float | None = None


@dataclass(frozen=True)
class ManualEvent:
    at: datetime
    device: str
    on: bool


@dataclass(frozen=True)
class ModeChange:
    at: datetime
    user: str
    mode: str


@dataclass
class ScenarioScript:
    name: str
    start: datetime
    end: datetime
    fixes: list[LocationFix] = field(default_factory=list)
    manual_events: list[ManualEvent] = field(default_factory=list)
    mode_changes: list[ModeChange] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValidationError("script must end after it starts")
        for item in (*self.fixes, *self.manual_events, *self.mode_changes):
            if not (self.start <= item.at <= self.end):
                raise ValidationError(f"scripted event at {item.at} falls outside the window")


def _parse_at(value: Any) -> datetime:
    if isinstance(value, datetime):
        return value
    return datetime.fromisoformat(str(value))


def load_script(path: str | Path) -> ScenarioScript:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("script file must hold a mapping")
    try:
        fixes = [
            LocationFix(
                at=_parse_at(row["at"]),
                user=str(row["user"]),
                nmea=row.get("nmea"),
                lat=row.get("lat"),
                lon=row.get("lon"),
            )
            for row in doc.get("fixes", [])
        ]
        manual = [
            ManualEvent(
                at=_parse_at(row["at"]),
                device=str(row["device"]),
                on=str(row["state"]).lower() in ("on", "true", "1"),
            )
            for row in doc.get("manual_events", [])
        ]
        modes = [
            ModeChange(at=_parse_at(row["at"]), user=str(row["user"]), mode=str(row["mode"]))
            for row in doc.get("mode_changes", [])
        ]
        return ScenarioScript(
            name=str(doc.get("name", "scenario")),
            start=_parse_at(doc["start"]),
            end=_parse_at(doc["end"]),
            fixes=fixes,
            manual_events=manual,
            mode_changes=modes,
        )
    except KeyError as exc:
        raise ValidationError(f"script is missing field {exc.args[0]!r}") from exc


def save_script(script: ScenarioScript, path: str | Path) -> None:
    doc: dict[str, Any] = {
        "name": script.name,
        "start": script.start.isoformat(),
        "end": script.end.isoformat(),
        "fixes": [
            {
                "at": f.at.isoformat(),
                "user": f.user,
                **({"nmea": f.nmea} if f.nmea is not None else {"lat": f.lat, "lon": f.lon}),
            }
            for f in script.fixes
        ],
        "manual_events": [
            {"at": e.at.isoformat(), "device": e.device, "state": "on" if e.on else "off"}
            for e in script.manual_events
        ],
        "mode_changes": [
            {"at": c.at.isoformat(), "user": c.user, "mode": c.mode}
            for c in script.mode_changes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def _merged(script: ScenarioScript) -> list[tuple[datetime, int, int, Any]]:
    """All scripted items in execution order.

    Ties at one timestamp run fixes first, then switch presses, then mode
    changes; insertion order breaks any remaining tie.
    """
    rows: list[tuple[datetime, int, int, Any]] = []
    for i, f in enumerate(script.fixes):
        rows.append((f.at, 0, i, f))
    for i, e in enumerate(script.manual_events):
        rows.append((e.at, 1, i, e))
    for i, c in enumerate(script.mode_changes):
        rows.append((c.at, 2, i, c))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def report_csv(report: dict) -> str:
    """Flatten a report bundle to delimited text."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["kind", "site", "name", "kwh", "ratio"])
    sites = report["comparison"]["sites"]
    for site in sorted(sites):
        for device, kwh in sorted(sites[site]["per_device_kwh"].items()):
            writer.writerow(["device", site, device, f"{kwh:.6f}", ""])
        writer.writerow(["site_actual", site, "", f"{sites[site]['actual_kwh']:.6f}", ""])
        for mode, row in sorted(sites[site]["modes"].items()):
            ratio = "" if row["ratio"] is None else f"{row['ratio']:.6f}"
            writer.writerow(["mode_baseline", site, mode, f"{row['estimate_kwh']:.6f}", ratio])
    combined = report["comparison"]["combined"]
    writer.writerow(["combined_actual", "", "", f"{combined['actual_kwh']:.6f}", ""])
    for mode, row in sorted(combined["modes"].items()):
        ratio = "" if row["ratio"] is None else f"{row['ratio']:.6f}"
        writer.writerow(["combined_baseline", "", mode, f"{row['estimate_kwh']:.6f}", ratio])
    for realm, kwh in sorted(report["rollup"].items()):
        writer.writerow(["realm", "", realm, f"{kwh:.6f}", ""])
    return buf.getvalue()


def play_script(runtime: Runtime, script: ScenarioScript, *, speedup: float | None = None) -> None:
    """Feed every scripted item through the runtime and close the books.

    The runtime must share the script's timeline (a SimClock at or before
    script.start); items carry their own timestamps, so pacing only controls
    how fast wall time passes, never which sim times the events land on.
    """
    previous = script.start
    for at, _, _, item in _merged(script):
        if speedup is not None and speedup > 0:
            delay = (at - previous).total_seconds() / speedup
            if delay > 0:
                time.sleep(delay)
            previous = at
        if isinstance(item, LocationFix):
            runtime.post_location(item.user, nmea=item.nmea, lat=item.lat, lon=item.lon, at=at)
        elif isinstance(item, ManualEvent):
            runtime.set_device_state(item.device, item.on, origin="manual", at=at)
        else:
            runtime.set_user_mode(item.user, item.mode, at=at)
    runtime.finalize(script.end)


def run_replay(
    config: SystemConfig,
    script: ScenarioScript,
    *,
    speedup: float | None = None,
    out_dir: str | Path | None = None,
    log_path: str | Path | None = None,
    use_socket: bool = True,
) -> tuple[Runtime, dict]:
    """Run a script to completion and return the runtime and its report."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if log_path is None:
            log_path = out / "events.jsonl"

    clock = SimClock(script.start)
    fleet = build_fleet(config, script.start)
    server = None
    if use_socket:
        server = FleetServer(fleet)
        server.start()
        link = SocketLink("127.0.0.1", server.port)
    else:
        link = InProcessLink(fleet)
    runtime = Runtime(
        config, clock, fleet=fleet, link=link,
        log_path=None if log_path is None else str(log_path),
    )
    try:
        play_script(runtime, script, speedup=speedup)
        report = runtime.report_bundle((script.start, script.end))
        report["scenario"] = script.name
        if out is not None:
            (out / "report.json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
        return runtime, report
    finally:
        runtime.close()
        if server is not None:
            server.stop()
