"""Simulated appliance fleet with power metering and a line-oriented wire protocol.

Each device carries a power profile (constant draw, two-level draw, or an
on/off duty cycle anchored at the moment it was last switched on) and a full
state history, so energy over any window inside the recorded history is an
exact integral rather than a sampled estimate.

Wire protocol, one UTF-8 space-delimited command per line:

    GET <id>            -> STATE <id> ON|OFF
    SET <id> ON|OFF     -> OK <id> ON|OFF   or  ERR <id> EXEMPT|UNKNOWN
    POWER <id>          -> POWER <id> <watts>
    LIST                -> DEVICES <n> followed by n DEVICE lines
    anything else       -> ERR - BADCMD
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import datetime

log = logging.getLogger(__name__)


class HistoryGap(Exception):
    """The requested window is not covered by recorded state history."""


class UnknownDevice(KeyError):
    pass


class ExemptDevice(Exception):
    """Set refused: the device must never be switched (e.g. refrigerator)."""


@dataclass(frozen=True)
class Constant:
    """Fixed draw while on."""

    watts: float


@dataclass(frozen=True)
class TwoLevel:
    """Normal/active draw pair, blended by the fraction of time spent active."""

    normal_watts: float
    active_watts: float
    active_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.active_fraction <= 1.0:
            raise ValueError("active_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DutyCycle:
    """Periodic on/off draw, phase-anchored at the last switch-on."""

    on_watts: float
    on_minutes: float
    off_minutes: float

    def __post_init__(self) -> None:
        if self.on_minutes <= 0 or self.off_minutes < 0:
            raise ValueError("duty cycle minutes must be positive")


PowerProfile = Constant | TwoLevel | DutyCycle


def average_watts(profile: PowerProfile) -> float:
    """Long-run mean draw while the device stays on."""
    if isinstance(profile, Constant):
        return profile.watts
    if isinstance(profile, TwoLevel):
        return profile.normal_watts + profile.active_fraction * (
            profile.active_watts - profile.normal_watts
        )
    period = profile.on_minutes + profile.off_minutes
    return profile.on_watts * profile.on_minutes / period


def _on_power(profile: PowerProfile, seconds_since_on: float) -> float:
    """Instantaneous draw at an offset into an on-segment."""
    if isinstance(profile, Constant):
        return profile.watts
    if isinstance(profile, TwoLevel):
        return average_watts(profile)
    period_s = (profile.on_minutes + profile.off_minutes) * 60.0
    phase = seconds_since_on % period_s
    return profile.on_watts if phase < profile.on_minutes * 60.0 else 0.0


def _on_energy_wh(profile: PowerProfile, a_s: float, b_s: float) -> float:
    """Energy over [a_s, b_s] seconds into an on-segment (offsets from switch-on)."""
    if b_s <= a_s:
        return 0.0
    if isinstance(profile, (Constant, TwoLevel)):
        return average_watts(profile) * (b_s - a_s) / 3600.0

    def cumulative_on_seconds(t_s: float) -> float:
        period_s = (profile.on_minutes + profile.off_minutes) * 60.0
        on_s = profile.on_minutes * 60.0
        full = int(t_s // period_s)
        rem = t_s - full * period_s
        return full * on_s + min(rem, on_s)

    return profile.on_watts * (cumulative_on_seconds(b_s) - cumulative_on_seconds(a_s)) / 3600.0


@dataclass
class DeviceDescriptor:
    device_id: str
    name: str
    building: str
    profile: PowerProfile
    exempt: bool = False
    state: bool = False
    state_since: datetime | None = None


def _fmt_watts(watts: float) -> str:
    return f"{watts:g}"


@dataclass
class DeviceFleet:
    """Holds the devices of one deployment plus their full switch history."""

    started_at: datetime
    devices: dict[str, DeviceDescriptor] = field(default_factory=dict)
    _history: dict[str, list[tuple[datetime, bool]]] = field(default_factory=dict)
    _now: datetime = None  # type: ignore[assignment]
    _lock: threading.RLock = field(default_factory=threading.RLock, repr=False)

    def __post_init__(self) -> None:
        if self._now is None:
            self._now = self.started_at
        for dev in self.devices.values():
            self._register(dev)

    def _register(self, dev: DeviceDescriptor) -> None:
        dev.state_since = self.started_at
        self._history[dev.device_id] = [(self.started_at, dev.state)]

    def add(self, dev: DeviceDescriptor) -> None:
        with self._lock:
            self.devices[dev.device_id] = dev
            self._register(dev)

    @property
    def now(self) -> datetime:
        return self._now

    def advance(self, to: datetime) -> None:
        """Move the fleet clock forward; history is recorded against it."""
        with self._lock:
            if to > self._now:
                self._now = to

    def require(self, device_id: str) -> DeviceDescriptor:
        try:
            return self.devices[device_id]
        except KeyError:
            raise UnknownDevice(device_id) from None

    def state(self, device_id: str) -> bool:
        return self.require(device_id).state

    def set_state(self, device_id: str, on: bool) -> bool:
        """Switch a device at the current fleet clock. Returns True if it changed."""
        with self._lock:
            dev = self.require(device_id)
            if dev.exempt:
                raise ExemptDevice(device_id)
            if dev.state == on:
                return False
            dev.state = on
            dev.state_since = self._now
            self._history[device_id].append((self._now, on))
            return True

    def _segment_at(self, device_id: str, t: datetime) -> tuple[datetime, bool]:
        history = self._history[self.require(device_id).device_id]
        if t < history[0][0] or t > self._now:
            raise HistoryGap(f"{device_id}: {t} outside recorded history")
        idx = bisect_right(history, (t, True)) - 1
        # equal timestamps: the transition takes effect at its instant
        while idx + 1 < len(history) and history[idx + 1][0] <= t:
            idx += 1
        return history[max(idx, 0)]

    def power_at(self, device_id: str, t: datetime | None = None) -> float:
        """Instantaneous draw in watts at time t (default: now)."""
        with self._lock:
            if t is None:
                t = self._now
            start, on = self._segment_at(device_id, t)
            if not on:
                return 0.0
            profile = self.require(device_id).profile
            return _on_power(profile, (t - start).total_seconds())

    def meter_read(self, device_id: str, t0: datetime, t1: datetime) -> float:
        """Exact energy in watt-hours over [t0, t1], honouring the state history."""
        with self._lock:
            dev = self.require(device_id)
            if t1 < t0:
                raise HistoryGap(f"{device_id}: window end precedes start")
            history = self._history[device_id]
            if t0 < history[0][0] or t1 > self._now:
                raise HistoryGap(f"{device_id}: [{t0}, {t1}] outside recorded history")
            total = 0.0
            for i, (seg_start, on) in enumerate(history):
                seg_end = history[i + 1][0] if i + 1 < len(history) else self._now
                if not on or seg_end <= t0 or seg_start >= t1:
                    continue
                a = max(seg_start, t0)
                b = min(seg_end, t1)
                total += _on_energy_wh(
                    dev.profile,
                    (a - seg_start).total_seconds(),
                    (b - seg_start).total_seconds(),
                )
            return total

    # -- wire protocol ---------------------------------------------------

    def handle_command(self, line: str) -> str:
        """Execute one protocol line, returning the (possibly multi-line) reply."""
        with self._lock:
            parts = line.strip().split(" ")
            verb = parts[0] if parts else ""
            try:
                if verb == "GET" and len(parts) == 2:
                    dev = self.require(parts[1])
                    return f"STATE {dev.device_id} {'ON' if dev.state else 'OFF'}"
                if verb == "SET" and len(parts) == 3 and parts[2] in ("ON", "OFF"):
                    on = parts[2] == "ON"
                    try:
                        self.set_state(parts[1], on)
                    except ExemptDevice:
                        return f"ERR {parts[1]} EXEMPT"
                    return f"OK {parts[1]} {parts[2]}"
                if verb == "POWER" and len(parts) == 2:
                    watts = self.power_at(parts[1])
                    return f"POWER {parts[1]} {_fmt_watts(watts)}"
                if verb == "LIST" and len(parts) == 1:
                    lines = [f"DEVICES {len(self.devices)}"]
                    for did in sorted(self.devices):
                        dev = self.devices[did]
                        state = "ON" if dev.state else "OFF"
                        lines.append(f"DEVICE {did} {state} {1 if dev.exempt else 0}")
                    return "\n".join(lines)
            except UnknownDevice as exc:
                return f"ERR {exc.args[0]} UNKNOWN"
            return "ERR - BADCMD"


def parse_reply(text: str) -> dict:
    """Parse a protocol reply back into a small dict; raises ValueError if malformed."""
    lines = text.split("\n")
    head = lines[0].split(" ")
    if head[0] == "STATE" and len(head) == 3 and head[2] in ("ON", "OFF"):
        return {"kind": "state", "device": head[1], "on": head[2] == "ON"}
    if head[0] == "OK" and len(head) == 3 and head[2] in ("ON", "OFF"):
        return {"kind": "ok", "device": head[1], "on": head[2] == "ON"}
    if head[0] == "ERR" and len(head) == 3 and head[2] in ("EXEMPT", "UNKNOWN", "BADCMD"):
        return {"kind": "err", "device": head[1], "reason": head[2]}
    if head[0] == "POWER" and len(head) == 3:
        return {"kind": "power", "device": head[1], "watts": float(head[2])}
    if head[0] == "DEVICES" and len(head) == 2:
        count = int(head[1])
        if count != len(lines) - 1:
            raise ValueError("device count does not match listing")
        rows = []
        for row in lines[1:]:
            cols = row.split(" ")
            if len(cols) != 4 or cols[0] != "DEVICE" or cols[2] not in ("ON", "OFF"):
                raise ValueError(f"bad DEVICE row {row!r}")
            rows.append({"device": cols[1], "on": cols[2] == "ON", "exempt": cols[3] == "1"})
        return {"kind": "list", "devices": rows}
    raise ValueError(f"unparseable reply {text!r}")


class InProcessLink:
    """Command link that calls the fleet directly; same grammar, no socket."""

    def __init__(self, fleet: DeviceFleet):
        self.fleet = fleet

    def send(self, line: str) -> str:
        return self.fleet.handle_command(line)

    def close(self) -> None:
        pass


class _FleetHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            raw = self.rfile.readline()
            if not raw:
                return
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                line = ""
            reply = self.server.fleet.handle_command(line)  # type: ignore[attr-defined]
            self.wfile.write((reply + "\n").encode("utf-8"))


class FleetServer(socketserver.ThreadingTCPServer):
    """Serves a fleet's wire protocol on a local TCP port."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, fleet: DeviceFleet, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _FleetHandler)
        self.fleet = fleet
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        log.info("fleet server listening on port %d", self.port)

    def stop(self) -> None:
        self.shutdown()
        self.server_close()


class SocketLink:
    """Command link over a persistent TCP connection to a FleetServer."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._rfile = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def send(self, line: str) -> str:
        self._sock.sendall((line + "\n").encode("utf-8"))
        first = self._rfile.readline().rstrip("\n")
        lines = [first]
        head = first.split(" ")
        if head[0] == "DEVICES" and len(head) == 2 and head[1].isdigit():
            for _ in range(int(head[1])):
                lines.append(self._rfile.readline().rstrip("\n"))
        return "\n".join(lines)

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()
