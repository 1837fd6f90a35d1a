"""Debounced geofence presence detection.

A fence carries two radii: you are a candidate Inside below the enter
radius and a candidate Outside beyond the exit radius. The gap between
them absorbs receiver jitter, and a candidate only becomes the state
after min_dwell_fixes consecutive supporting fixes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .geoloc import FixQuality, GeoFix, haversine_m

# Observed scatter of a stationary consumer receiver, peak to peak.
DEFAULT_JITTER_AMPLITUDE_M = 20.0


class PresenceStatus:
    UNKNOWN = "unknown"
    INSIDE = "inside"
    OUTSIDE = "outside"


class EventKind:
    ENTER = "enter"
    EXIT = "exit"


@dataclass(frozen=True)
class GeoFence:
    """A circular fence with hysteresis radii and a dwell requirement."""

    fence_id: str
    lat: float
    lon: float
    enter_radius_m: float = 300.0
    exit_radius_m: float = 400.0
    min_dwell_fixes: int = 3
    jitter_amplitude_m: float = DEFAULT_JITTER_AMPLITUDE_M

    def __post_init__(self) -> None:
        if self.enter_radius_m <= 0:
            raise ValueError("enter radius must be positive")
        if self.exit_radius_m <= self.enter_radius_m:
            raise ValueError("exit radius must exceed enter radius")
        band = self.exit_radius_m - self.enter_radius_m
        if band <= 2.0 * self.jitter_amplitude_m:
            raise ValueError(
                f"hysteresis band {band:.0f} m must exceed twice the "
                f"{self.jitter_amplitude_m:.0f} m jitter amplitude"
            )
        if self.min_dwell_fixes < 1:
            raise ValueError("min_dwell_fixes must be at least 1")


@dataclass(frozen=True)
class PresenceState:
    """Per (user, fence) machine state. Mutated only through step()."""

    status: str = PresenceStatus.UNKNOWN
    candidate: str | None = None
    streak: int = 0
    last_fix_time: Any = None  # any orderable timestamp


@dataclass(frozen=True)
class PresenceEvent:
    user: str
    fence_id: str
    kind: str
    at: Any


def distance_to_fence(fix: GeoFix, fence: GeoFence) -> float:
    return haversine_m(fix.latitude, fix.longitude, fence.lat, fence.lon)


def step(
    state: PresenceState,
    fence: GeoFence,
    fix: GeoFix,
    *,
    user: str = "",
    at: Any = None,
) -> tuple[PresenceState, list[PresenceEvent]]:
    """Advance one fence machine by one fix.

    `at` defaults to the fix's own timestamp; the runtime passes a full
    datetime so traces can cross midnight. Stale fixes (older than the last
    accepted one) leave the state untouched.

    Returns the new state and any emitted events (at most one).
    """
    if fix.quality is not FixQuality.FIX:
        raise ValueError("presence only accepts fixes with a position lock")
    if at is None:
        at = fix.timestamp
    if state.last_fix_time is not None and at < state.last_fix_time:
        return state, []

    d = distance_to_fence(fix, fence)
    if d < fence.enter_radius_m:
        zone = PresenceStatus.INSIDE
    elif d > fence.exit_radius_m:
        zone = PresenceStatus.OUTSIDE
    else:
        # inside the hysteresis band: supports nothing, resets any streak
        return replace(state, candidate=None, streak=0, last_fix_time=at), []

    if zone == state.status:
        return replace(state, candidate=None, streak=0, last_fix_time=at), []

    streak = state.streak + 1 if state.candidate == zone else 1
    if streak >= fence.min_dwell_fixes:
        kind = EventKind.ENTER if zone == PresenceStatus.INSIDE else EventKind.EXIT
        new = PresenceState(status=zone, candidate=None, streak=0, last_fix_time=at)
        return new, [PresenceEvent(user=user, fence_id=fence.fence_id, kind=kind, at=at)]
    return replace(state, candidate=zone, streak=streak, last_fix_time=at), []


@dataclass
class PresenceTracker:
    """Runs one presence machine per (user, fence) pair."""

    fences: dict[str, GeoFence]
    states: dict[tuple[str, str], PresenceState] = field(default_factory=dict)
    last_fix: dict[str, tuple[float, float, Any]] = field(default_factory=dict)

    def state_of(self, user: str, fence_id: str) -> PresenceState:
        return self.states.get((user, fence_id), PresenceState())

    def status_map(self, user: str) -> dict[str, str]:
        return {fid: self.state_of(user, fid).status for fid in self.fences}

    def observe(self, user: str, fix: GeoFix, at: Any = None) -> list[PresenceEvent]:
        """Feed one fix to every fence machine for this user."""
        events: list[PresenceEvent] = []
        for fence_id in sorted(self.fences):
            fence = self.fences[fence_id]
            state = self.state_of(user, fence_id)
            new_state, emitted = step(state, fence, fix, user=user, at=at)
            self.states[(user, fence_id)] = new_state
            events.extend(emitted)
        self.last_fix[user] = (fix.latitude, fix.longitude, at if at is not None else fix.timestamp)
        return events
