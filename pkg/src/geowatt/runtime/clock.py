"""Clocks the pipeline runs against: simulated for replays, wall for live use."""

from __future__ import annotations

from datetime import datetime


class SimClock:
    """Manually advanced clock; never moves backwards."""

    def __init__(self, start: datetime):
        self._now = start

    def now(self) -> datetime:
        return self._now

    def advance_to(self, at: datetime) -> None:
        if at > self._now:
            self._now = at


class WallClock:
    def now(self) -> datetime:
        return datetime.now()

    def advance_to(self, at: datetime) -> None:
        pass  # wall time advances itself
