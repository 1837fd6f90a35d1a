"""Builder for the bundled reference day: one commuter, two buildings, 24 hours.

The day produces a fix every minute. The commuter leaves home in the morning,
works at the office, runs an errand, and returns in the evening; a handful of
manual switch presses round out the story. All geometry is generated at fixed
distances from the fence centers so the hysteresis machines transition at
known minutes, and the switch timings are chosen so every device's metered
energy is a short exact product of watts and seconds.

Expected meter readings for the day, under the frugal mode:

    home_lighting   07:00-09:00 and 19:15-22:09:33  -> 17673 s, 2700.04 Wh
    home_laptop     07:30-09:00 and 19:15-23:45     -> 21600 s,  300.00 Wh
    microwave       07:10-07:13                     ->   180 s,   65.00 Wh
    refrigerator    80 full duty cycles             ->            2220.00 Wh
    office_lighting 09:40-15:40                     -> 21600 s, 1152.00 Wh
    desktop         09:40-15:40                     -> 21600 s,  960.00 Wh
    office_laptop   12:40-15:40                     -> 10800 s,  150.00 Wh
"""

from __future__ import annotations

import math
import random
from datetime import date, datetime, timedelta

from ..geoloc import METERS_PER_DEGREE, gga_sentence
from .replay import LocationFix, ManualEvent, ScenarioScript

REFERENCE_DAY = date(2011, 10, 12)
USER = "alex"

HOME = (38.5743, -90.3108)
OFFICE = (38.6488, -90.3050)


def _offset(base: tuple[float, float], north_m: float, east_m: float) -> tuple[float, float]:
    lat = base[0] + north_m / METERS_PER_DEGREE
    lon = base[1] + east_m / (METERS_PER_DEGREE * math.cos(math.radians(base[0])))
    return lat, lon


def _commute_unit() -> tuple[float, float]:
    """Unit vector (north, east) in meters pointing from home toward the office."""
    dn = (OFFICE[0] - HOME[0]) * METERS_PER_DEGREE
    de = (OFFICE[1] - HOME[1]) * METERS_PER_DEGREE * math.cos(math.radians((HOME[0] + OFFICE[0]) / 2))
    length = math.hypot(dn, de)
    return dn / length, de / length


_UNIT = _commute_unit()
COMMUTE_LENGTH_M = math.hypot(
    (OFFICE[0] - HOME[0]) * METERS_PER_DEGREE,
    (OFFICE[1] - HOME[1]) * METERS_PER_DEGREE * math.cos(math.radians((HOME[0] + OFFICE[0]) / 2)),
)


def _from_home(distance_m: float) -> tuple[float, float]:
    return _offset(HOME, _UNIT[0] * distance_m, _UNIT[1] * distance_m)


def _from_office(distance_m: float) -> tuple[float, float]:
    return _offset(OFFICE, -_UNIT[0] * distance_m, -_UNIT[1] * distance_m)


def _jittered(base: tuple[float, float], rng: random.Random, r_max: float, r_min: float = 10.0) -> tuple[float, float]:
    r = rng.uniform(r_min, r_max)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    return _offset(base, r * math.cos(theta), r * math.sin(theta))


# distance from the relevant fence center, keyed by minute of day; everything
# not listed is jitter around the current anchor
_DEPART = {8 * 60 + 58: 450.0, 8 * 60 + 59: 600.0, 9 * 60 + 0: 800.0}
_ARRIVE = {
    9 * 60 + 36: 480.0,
    9 * 60 + 37: 370.0,  # hysteresis band: resets the dwell streak on purpose
    9 * 60 + 38: 250.0,
    9 * 60 + 39: 180.0,
    9 * 60 + 40: 120.0,
}
_LEAVE_OFFICE = {15 * 60 + 38: 450.0, 15 * 60 + 39: 550.0, 15 * 60 + 40: 700.0}
_RETURN = {
    19 * 60 + 5: 700.0,
    19 * 60 + 6: 550.0,
    19 * 60 + 7: 420.0,
    19 * 60 + 8: 260.0,
    19 * 60 + 9: 190.0,
    19 * 60 + 10: 130.0,
}

_TRAVEL_FROM = 9 * 60 + 1   # zigzag-free ride: office distance shrinks linearly
_TRAVEL_TO = 9 * 60 + 35
_ERRAND_FROM = 15 * 60 + 41
_ERRAND_TO = 19 * 60 + 4
_ERRAND_ANCHOR_M = 2000.0   # from the office, on the homeward side


def _position(minute: int, rng: random.Random) -> tuple[float, float]:
    if minute in _DEPART:
        return _from_home(_DEPART[minute])
    if minute in _ARRIVE:
        return _from_office(_ARRIVE[minute])
    if minute in _LEAVE_OFFICE:
        return _from_office(_LEAVE_OFFICE[minute])
    if minute in _RETURN:
        return _from_home(_RETURN[minute])
    if minute < 8 * 60 + 58:
        return _jittered(HOME, rng, 60.0)
    if _TRAVEL_FROM <= minute <= _TRAVEL_TO:
        d0 = COMMUTE_LENGTH_M - 800.0        # office distance right after leaving
        d1 = _ARRIVE[_TRAVEL_FROM + 35]      # 480 m at 09:36
        steps = _TRAVEL_TO - _TRAVEL_FROM + 2
        k = minute - _TRAVEL_FROM + 1
        return _from_office(d0 + (d1 - d0) * k / steps)
    if minute <= 15 * 60 + 37:
        return _jittered(OFFICE, rng, 60.0)
    if _ERRAND_FROM <= minute <= _ERRAND_TO:
        return _jittered(_from_office(_ERRAND_ANCHOR_M), rng, 150.0, r_min=0.0)
    return _jittered(HOME, rng, 60.0)


def reference_day_script(seed: int = 20111012) -> ScenarioScript:
    """The full scripted day for the bundled two-building deployment."""
    rng = random.Random(seed)
    start = datetime.combine(REFERENCE_DAY, datetime.min.time())
    end = start + timedelta(days=1)

    fixes = []
    for minute in range(24 * 60):
        at = start + timedelta(minutes=minute)
        lat, lon = _position(minute, rng)
        fixes.append(LocationFix(at=at, user=USER, nmea=gga_sentence(at.time(), lat, lon)))

    def t(hh: int, mm: int, ss: int = 0) -> datetime:
        return start + timedelta(hours=hh, minutes=mm, seconds=ss)

    manual = [
        ManualEvent(at=t(7, 0), device="home_lighting", on=True),
        ManualEvent(at=t(7, 10), device="microwave", on=True),
        ManualEvent(at=t(7, 13), device="microwave", on=False),
        ManualEvent(at=t(7, 30), device="home_laptop", on=True),
        ManualEvent(at=t(12, 40), device="office_laptop", on=True),
        ManualEvent(at=t(19, 15), device="home_lighting", on=True),
        ManualEvent(at=t(19, 15), device="home_laptop", on=True),
        ManualEvent(at=t(22, 9, 33), device="home_lighting", on=False),
        ManualEvent(at=t(23, 45), device="home_laptop", on=False),
    ]
    return ScenarioScript(
        name="reference-day",
        start=start,
        end=end,
        fixes=fixes,
        manual_events=manual,
    )
