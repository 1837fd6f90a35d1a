"""Energy accounting: mode baselines, a measured-usage ledger, and reports.

The three usage modes are turned into kWh/day baselines from a daily
schedule (hours at the office, awake at home, asleep) and each device's
participation row: which occupancy bucket it runs in and what fraction of
it participates. Actual consumption comes from meter reads accumulated in
an append-only ledger, and the comparison report puts the two side by side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping

from .devicenet import DeviceFleet, average_watts
from .errors import ConfigError
from .policy import RealmTree

# Published conversion: one BTU buys 0.293 Wh of electric heating.
WH_PER_BTU = 0.293
# The same constant derived from first principles (1 BTU = 1055 J); the two
# disagree by under 0.2% and the published figure is the one reports use.
JOULES_PER_BTU = 1055.0


def btu_to_kwh(btu: float) -> float:
    return btu * WH_PER_BTU / 1000.0


class Occupancy:
    """Occupancy buckets a device's on-time can be conditioned on."""

    ALWAYS = "always"
    AWAKE = "awake"  # everywhere but asleep
    AT_HOME = "at_home"  # home hours including sleep
    AT_HOME_AWAKE = "at_home_awake"
    AT_OFFICE = "at_office"
    FIXED = "fixed"  # fixed daily hours regardless of schedule
    NEVER = "never"

    ALL = (ALWAYS, AWAKE, AT_HOME, AT_HOME_AWAKE, AT_OFFICE, FIXED, NEVER)


@dataclass(frozen=True)
class UsageSchedule:
    """How a day splits into office, awake-at-home, and sleep hours."""

    hours_office: float = 8.0
    hours_home_awake: float = 8.0
    hours_sleep: float = 8.0

    def __post_init__(self) -> None:
        parts = (self.hours_office, self.hours_home_awake, self.hours_sleep)
        if any(h < 0 for h in parts):
            raise ConfigError("schedule hours must be non-negative")
        if abs(sum(parts) - 24.0) > 1e-9:
            raise ConfigError(f"schedule hours must sum to 24, got {sum(parts)}")

    def hours_for(self, occupancy: str, fixed_hours: float = 0.0) -> float:
        if occupancy == Occupancy.ALWAYS:
            return 24.0
        if occupancy == Occupancy.AWAKE:
            return self.hours_office + self.hours_home_awake
        if occupancy == Occupancy.AT_HOME:
            return self.hours_home_awake + self.hours_sleep
        if occupancy == Occupancy.AT_HOME_AWAKE:
            return self.hours_home_awake
        if occupancy == Occupancy.AT_OFFICE:
            return self.hours_office
        if occupancy == Occupancy.FIXED:
            return fixed_hours
        if occupancy == Occupancy.NEVER:
            return 0.0
        raise ConfigError(f"unknown occupancy bucket {occupancy!r}")


@dataclass(frozen=True)
class ModeRow:
    """One device's participation under one mode."""

    occupancy: str
    fraction: float = 1.0
    fixed_hours: float = 0.0

    def __post_init__(self) -> None:
        if self.occupancy not in Occupancy.ALL:
            raise ConfigError(f"unknown occupancy bucket {self.occupancy!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"fraction {self.fraction} not in [0, 1]")
        if self.fixed_hours < 0 or self.fixed_hours > 24:
            raise ConfigError(f"fixed hours {self.fixed_hours} not in [0, 24]")


# site -> device -> mode name -> row
EstimateTable = Mapping[str, Mapping[str, Mapping[str, ModeRow]]]


@dataclass(frozen=True)
class ModeEstimate:
    site: str
    mode: str
    per_device_kwh: dict[str, float]
    total_kwh: float


def estimate_mode(
    site: str,
    mode: str,
    schedule: UsageSchedule,
    fleet: DeviceFleet,
    table: EstimateTable,
) -> ModeEstimate:
    """Daily kWh per device and in total for one site under one mode.

    Every device in the site's table needs a row for the mode and a fleet
    entry for its wattage; a gap either way is a ConfigError.
    """
    site_rows = table.get(site)
    if site_rows is None:
        raise ConfigError(f"no estimate rows for site {site!r}")
    fleet_site = {d for d, dev in fleet.devices.items() if dev.building == site}
    missing = fleet_site - set(site_rows)
    if missing:
        raise ConfigError(f"devices with no mode row for {site!r}: {sorted(missing)}")
    per_device: dict[str, float] = {}
    for device_id in sorted(site_rows):
        rows = site_rows[device_id]
        row = rows.get(mode)
        if row is None:
            raise ConfigError(f"device {device_id!r} has no row for mode {mode!r}")
        if device_id not in fleet.devices:
            raise ConfigError(f"estimate row for unknown device {device_id!r}")
        watts = average_watts(fleet.devices[device_id].profile)
        hours = schedule.hours_for(row.occupancy, row.fixed_hours)
        per_device[device_id] = watts * hours * row.fraction / 1000.0
    return ModeEstimate(site, mode, per_device, sum(per_device.values()))


@dataclass(frozen=True)
class LedgerEntry:
    device_id: str
    t0: datetime
    t1: datetime
    wh: float


@dataclass
class EnergyLedger:
    """Append-only record of metered energy per device segment."""

    site_of: Mapping[str, str]
    entries: list[LedgerEntry] = field(default_factory=list)
    _last_end: dict[str, datetime] = field(default_factory=dict)

    def append(self, device_id: str, t0: datetime, t1: datetime, wh: float) -> LedgerEntry:
        if device_id not in self.site_of:
            raise ConfigError(f"ledger has no site for device {device_id!r}")
        if t1 < t0:
            raise ValueError("entry ends before it starts")
        if wh < 0:
            raise ValueError("entry energy must be non-negative")
        last = self._last_end.get(device_id)
        if last is not None and t0 < last:
            raise ValueError(f"{device_id}: entry overlaps previous coverage")
        entry = LedgerEntry(device_id, t0, t1, wh)
        self.entries.append(entry)
        self._last_end[device_id] = t1
        return entry

    def total(
        self,
        site: str | None = None,
        window: tuple[datetime, datetime] | None = None,
    ) -> tuple[dict[str, float], float]:
        """Per-device and summed kWh for a site (or all sites) over a window."""
        per_device: dict[str, float] = {}
        for did, s in self.site_of.items():
            if site is None or s == site:
                per_device[did] = 0.0
        for entry in self.entries:
            if entry.device_id not in per_device:
                continue
            if window is not None:
                t0, t1 = window
                if entry.t1 <= t0 or entry.t0 >= t1:
                    continue
                overlap = (min(entry.t1, t1) - max(entry.t0, t0)).total_seconds()
                span = (entry.t1 - entry.t0).total_seconds()
                share = overlap / span if span > 0 else 1.0
            else:
                share = 1.0
            per_device[entry.device_id] += entry.wh * share / 1000.0
        return per_device, sum(per_device.values())


def comparison_report(
    actual: Mapping[str, tuple[dict[str, float], float]],
    estimates: Mapping[str, Mapping[str, ModeEstimate]],
) -> dict:
    """Actual kWh against each mode baseline, per site and combined.

    Ratios are actual/baseline, so 1.0 means the measured day matched the
    baseline exactly and 0 means nothing was consumed.
    """
    sites: dict[str, dict] = {}
    combined_actual = 0.0
    combined_modes: dict[str, float] = {}
    for site in sorted(actual):
        per_device, total = actual[site]
        combined_actual += total
        mode_rows = {}
        for mode, est in sorted(estimates.get(site, {}).items()):
            combined_modes[mode] = combined_modes.get(mode, 0.0) + est.total_kwh
            mode_rows[mode] = {
                "estimate_kwh": est.total_kwh,
                "ratio": (total / est.total_kwh) if est.total_kwh > 0 else None,
            }
        sites[site] = {
            "actual_kwh": total,
            "per_device_kwh": dict(sorted(per_device.items())),
            "modes": mode_rows,
        }
    combined = {
        "actual_kwh": combined_actual,
        "modes": {
            mode: {
                "estimate_kwh": total,
                "ratio": (combined_actual / total) if total > 0 else None,
            }
            for mode, total in sorted(combined_modes.items())
        },
    }
    return {"sites": sites, "combined": combined}


def realm_rollup(
    device_kwh: Mapping[str, float],
    tree: RealmTree,
    placement: Mapping[str, str],
) -> dict[str, float]:
    """Total kWh per realm, each realm summing its whole subtree.

    Every metered device must be placed in a realm; the root total therefore
    equals the sum over devices.
    """
    unplaced = sorted(set(device_kwh) - set(placement))
    if unplaced:
        raise ConfigError(f"devices without a realm placement: {unplaced}")
    own: dict[str, float] = {rid: 0.0 for rid in tree.realms}
    for device_id, kwh in device_kwh.items():
        realm = placement[device_id]
        if realm not in tree.realms:
            raise ConfigError(f"device {device_id!r} placed in unknown realm {realm!r}")
        own[realm] += kwh

    totals: dict[str, float] = {}

    def visit(realm_id: str) -> float:
        total = own[realm_id] + sum(visit(c) for c in tree.children(realm_id))
        totals[realm_id] = total
        return total

    visit(tree.root)
    return totals


def close_open_segments(
    fleet: DeviceFleet,
    ledger: EnergyLedger,
    seg_start: Mapping[str, datetime],
    upto: datetime,
    device_ids: Iterable[str] | None = None,
) -> dict[str, datetime]:
    """Meter each device from its open-segment start to `upto` and append.

    Returns the new segment starts. Used at report time so the ledger covers
    the full window without toggling any device.
    """
    new_starts: dict[str, datetime] = dict(seg_start)
    for device_id in sorted(device_ids if device_ids is not None else fleet.devices):
        start = seg_start.get(device_id, fleet.started_at)
        if upto <= start:
            continue
        wh = fleet.meter_read(device_id, start, upto)
        ledger.append(device_id, start, upto, wh)
        new_starts[device_id] = upto
    return new_starts
