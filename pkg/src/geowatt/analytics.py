"""Offline analytics over building meter logs.

Works on five channels: outdoor temperature (F), relative humidity (%),
electric energy (kWh), and heating/cooling consumption (BTU). Sub-hourly
samples are resampled to an hourly grid (energies sum, conditions average),
correlations run over consecutive 168-hour weekly windows, and regressions
fit linear and full degree-2 polynomial models against temperature and
humidity by solving the normal equations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError


class Channel(Enum):
    TEMP_F = "temp_f"
    HUMIDITY_PCT = "humidity_pct"
    ELECTRIC_KWH = "electric_kwh"
    HEATING_BTU = "heating_btu"
    COOLING_BTU = "cooling_btu"


# Energy-like channels accumulate within an hour; condition channels average.
EXTENSIVE = frozenset({Channel.ELECTRIC_KWH, Channel.HEATING_BTU, Channel.COOLING_BTU})

# Weekly windows missing more than this share of hours are excluded.
MISSING_HOUR_THRESHOLD = 0.05

HOURS_PER_WEEK = 168


class EmptyResult(Exception):
    """No data satisfied the request (empty series, no complete weeks, ...)."""


class UndefinedCorrelation(Exception):
    """Pearson r does not exist because one series is constant."""


class DegenerateDesign(Exception):
    """The regression design matrix is rank deficient."""

    def __init__(self, terms: Sequence[str]):
        super().__init__(f"collinear terms: {', '.join(terms)}")
        self.terms = tuple(terms)


@dataclass(frozen=True)
class MeterSeries:
    """Raw samples for one channel, strictly increasing in time."""

    channel: Channel
    samples: tuple[tuple[datetime, float], ...]

    def __post_init__(self) -> None:
        for (a, _), (b, _) in zip(self.samples, self.samples[1:]):
            if b <= a:
                raise ValidationError(f"{self.channel.value}: samples not strictly increasing")


@dataclass(frozen=True)
class HourlySeries:
    """One channel on the hourly grid; hours with incomplete coverage are listed missing."""

    channel: Channel
    values: dict[datetime, float]
    missing: tuple[datetime, ...]


def _floor_hour(at: datetime) -> datetime:
    return at.replace(minute=0, second=0, microsecond=0)


def resample_hourly(series: MeterSeries) -> HourlySeries:
    """Collapse sub-hourly samples to hours: sums for energy, means for conditions.

    The sampling interval is inferred from the most common gap and must
    divide one hour. Hours with fewer samples than the interval implies are
    flagged missing and carry no value.
    """
    if not series.samples:
        raise EmptyResult(f"{series.channel.value}: no samples")
    gaps = [
        round((b - a).total_seconds())
        for (a, _), (b, _) in zip(series.samples, series.samples[1:])
    ]
    interval = min(gaps) if gaps else 3600
    if interval <= 0 or 3600 % interval != 0:
        raise ValidationError(
            f"{series.channel.value}: sampling interval {interval}s does not divide one hour"
        )
    expected = 3600 // interval
    buckets: dict[datetime, list[float]] = {}
    for at, value in series.samples:
        buckets.setdefault(_floor_hour(at), []).append(value)
    first = min(buckets)
    last = max(buckets)
    values: dict[datetime, float] = {}
    missing: list[datetime] = []
    hour = first
    while hour <= last:
        got = buckets.get(hour, [])
        if len(got) == expected:
            if series.channel in EXTENSIVE:
                values[hour] = sum(got)
            else:
                values[hour] = sum(got) / len(got)
        else:
            missing.append(hour)
        hour += timedelta(hours=1)
    return HourlySeries(series.channel, values, tuple(missing))


def load_meter_csv(path: str) -> dict[Channel, MeterSeries]:
    """Read `timestamp,channel,value` rows into per-channel series."""
    rows: dict[Channel, list[tuple[datetime, float]]] = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if row[0].strip().lower() == "timestamp":  # optional header
                continue
            if len(row) != 3:
                raise ValidationError(f"line {lineno}: expected 3 columns, got {len(row)}")
            try:
                at = datetime.fromisoformat(row[0].strip())
                channel = Channel(row[1].strip())
                value = float(row[2])
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            rows.setdefault(channel, []).append((at, value))
    return {
        ch: MeterSeries(ch, tuple(sorted(samples)))
        for ch, samples in rows.items()
    }


def write_meter_csv(path: str, series: Iterable[MeterSeries]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "channel", "value"])
        for one in series:
            for at, value in one.samples:
                writer.writerow([at.isoformat(), one.channel.value, f"{value:.6g}"])


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    """Product-moment correlation; raises UndefinedCorrelation for constant input."""
    if len(a) != len(b):
        raise ValidationError("series lengths differ")
    n = len(a)
    if n < 2:
        raise EmptyResult("need at least two points")
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    var_a = sum((x - mean_a) ** 2 for x in a)
    var_b = sum((y - mean_b) ** 2 for y in b)
    if var_a == 0.0 or var_b == 0.0:
        raise UndefinedCorrelation("constant series has no correlation")
    cov = sum((x - mean_a) * (y - mean_b) for x, y in zip(a, b))
    r = cov / math.sqrt(var_a * var_b)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class WeekRow:
    index: int
    start: datetime
    included: bool
    missing_hours: int
    # pair label like "temp_f~electric_kwh" -> r, or None when undefined
    correlations: dict[str, float | None] = field(default_factory=dict)
    flags: dict[str, str] = field(default_factory=dict)


def weekly_correlations(
    hourly: Mapping[Channel, HourlySeries],
    pairs: Sequence[tuple[Channel, Channel]],
) -> list[WeekRow]:
    """Pearson r per pair over consecutive 168-hour windows.

    Windows start at the earliest hour any channel covers. A week missing
    more than 5% of its hours (for the channels involved) is excluded but
    still reported; a constant channel within a week flags that pair
    undefined rather than poisoning the table.
    """
    if not hourly:
        raise EmptyResult("no channels")
    starts = [min(s.values) for s in hourly.values() if s.values]
    ends = [max(s.values) for s in hourly.values() if s.values]
    if not starts:
        raise EmptyResult("no hourly values")
    origin = min(starts)
    span_hours = int((max(ends) - origin).total_seconds() // 3600) + 1
    n_weeks = span_hours // HOURS_PER_WEEK  # trailing partial week dropped
    rows: list[WeekRow] = []
    involved = {ch for pair in pairs for ch in pair}
    for week in range(n_weeks):
        start = origin + timedelta(hours=week * HOURS_PER_WEEK)
        hours = [start + timedelta(hours=i) for i in range(HOURS_PER_WEEK)]
        present = [
            h for h in hours if all(h in hourly[ch].values for ch in involved if ch in hourly)
        ]
        missing = HOURS_PER_WEEK - len(present)
        included = missing <= MISSING_HOUR_THRESHOLD * HOURS_PER_WEEK
        correlations: dict[str, float | None] = {}
        flags: dict[str, str] = {}
        if included:
            for ch_a, ch_b in pairs:
                label = f"{ch_a.value}~{ch_b.value}"
                xs = [hourly[ch_a].values[h] for h in present]
                ys = [hourly[ch_b].values[h] for h in present]
                try:
                    correlations[label] = pearson(xs, ys)
                except UndefinedCorrelation:
                    correlations[label] = None
                    flags[label] = "undefined"
        else:
            flags["week"] = "excluded_missing_hours"
        rows.append(WeekRow(week, start, included, missing, correlations, flags))
    if not rows:
        raise EmptyResult("data spans less than one week")
    return rows


@dataclass(frozen=True)
class RegressionFit:
    model: str  # "mlr" or "mpr"
    terms: tuple[str, ...]
    coefficients: dict[str, float]
    r_squared: float
    n: int


def _solve_normal_equations(
    term_names: Sequence[str], columns: list[np.ndarray], y: np.ndarray, model: str
) -> RegressionFit:
    """Fit by normal equations with a pivoted solve and an explicit rank check."""
    a = np.column_stack(columns)
    n, k = a.shape
    if n < k:
        raise EmptyResult(f"{model}: {n} rows cannot determine {k} terms")
    rank = np.linalg.matrix_rank(a)
    if rank < k:
        # name the offending terms: those adding nothing over their predecessors
        bad: list[str] = []
        prev = 0
        for j in range(1, k + 1):
            r = int(np.linalg.matrix_rank(a[:, :j]))
            if r == prev:
                bad.append(term_names[j - 1])
            prev = r
        raise DegenerateDesign(bad or list(term_names))
    gram = a.T @ a
    beta = np.linalg.solve(gram, a.T @ y)  # LAPACK partial-pivot LU
    residuals = y - a @ beta
    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    if ss_tot > 0.0:
        r_squared = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    else:
        # constant target: the fit is the mean, nothing to explain
        r_squared = 0.0
    return RegressionFit(
        model=model,
        terms=tuple(term_names),
        coefficients={name: float(b) for name, b in zip(term_names, beta)},
        r_squared=r_squared,
        n=n,
    )


def fit_mlr(
    y: Sequence[float], predictors: Mapping[str, Sequence[float]]
) -> RegressionFit:
    """Multiple linear regression with an intercept: y = b0 + sum(bi * Xi)."""
    yv = np.asarray(y, dtype=float)
    names = ["intercept"] + list(predictors)
    cols = [np.ones(len(yv))]
    for name, values in predictors.items():
        v = np.asarray(values, dtype=float)
        if len(v) != len(yv):
            raise ValidationError(f"predictor {name!r} length differs from y")
        cols.append(v)
    return _solve_normal_equations(names, cols, yv, "mlr")


def fit_mpr(
    y: Sequence[float], predictors: Mapping[str, Sequence[float]], degree: int = 2
) -> RegressionFit:
    """Full degree-2 polynomial regression: adds squares and pairwise products."""
    if degree != 2:
        raise ValidationError("only degree 2 is supported")
    yv = np.asarray(y, dtype=float)
    base = {name: np.asarray(v, dtype=float) for name, v in predictors.items()}
    for name, v in base.items():
        if len(v) != len(yv):
            raise ValidationError(f"predictor {name!r} length differs from y")
    names = ["intercept"] + list(base)
    cols = [np.ones(len(yv))] + [base[name] for name in base]
    keys = list(base)
    for name in keys:
        names.append(f"{name}^2")
        cols.append(base[name] ** 2)
    for i, left in enumerate(keys):
        for right in keys[i + 1 :]:
            names.append(f"{left}*{right}")
            cols.append(base[left] * base[right])
    return _solve_normal_equations(names, cols, yv, "mpr")


@dataclass(frozen=True)
class DailyRecord:
    day: date
    hours_present: int
    partial: bool
    totals: dict[str, float]  # extensive channels
    averages: dict[str, float]  # intensive channels


def daily_aggregate(hourly: Mapping[Channel, HourlySeries]) -> list[DailyRecord]:
    """Collapse the hourly grid to calendar days; days with gaps are flagged partial."""
    all_hours: set[datetime] = set()
    for series in hourly.values():
        all_hours.update(series.values)
    if not all_hours:
        raise EmptyResult("no hourly values")
    days = sorted({h.date() for h in all_hours})
    records: list[DailyRecord] = []
    for day in days:
        day_hours = [datetime.combine(day, time(h)) for h in range(24)]
        present = [h for h in day_hours if all(h in s.values for s in hourly.values())]
        totals: dict[str, float] = {}
        averages: dict[str, float] = {}
        for channel, series in hourly.items():
            vals = [series.values[h] for h in present]
            if not vals:
                continue
            if channel in EXTENSIVE:
                totals[channel.value] = sum(vals)
            else:
                averages[channel.value] = sum(vals) / len(vals)
        records.append(
            DailyRecord(
                day=day,
                hours_present=len(present),
                partial=len(present) < 24,
                totals=totals,
                averages=averages,
            )
        )
    return records


def standard_fits(hourly: Mapping[Channel, HourlySeries]) -> list[RegressionFit]:
    """Daily electricity use regressed on daily weather, linear and degree 2.

    Runs on complete days only, with electric kWh per day as the target and
    mean temperature and humidity as predictors.
    """
    y: list[float] = []
    temp: list[float] = []
    hum: list[float] = []
    for rec in daily_aggregate(hourly):
        if rec.partial:
            continue
        kwh = rec.totals.get(Channel.ELECTRIC_KWH.value)
        t = rec.averages.get(Channel.TEMP_F.value)
        h = rec.averages.get(Channel.HUMIDITY_PCT.value)
        if kwh is None or t is None or h is None:
            continue
        y.append(kwh)
        temp.append(t)
        hum.append(h)
    if len(y) < 7:
        raise EmptyResult(f"only {len(y)} complete days with all three channels")
    predictors = {"temp_f": temp, "humidity_pct": hum}
    return [fit_mlr(y, predictors), fit_mpr(y, predictors)]


class Subset:
    OFFICE_HOURS = "office_hours"
    AFTER_HOURS = "after_hours"
    WEEKEND = "weekend"
    FALL_SEMESTER = "fall_semester"
    SUMMER_HOLIDAY = "summer_holiday"


# Working hours run 08:00 to 20:00 on weekdays.
OFFICE_START_HOUR = 8
OFFICE_END_HOUR = 20


@dataclass(frozen=True)
class CalendarSpec:
    """Date ranges for term-time splits; ranges are half-open [start, end)."""

    fall_semester: tuple[date, date]
    summer_holiday: tuple[date, date]

    def days_in(self, subset: str) -> int:
        start, end = (
            self.fall_semester if subset == Subset.FALL_SEMESTER else self.summer_holiday
        )
        return (end - start).days


# The deployment year's calendar: fall term and the summer break before it.
CALENDAR_2011 = CalendarSpec(
    fall_semester=(date(2011, 8, 30), date(2011, 12, 9)),
    summer_holiday=(date(2011, 5, 10), date(2011, 8, 29)),
)


def _hour_subset(at: datetime) -> str:
    if at.weekday() >= 5:
        return Subset.WEEKEND
    if OFFICE_START_HOUR <= at.hour < OFFICE_END_HOUR:
        return Subset.OFFICE_HOURS
    return Subset.AFTER_HOURS


@dataclass(frozen=True)
class SubsetStats:
    subset: str
    hours: int
    # extensive channels normalized to energy per 24 hours; intensive averaged
    per_24h: dict[str, float]
    averages: dict[str, float]


def split_subsets(
    hourly: Mapping[Channel, HourlySeries],
    calendar: CalendarSpec = CALENDAR_2011,
) -> dict[str, SubsetStats]:
    """Usage statistics for the office-hours/after-hours/weekend split plus
    the term-time and holiday date ranges."""
    all_hours: set[datetime] = set()
    for series in hourly.values():
        all_hours.update(series.values)
    if not all_hours:
        raise EmptyResult("no hourly values")

    def in_range(at: datetime, span: tuple[date, date]) -> bool:
        return span[0] <= at.date() < span[1]

    members: dict[str, list[datetime]] = {
        Subset.OFFICE_HOURS: [],
        Subset.AFTER_HOURS: [],
        Subset.WEEKEND: [],
        Subset.FALL_SEMESTER: [],
        Subset.SUMMER_HOLIDAY: [],
    }
    for h in sorted(all_hours):
        members[_hour_subset(h)].append(h)
        if in_range(h, calendar.fall_semester):
            members[Subset.FALL_SEMESTER].append(h)
        elif in_range(h, calendar.summer_holiday):
            members[Subset.SUMMER_HOLIDAY].append(h)

    out: dict[str, SubsetStats] = {}
    for subset, hours in members.items():
        per_24h: dict[str, float] = {}
        averages: dict[str, float] = {}
        for channel, series in hourly.items():
            vals = [series.values[h] for h in hours if h in series.values]
            if not vals:
                continue
            if channel in EXTENSIVE:
                per_24h[channel.value] = sum(vals) / len(vals) * 24.0
            else:
                averages[channel.value] = sum(vals) / len(vals)
        out[subset] = SubsetStats(subset, len(hours), per_24h, averages)
    return out


# -- delimited-text report writers ------------------------------------------


def correlations_csv(rows: Sequence[WeekRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    labels = sorted({label for row in rows for label in row.correlations})
    writer.writerow(["week", "start", "included", "missing_hours", *labels])
    for row in rows:
        cells = [row.index, row.start.isoformat(), int(row.included), row.missing_hours]
        for label in labels:
            r = row.correlations.get(label)
            cells.append("" if r is None else f"{r:.4f}")
        writer.writerow(cells)
    return buf.getvalue()


def regression_csv(fits: Sequence[RegressionFit]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["model", "n", "r_squared", "term", "coefficient"])
    for fit in fits:
        for term in fit.terms:
            writer.writerow(
                [fit.model, fit.n, f"{fit.r_squared:.6f}", term, f"{fit.coefficients[term]:.8g}"]
            )
    return buf.getvalue()


def subsets_csv(stats: Mapping[str, SubsetStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["subset", "hours", "metric", "channel", "value"])
    for subset in sorted(stats):
        s = stats[subset]
        for channel, value in sorted(s.per_24h.items()):
            writer.writerow([subset, s.hours, "per_24h", channel, f"{value:.6g}"])
        for channel, value in sorted(s.averages.items()):
            writer.writerow([subset, s.hours, "average", channel, f"{value:.6g}"])
    return buf.getvalue()


def daily_csv(records: Sequence[DailyRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    channels = sorted(
        {ch for rec in records for ch in (*rec.totals, *rec.averages)}
    )
    writer.writerow(["day", "hours_present", "partial", *channels])
    for rec in records:
        cells: list = [rec.day.isoformat(), rec.hours_present, int(rec.partial)]
        merged = {**rec.totals, **rec.averages}
        for ch in channels:
            value = merged.get(ch)
            cells.append("" if value is None else f"{value:.6g}")
        writer.writerow(cells)
    return buf.getvalue()
