"""End-to-end acceptance checks.

One test per headline guarantee, each a single pass/fail line under -v:

- mode baseline totals land on the hand-derived kWh/day figures
- the bundled reference-day replay reproduces per-device energies over a
  real TCP device link, and the measured day sits just above frugal
- fence hysteresis is immune to GPS jitter and clean on a commute
- regression fits agree with an independent pure-Python solver
- the NMEA parser survives a 100,000-case fuzz with no false accepts
- policy resolution obeys its safety invariants on randomized inputs
- recovery from any input-aligned log prefix equals the live state

Expected numbers are frozen oracles: every one was computed by hand from
the device wattages, schedules, and scripted timeline before the code under
test existed. None was produced by running this package.
"""

import math
import random
import string
from datetime import datetime, time, timedelta

import pytest

from geowatt.analytics import (
    HOURS_PER_WEEK,
    Channel,
    HourlySeries,
    fit_mlr,
    fit_mpr,
    weekly_correlations,
)
from geowatt.config import build_engine, reference_config
from geowatt.geoloc import (
    METERS_PER_DEGREE,
    FixQuality,
    GeoFix,
    NmeaError,
    gga_sentence,
    parse_nmea,
)
from geowatt.policy import (
    DEFER,
    MANDATE_OFF,
    MANDATE_ON,
    PolicyRule,
    PresenceCondition,
    _applies,
    participating,
    resolve,
)
from geowatt.presence import GeoFence, PresenceTracker
from geowatt.runtime import Runtime, SimClock, recover, reference_day_script, run_replay

T0 = datetime(2011, 10, 12, 0, 0, 0)
HOME = (38.5743, -90.3108)
OFFICE = (38.6488, -90.3050)


def relative_error(got, want):
    return abs(got - want) / abs(want)


# -- baseline estimates --------------------------------------------------------------


def test_mode_baseline_totals():
    """Six site/mode daily totals, five of them exact, all within 0.02 kWh."""
    runtime = Runtime(reference_config(), SimClock(T0))
    estimates = runtime.estimates()
    totals = {
        (site, mode): est.total_kwh
        for site, modes in estimates.items()
        for mode, est in modes.items()
    }
    # hand-derived: sum over devices of watts x participating hours x fraction
    exact = {
        ("home", "luxury"): 11.885,
        ("home", "moderate"): 7.085,
        ("home", "frugal"): 5.165,
        ("office", "luxury"): 5.776,
        ("office", "moderate"): 3.016,
        ("office", "frugal"): 2.304,
    }
    rounded = {
        ("home", "luxury"): 11.90,
        ("home", "moderate"): 7.09,
        ("home", "frugal"): 5.17,
        ("office", "luxury"): 5.78,
        ("office", "moderate"): 3.02,
        ("office", "frugal"): 2.31,
    }
    for key, want in exact.items():
        assert totals[key] == pytest.approx(want, abs=1e-9), key
    for key, want in rounded.items():
        assert abs(totals[key] - want) <= 0.02, (key, totals[key], want)
    runtime.close()
    print("mode baselines: all six totals within 0.02 kWh, five pinned exactly")


# -- reference-day replay -------------------------------------------------------------


def test_reference_day_replay_energy_breakdown(tmp_path):
    """Full scripted day over a real TCP link: per-device and site energies."""
    script = reference_day_script()
    runtime, report = run_replay(
        reference_config(), script, out_dir=str(tmp_path), use_socket=True
    )
    sites = report["comparison"]["sites"]
    per_home = sites["home"]["per_device_kwh"]
    per_office = sites["office"]["per_device_kwh"]

    expected_device_kwh = {
        ("home", "home_lighting"): 2.7,
        ("home", "refrigerator"): 2.22,
        ("home", "microwave"): 0.065,
        ("home", "home_laptop"): 0.3,
        ("office", "office_lighting"): 1.15,
        ("office", "desktop"): 0.96,
        ("office", "office_laptop"): 0.15,
    }
    for (site, device), want in expected_device_kwh.items():
        got = (per_home if site == "home" else per_office)[device]
        assert relative_error(got, want) <= 0.005, (device, got, want)

    assert relative_error(sites["home"]["actual_kwh"], 5.285) <= 0.005
    assert relative_error(sites["office"]["actual_kwh"], 2.26) <= 0.005

    ratio = report["comparison"]["combined"]["modes"]["frugal"]["ratio"]
    assert 1.00 <= ratio <= 1.02, ratio
    # the uncontrolled heating/cooling circuits never ran
    assert per_home["hvac_home"] == 0.0 and per_office["hvac_office"] == 0.0
    print(
        f"reference day: sites {sites['home']['actual_kwh']:.3f}/"
        f"{sites['office']['actual_kwh']:.3f} kWh, frugal ratio {ratio:.4f}"
    )


# -- fence hysteresis ------------------------------------------------------------------


def offset_fix(at, base, north_m, east_m):
    lat = base[0] + north_m / METERS_PER_DEGREE
    lon = base[1] + east_m / (METERS_PER_DEGREE * math.cos(math.radians(base[0])))
    return GeoFix(at.time(), lat, lon, FixQuality.FIX, "")


def test_fence_jitter_immunity_and_clean_commute():
    """10,000 jittered fixes in the dead band emit nothing; a commute emits
    exactly one home exit and one office enter."""
    fences = {
        "home": GeoFence("home", HOME[0], HOME[1], 300.0, 400.0, 3),
        "office": GeoFence("office", OFFICE[0], OFFICE[1], 300.0, 400.0, 3),
    }

    # stationary receiver 350 m out, uniform +-10 m noise on each axis
    tracker = PresenceTracker({"home": fences["home"]})
    rng = random.Random(181818)
    at = T0
    events = []
    for _ in range(10_000):
        jitter_n = rng.uniform(-10.0, 10.0)
        jitter_e = rng.uniform(-10.0, 10.0)
        fix = offset_fix(at, HOME, 350.0 + jitter_n, jitter_e)
        events.extend(tracker.observe("alex", fix, at=at))
        at += timedelta(seconds=30)
    assert events == [], f"jitter produced {len(events)} spurious events"

    # commute: dwell at home, drive over, dwell at the office
    tracker = PresenceTracker(fences)
    at = T0
    events = []

    def push(base, north_m):
        nonlocal at
        events.extend(tracker.observe("alex", offset_fix(at, base, north_m, 0.0), at=at))
        at += timedelta(minutes=1)

    for _ in range(10):
        push(HOME, 0.0)
    for step in range(1, 30):
        # straight-line interpolation between the two centers
        frac = step / 30.0
        lat = HOME[0] + (OFFICE[0] - HOME[0]) * frac
        lon = HOME[1] + (OFFICE[1] - HOME[1]) * frac
        fix = GeoFix(at.time(), lat, lon, FixQuality.FIX, "")
        events.extend(tracker.observe("alex", fix, at=at))
        at += timedelta(minutes=1)
    for _ in range(10):
        push(OFFICE, 0.0)

    home_exits = [e for e in events if e.fence_id == "home" and e.kind == "exit"]
    office_enters = [e for e in events if e.fence_id == "office" and e.kind == "enter"]
    assert len(home_exits) == 1, events
    assert len(office_enters) == 1, events
    print("hysteresis: 0 events in 10,000 jittered fixes; 1 exit + 1 enter on commute")


# -- regression oracle ------------------------------------------------------------------


def gauss_solve(a, b):
    """Plain Gaussian elimination with partial pivoting, no numpy."""
    n = len(a)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(m[r][col]))
        if abs(m[pivot][col]) == 0.0:
            raise ZeroDivisionError("singular system")
        m[col], m[pivot] = m[pivot], m[col]
        for row in range(col + 1, n):
            factor = m[row][col] / m[col][col]
            for k in range(col, n + 1):
                m[row][k] -= factor * m[col][k]
    x = [0.0] * n
    for row in range(n - 1, -1, -1):
        acc = m[row][n] - sum(m[row][k] * x[k] for k in range(row + 1, n))
        x[row] = acc / m[row][row]
    return x


def oracle_fit(y, columns):
    """Normal equations assembled and solved entirely in pure Python."""
    k = len(columns)
    gram = [[sum(ci * cj for ci, cj in zip(columns[i], columns[j])) for j in range(k)]
            for i in range(k)]
    rhs = [sum(ci * yi for ci, yi in zip(columns[i], y)) for i in range(k)]
    return gauss_solve(gram, rhs)


def test_regression_matches_independent_solver():
    """20 seeded datasets, n = 245: coefficients agree to 1e-9 relative."""
    for seed in range(20):
        rng = random.Random(9000 + seed)
        n = 245
        xs = [rng.uniform(20.0, 95.0) for _ in range(n)]
        zs = [rng.uniform(10.0, 90.0) for _ in range(n)]
        ys = [
            12.0 - 0.21 * x + 0.05 * z + 0.003 * x * x + rng.gauss(0.0, 2.0)
            for x, z in zip(xs, zs)
        ]
        predictors = {"temp_f": xs, "humidity_pct": zs}

        mlr = fit_mlr(ys, predictors)
        ones = [1.0] * n
        want = oracle_fit(ys, [ones, xs, zs])
        for got, expected in zip(
            (mlr.coefficients[t] for t in mlr.terms), want
        ):
            assert abs(got - expected) <= 1e-9 * max(1.0, abs(expected)), seed

        mpr = fit_mpr(ys, predictors)
        x2 = [x * x for x in xs]
        z2 = [z * z for z in zs]
        xz = [x * z for x, z in zip(xs, zs)]
        want = oracle_fit(ys, [ones, xs, zs, x2, z2, xz])
        for got, expected in zip(
            (mpr.coefficients[t] for t in mpr.terms), want
        ):
            assert abs(got - expected) <= 1e-9 * max(1.0, abs(expected)), seed

        assert mpr.r_squared >= mlr.r_squared, seed

    # an exact quadratic is recovered perfectly
    rng = random.Random(77)
    xs = [rng.uniform(-5, 5) for _ in range(245)]
    zs = [rng.uniform(-5, 5) for _ in range(245)]
    ys = [2.0 + xs[i] - 3.0 * zs[i] + 0.5 * xs[i] ** 2 for i in range(245)]
    assert fit_mpr(ys, {"x": xs, "z": zs}).r_squared == pytest.approx(1.0, abs=1e-9)

    # weekly correlation windows hold exactly 168 hourly samples
    assert HOURS_PER_WEEK == 168
    values = {T0 + timedelta(hours=i): math.sin(i / 9.0) for i in range(168 * 3)}
    other = {T0 + timedelta(hours=i): math.cos(i / 7.0) for i in range(168 * 3)}
    rows = weekly_correlations(
        {
            Channel.TEMP_F: HourlySeries(Channel.TEMP_F, values, ()),
            Channel.ELECTRIC_KWH: HourlySeries(Channel.ELECTRIC_KWH, other, ()),
        },
        [(Channel.TEMP_F, Channel.ELECTRIC_KWH)],
    )
    assert len(rows) == 3
    for i, row in enumerate(rows):
        assert row.start == T0 + timedelta(hours=168 * i)
        assert row.missing_hours == 0 and row.included
    print("regressions: 20/20 datasets match the pure-Python oracle at 1e-9")


# -- parser fuzz -----------------------------------------------------------------------


def is_fix(result):
    return isinstance(result, GeoFix) and result.quality is FixQuality.FIX


def test_nmea_parser_fuzz():
    """100,000 inputs: no crash anywhere, no fix from a known-invalid frame."""
    rng = random.Random(55555)
    crashes = 0
    false_accepts = 0
    cases = 0

    def random_coords():
        return rng.uniform(-89.999, 89.999), rng.uniform(-179.999, 179.999)

    # 25,000 well-formed sentences must round-trip
    for _ in range(25_000):
        lat, lon = random_coords()
        stamp = time(rng.randrange(24), rng.randrange(60), rng.randrange(60))
        sentence = gga_sentence(stamp, lat, lon)
        fix = parse_nmea(sentence)
        assert is_fix(fix)
        assert abs(fix.latitude - lat) < 1e-6
        assert abs(fix.longitude - lon) < 1e-6
        cases += 1

    # 25,000 single-character payload mutations: the checksum no longer matches
    for _ in range(25_000):
        lat, lon = random_coords()
        sentence = gga_sentence(time(12, 30, 15), lat, lon)
        star = sentence.index("*")
        pos = rng.randrange(1, star)  # inside the checksummed payload
        old = sentence[pos]
        new = rng.choice([c for c in string.ascii_uppercase + string.digits if c != old])
        corrupted = sentence[:pos] + new + sentence[pos + 1 :]
        try:
            result = parse_nmea(corrupted)
            if is_fix(result):
                false_accepts += 1
        except NmeaError:
            pass
        except Exception:
            crashes += 1
        cases += 1

    # 25,000 framing-broken strings: missing '$' or an unterminated checksum
    for _ in range(25_000):
        body = "".join(rng.choices(string.printable[:-6], k=rng.randrange(0, 60)))
        broken = body if rng.random() < 0.5 else "$" + body.replace("*", "")
        try:
            result = parse_nmea(broken)
            if is_fix(result):
                false_accepts += 1
        except NmeaError:
            pass
        except Exception:
            crashes += 1
        cases += 1

    # 25,000 unrestricted byte salads: totality only
    for _ in range(25_000):
        blob = "".join(chr(rng.randrange(1, 256)) for _ in range(rng.randrange(0, 90)))
        try:
            result = parse_nmea(blob)
            if is_fix(result):
                false_accepts += 1  # would need a valid frame by pure chance
        except NmeaError:
            pass
        except Exception:
            crashes += 1
        cases += 1

    assert cases == 100_000
    assert crashes == 0
    assert false_accepts == 0

    # the canonical sentence every receiver datasheet quotes
    canonical = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47"
    fix = parse_nmea(canonical)
    assert abs(fix.latitude - 48.1173) < 1e-6
    assert abs(fix.longitude - 11.516667) < 1e-6
    print("parser fuzz: 100,000 cases, 0 crashes, 0 false accepts")


# -- policy safety ----------------------------------------------------------------------


def brute_force_resolution(tree, rules, device, ctx):
    chain = tree.chain  # realm chains are root -> leaf
    for realm in chain(rules["_device_realm"][device]):
        applicable = [
            r
            for r in rules["rules"]
            if r.realm_id == realm and _applies(r, device, ctx)
        ]
        mandates = [r for r in applicable if r.action != DEFER]
        if mandates:
            return not any(r.action == MANDATE_OFF for r in mandates)
    return None


def test_policy_safety_properties():
    """1,000 randomized rule sets and presence traces."""
    config = reference_config()
    device_ids = sorted(config.devices)
    exempt = config.exempt_ids()
    rng = random.Random(31337)
    statuses = ["inside", "outside", "unknown"]

    commands_seen = 0
    for round_no in range(1_000):
        engine = build_engine(config)
        engine.set_user_mode("alex", rng.choice(["luxury", "moderate", "frugal"]))

        # random standing rules, realm always drawn from the device's own chain
        for i in range(rng.randrange(0, 5)):
            device = rng.choice(device_ids)
            chain = config.tree.chain(config.devices[device].realm)
            condition = None
            if rng.random() < 0.5:
                condition = PresenceCondition(
                    "alex", rng.choice(["home", "office"]), inside=rng.random() < 0.5
                )
            engine.upsert_rule(
                PolicyRule(
                    rule_id=f"t{round_no}:{i}",
                    realm_id=rng.choice(chain),
                    device_scope=frozenset({device}),
                    action=rng.choice([MANDATE_ON, MANDATE_OFF, DEFER]),
                    condition=condition,
                )
            )

        ctx = {}
        for fence in ("home", "office"):
            status = rng.choice(statuses)
            if status != "unknown":
                ctx[("alex", fence)] = status
        current = {d: rng.random() < 0.5 for d in device_ids}

        decisions, commands = engine._evaluate(device_ids, ctx, current)
        commands_seen += len(commands)

        # safety: exempt circuits are untouchable
        for device, _, _ in commands:
            assert device not in exempt, (round_no, device)
        for decision in decisions:
            assert decision.device_id not in exempt, round_no

        # agreement with an independent restatement of the precedence order
        rules_by_realm = {}
        for rule in engine.all_rules():
            rules_by_realm.setdefault(rule.realm_id, []).append(rule)
        for device in device_ids:
            if device in exempt:
                continue
            got = engine.resolve(device, ctx)
            chain = config.tree.chain(config.devices[device].realm)
            expected = brute_force_resolution(
                config.tree,
                {"rules": list(engine.all_rules()), "_device_realm": config.device_realm()},
                device,
                ctx,
            )
            if expected is None:
                assert got is None, (round_no, device)
            else:
                assert got is not None and got.turn_on == expected, (round_no, device)

    # tightening the mode can only shrink each group's on-set
    for binding in config.users.values():
        for group in binding.groups.values():
            frugal = set(participating(group.devices, config.modes["frugal"].fraction(group.group_id)))
            moderate = set(participating(group.devices, config.modes["moderate"].fraction(group.group_id)))
            luxury = set(participating(group.devices, config.modes["luxury"].fraction(group.group_id)))
            assert frugal <= moderate <= luxury
    assert commands_seen > 0
    print("policy safety: 1,000 rounds, exempt untouched, resolution matches oracle")


# -- crash consistency -------------------------------------------------------------------


def test_recovery_from_random_prefixes():
    """recover(log prefix) == the live snapshot taken at that input, 100 times."""
    config = reference_config()
    script = reference_day_script()
    runtime = Runtime(config, SimClock(script.start))

    inputs = sorted(
        [("fix", f.at, f) for f in script.fixes]
        + [("manual", e.at, e) for e in script.manual_events]
        + [("mode", c.at, c) for c in script.mode_changes],
        key=lambda row: (row[1], {"fix": 0, "manual": 1, "mode": 2}[row[0]]),
    )

    checkpoints = []  # (record_count, snapshot) right after each input settles
    for kind, at, item in inputs:
        if kind == "fix":
            runtime.post_location(item.user, nmea=item.nmea, at=at)
        elif kind == "manual":
            runtime.set_device_state(item.device, item.on, origin="manual", at=at)
        else:
            runtime.set_user_mode(item.user, item.mode, at=at)
        checkpoints.append((runtime.log.last_seq, runtime.snapshot()))
    runtime.finalize(script.end)
    checkpoints.append((runtime.log.last_seq, runtime.snapshot()))

    rng = random.Random(271828)
    sample = rng.sample(range(len(checkpoints)), 99) + [len(checkpoints) - 1]
    records = runtime.log.records
    for index in sample:
        seq, expected = checkpoints[index]
        rebuilt = recover(records[:seq], config)
        assert rebuilt.snapshot() == expected, f"prefix at seq {seq} diverged"
        rebuilt.close()
    runtime.close()
    print("recovery: 100/100 prefixes rebuilt to the exact live snapshot")
