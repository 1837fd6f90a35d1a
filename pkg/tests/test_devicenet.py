"""Device fleet: power profiles, exact metering, and the wire protocol."""

import threading
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geowatt.devicenet import (
    Constant,
    DeviceDescriptor,
    DeviceFleet,
    DutyCycle,
    ExemptDevice,
    FleetServer,
    HistoryGap,
    InProcessLink,
    SocketLink,
    TwoLevel,
    UnknownDevice,
    average_watts,
    parse_reply,
)

T0 = datetime(2011, 10, 12, 0, 0, 0)


def make_fleet() -> DeviceFleet:
    fleet = DeviceFleet(started_at=T0)
    fleet.add(DeviceDescriptor("lamp", "Lamp", "home", Constant(550.0)))
    fleet.add(DeviceDescriptor("laptop", "Laptop", "home", TwoLevel(41.0, 60.0, 0.5)))
    fleet.add(
        DeviceDescriptor("fridge", "Fridge", "home", DutyCycle(185.0, 9.0, 9.0),
                         exempt=True, state=True)
    )
    return fleet


# -- profiles -----------------------------------------------------------------


def test_average_watts():
    assert average_watts(Constant(550)) == 550
    assert average_watts(TwoLevel(41, 60, 0.5)) == pytest.approx(50.5)
    assert average_watts(TwoLevel(41, 60, 0.0)) == 41
    assert average_watts(DutyCycle(185, 9, 9)) == pytest.approx(92.5)
    assert average_watts(DutyCycle(100, 30, 0)) == 100


def test_profile_validation():
    with pytest.raises(ValueError):
        TwoLevel(41, 60, 1.5)
    with pytest.raises(ValueError):
        DutyCycle(185, 0, 9)


# -- state history and metering ------------------------------------------------


def test_constant_power_and_energy():
    fleet = make_fleet()
    fleet.advance(T0 + timedelta(hours=1))
    fleet.set_state("lamp", True)
    fleet.advance(T0 + timedelta(hours=3))
    fleet.set_state("lamp", False)
    fleet.advance(T0 + timedelta(hours=4))
    assert fleet.meter_read("lamp", T0, T0 + timedelta(hours=4)) == pytest.approx(1100.0)
    # window cropped to half the on-segment
    assert fleet.meter_read(
        "lamp", T0 + timedelta(hours=2), T0 + timedelta(hours=4)
    ) == pytest.approx(550.0)
    assert fleet.power_at("lamp", T0 + timedelta(hours=2)) == 550.0
    assert fleet.power_at("lamp", T0 + timedelta(minutes=30)) == 0.0


def test_duty_cycle_phase_anchors_at_switch_on():
    fleet = DeviceFleet(started_at=T0)
    fleet.add(DeviceDescriptor("d", "D", "b", DutyCycle(185.0, 9.0, 9.0)))
    on_at = T0 + timedelta(minutes=7)
    fleet.advance(on_at)
    fleet.set_state("d", True)
    fleet.advance(T0 + timedelta(hours=2))
    # 9 minutes on from the switch-on instant, then 9 off
    assert fleet.power_at("d", on_at + timedelta(minutes=4)) == 185.0
    assert fleet.power_at("d", on_at + timedelta(minutes=9, seconds=1)) == 0.0
    assert fleet.power_at("d", on_at + timedelta(minutes=18, seconds=30)) == 185.0
    # first full cycle = 9 min * 185 W = 27.75 Wh
    wh = fleet.meter_read("d", on_at, on_at + timedelta(minutes=18))
    assert wh == pytest.approx(185.0 * 9 / 60)


def test_duty_cycle_full_day_energy():
    fleet = make_fleet()  # fridge starts on at T0
    fleet.advance(T0 + timedelta(days=1))
    wh = fleet.meter_read("fridge", T0, T0 + timedelta(days=1))
    assert wh == pytest.approx(2220.0)  # 80 full 9/9 cycles


def test_duty_cycle_partial_windows_sum_to_whole():
    fleet = make_fleet()
    end = T0 + timedelta(hours=5)
    fleet.advance(end)
    cuts = [T0 + timedelta(minutes=m) for m in (0, 13, 27, 100, 300)]
    parts = [
        fleet.meter_read("fridge", a, b) for a, b in zip(cuts, cuts[1:])
    ]
    assert sum(parts) == pytest.approx(fleet.meter_read("fridge", T0, end))


def test_two_level_uses_blended_average():
    fleet = make_fleet()
    fleet.set_state("laptop", True)
    fleet.advance(T0 + timedelta(hours=2))
    assert fleet.meter_read("laptop", T0, T0 + timedelta(hours=2)) == pytest.approx(101.0)
    assert fleet.power_at("laptop") == pytest.approx(50.5)


def test_meter_rejects_windows_outside_history():
    fleet = make_fleet()
    fleet.advance(T0 + timedelta(hours=1))
    with pytest.raises(HistoryGap):
        fleet.meter_read("lamp", T0 - timedelta(seconds=1), T0)
    with pytest.raises(HistoryGap):
        fleet.meter_read("lamp", T0, T0 + timedelta(hours=1, seconds=1))
    with pytest.raises(HistoryGap):
        fleet.meter_read("lamp", T0 + timedelta(hours=1), T0)


def test_set_state_guards():
    fleet = make_fleet()
    with pytest.raises(ExemptDevice):
        fleet.set_state("fridge", False)
    with pytest.raises(UnknownDevice):
        fleet.set_state("toaster", True)
    assert fleet.set_state("lamp", True) is True
    before = fleet.devices["lamp"].state_since
    fleet.advance(T0 + timedelta(minutes=5))
    assert fleet.set_state("lamp", True) is False  # no-op keeps the anchor
    assert fleet.devices["lamp"].state_since == before


def test_clock_never_moves_backwards():
    fleet = make_fleet()
    fleet.advance(T0 + timedelta(hours=2))
    fleet.advance(T0 + timedelta(hours=1))
    assert fleet.now == T0 + timedelta(hours=2)


# -- wire protocol -------------------------------------------------------------


def test_protocol_get_set_power():
    fleet = make_fleet()
    link = InProcessLink(fleet)
    assert link.send("GET lamp") == "STATE lamp OFF"
    assert link.send("SET lamp ON") == "OK lamp ON"
    assert link.send("GET lamp") == "STATE lamp ON"
    assert link.send("POWER lamp") == "POWER lamp 550"
    assert link.send("SET fridge OFF") == "ERR fridge EXEMPT"
    assert link.send("GET toaster") == "ERR toaster UNKNOWN"
    assert link.send("SET lamp BLINK") == "ERR - BADCMD"
    assert link.send("") == "ERR - BADCMD"
    assert link.send("LIST EXTRA") == "ERR - BADCMD"


def test_protocol_list_shape():
    fleet = make_fleet()
    reply = fleet.handle_command("LIST")
    lines = reply.split("\n")
    assert lines[0] == "DEVICES 3"
    assert lines[1] == "DEVICE fridge ON 1"
    assert lines[2] == "DEVICE lamp OFF 0"
    assert lines[3] == "DEVICE laptop OFF 0"


def test_parse_reply_round_trips_every_form():
    fleet = make_fleet()
    for cmd, kind in [
        ("GET lamp", "state"),
        ("SET lamp ON", "ok"),
        ("POWER lamp", "power"),
        ("LIST", "list"),
        ("SET fridge ON", "err"),
        ("NOPE", "err"),
    ]:
        parsed = parse_reply(fleet.handle_command(cmd))
        assert parsed["kind"] == kind


def test_parse_reply_rejects_malformed():
    with pytest.raises(ValueError):
        parse_reply("HELLO")
    with pytest.raises(ValueError):
        parse_reply("DEVICES 2\nDEVICE a ON 0")  # count mismatch


@settings(max_examples=200)
@given(st.text(max_size=40))
def test_protocol_totality(line):
    """Arbitrary input lines always get a parseable single reply."""
    fleet = make_fleet()
    if "\n" in line or "\r" in line:
        line = line.replace("\n", " ").replace("\r", " ")
    reply = fleet.handle_command(line)
    assert parse_reply(reply)["kind"] in ("state", "ok", "err", "power", "list")


# -- TCP transport --------------------------------------------------------------


def test_socket_link_round_trip():
    fleet = make_fleet()
    server = FleetServer(fleet)
    server.start()
    try:
        link = SocketLink("127.0.0.1", server.port)
        try:
            assert link.send("SET lamp ON") == "OK lamp ON"
            assert fleet.state("lamp") is True
            listing = parse_reply(link.send("LIST"))
            assert len(listing["devices"]) == 3
            assert link.send("POWER lamp") == "POWER lamp 550"
        finally:
            link.close()
    finally:
        server.stop()


def test_socket_link_concurrent_clients():
    fleet = make_fleet()
    server = FleetServer(fleet)
    server.start()
    errors: list[Exception] = []

    def hammer(n: int) -> None:
        try:
            link = SocketLink("127.0.0.1", server.port)
            try:
                for i in range(50):
                    want = "ON" if (n + i) % 2 == 0 else "OFF"
                    reply = link.send(f"SET lamp {want}")
                    assert reply == f"OK lamp {want}"
                    parse_reply(link.send("LIST"))
            finally:
                link.close()
        except Exception as exc:  # propagated to the main thread below
            errors.append(exc)

    threads = [threading.Thread(target=hammer, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=30)
    server.stop()
    assert errors == []
