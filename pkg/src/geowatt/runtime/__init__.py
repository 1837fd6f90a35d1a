"""Live pipeline: clocks, event log, replay driver, and the HTTP layer."""

from .api import ApiServer
from .clock import SimClock, WallClock
from .eventlog import EventKind, EventLog, EventRecord, read_log, write_log
from .pipeline import Runtime, recover
from .reference import reference_day_script
from .replay import (
    LocationFix,
    ManualEvent,
    ModeChange,
    ScenarioScript,
    load_script,
    play_script,
    report_csv,
    run_replay,
    save_script,
)

__all__ = [
    "ApiServer",
    "EventKind",
    "EventLog",
    "EventRecord",
    "LocationFix",
    "ManualEvent",
    "ModeChange",
    "Runtime",
    "ScenarioScript",
    "SimClock",
    "WallClock",
    "load_script",
    "play_script",
    "read_log",
    "recover",
    "reference_day_script",
    "report_csv",
    "run_replay",
    "save_script",
    "write_log",
]
