"""Presence-driven power control for small building fleets.

Location fixes come in over NMEA, geofence hysteresis turns them into
enter/exit events, a realm-scoped rule tree decides which circuits may draw
power, and exact interval metering accounts for every watt-hour along the
way. The runtime subpackage ties the pieces together behind an event log,
a replay driver, and a JSON HTTP API.
"""

__version__ = "0.1.0"

from .analytics import Channel
from .config import SystemConfig, load_config, reference_config
from .devicenet import DeviceFleet, FleetServer
from .energy import EnergyLedger
from .errors import ConfigError, ValidationError
from .geoloc import GeoFix, parse_nmea
from .policy import PolicyEngine
from .presence import GeoFence, PresenceTracker
from .runtime import Runtime, run_replay

__all__ = [
    "Channel",
    "ConfigError",
    "DeviceFleet",
    "EnergyLedger",
    "FleetServer",
    "GeoFence",
    "GeoFix",
    "PolicyEngine",
    "PresenceTracker",
    "Runtime",
    "SystemConfig",
    "ValidationError",
    "__version__",
    "load_config",
    "parse_nmea",
    "reference_config",
    "run_replay",
]
