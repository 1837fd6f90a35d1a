"""Deployment configuration: fences, realms, devices, users, modes, estimates.

Configuration is one human-editable YAML document. Everything is validated
at load time so the policy engine never fails mid-resolution: realms must
form a single tree, device realms must exist, rules may only scope devices
on their own chain, fences referenced by conditions must be declared, and
the standard three modes must not grow participation as frugality rises.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from importlib import resources
from typing import Any, Mapping

import yaml

from .devicenet import Constant, DeviceDescriptor, DeviceFleet, DutyCycle, PowerProfile, TwoLevel
from .energy import EstimateTable, ModeRow, UsageSchedule
from .errors import ConfigError
from .policy import (
    DeviceGroup,
    PolicyEngine,
    PolicyRule,
    PresenceCondition,
    RealmTree,
    UserBinding,
    UserMode,
)
from .presence import GeoFence


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    name: str
    building: str
    realm: str
    profile: PowerProfile
    exempt: bool = False
    initial_on: bool = False


@dataclass
class SystemConfig:
    name: str
    fences: dict[str, GeoFence]
    tree: RealmTree
    devices: dict[str, DeviceSpec]
    users: dict[str, UserBinding]
    modes: dict[str, UserMode]
    static_rules: list[PolicyRule]
    estimates: EstimateTable
    schedule: UsageSchedule
    token: str | None = None

    def device_site(self) -> dict[str, str]:
        return {d: spec.building for d, spec in self.devices.items()}

    def device_realm(self) -> dict[str, str]:
        return {d: spec.realm for d, spec in self.devices.items()}

    def exempt_ids(self) -> frozenset[str]:
        return frozenset(d for d, spec in self.devices.items() if spec.exempt)


def _require(mapping: Mapping[str, Any], key: str, context: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{context}: missing key {key!r}")
    return mapping[key]


def parse_profile(raw: Mapping[str, Any], context: str) -> PowerProfile:
    kind = _require(raw, "type", context)
    try:
        if kind == "constant":
            return Constant(watts=float(_require(raw, "watts", context)))
        if kind == "two_level":
            return TwoLevel(
                normal_watts=float(_require(raw, "normal_watts", context)),
                active_watts=float(_require(raw, "active_watts", context)),
                active_fraction=float(raw.get("active_fraction", 0.5)),
            )
        if kind == "duty_cycle":
            return DutyCycle(
                on_watts=float(_require(raw, "on_watts", context)),
                on_minutes=float(_require(raw, "on_minutes", context)),
                off_minutes=float(_require(raw, "off_minutes", context)),
            )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc
    raise ConfigError(f"{context}: unknown profile type {kind!r}")


def _parse_condition(raw: Any, context: str, fences: Mapping[str, GeoFence]) -> PresenceCondition | None:
    if raw is None or raw == "always":
        return None
    user = _require(raw, "user", context)
    fence = _require(raw, "fence", context)
    if fence not in fences:
        raise ConfigError(f"{context}: unknown fence {fence!r}")
    state = _require(raw, "state", context)
    if state not in ("inside", "outside"):
        raise ConfigError(f"{context}: condition state must be inside/outside")
    return PresenceCondition(user=user, fence_id=fence, inside=state == "inside")


_OCCUPANCY_KEYS = {
    "always": "always",
    "awake": "awake",
    "at_home": "at_home",
    "home_awake": "at_home_awake",
    "at_home_awake": "at_home_awake",
    "at_office": "at_office",
    "fixed": "fixed",
    "never": "never",
}


def _parse_mode_row(raw: Mapping[str, Any], context: str) -> ModeRow:
    when = _require(raw, "when", context)
    if when not in _OCCUPANCY_KEYS:
        raise ConfigError(f"{context}: unknown occupancy {when!r}")
    return ModeRow(
        occupancy=_OCCUPANCY_KEYS[when],
        fraction=float(raw.get("fraction", 1.0)),
        fixed_hours=float(raw.get("hours", 0.0)),
    )


def load_config_dict(doc: Mapping[str, Any]) -> SystemConfig:
    if not isinstance(doc, Mapping):
        raise ConfigError("config document must be a mapping")

    fences: dict[str, GeoFence] = {}
    for fence_id, raw in _require(doc, "fences", "config").items():
        ctx = f"fence {fence_id!r}"
        try:
            fences[fence_id] = GeoFence(
                fence_id=fence_id,
                lat=float(_require(raw, "lat", ctx)),
                lon=float(_require(raw, "lon", ctx)),
                enter_radius_m=float(raw.get("enter_radius_m", 300.0)),
                exit_radius_m=float(raw.get("exit_radius_m", 400.0)),
                min_dwell_fixes=int(raw.get("min_dwell_fixes", 3)),
            )
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from exc

    tree = RealmTree(
        (r["id"], r.get("name", r["id"]), r.get("parent"))
        for r in _require(doc, "realms", "config")
    )

    devices: dict[str, DeviceSpec] = {}
    for device_id, raw in _require(doc, "devices", "config").items():
        ctx = f"device {device_id!r}"
        building = _require(raw, "building", ctx)
        if building not in fences:
            raise ConfigError(f"{ctx}: unknown building {building!r}")
        realm = _require(raw, "realm", ctx)
        if realm not in tree:
            raise ConfigError(f"{ctx}: unknown realm {realm!r}")
        devices[device_id] = DeviceSpec(
            device_id=device_id,
            name=raw.get("name", device_id),
            building=building,
            realm=realm,
            profile=parse_profile(_require(raw, "profile", ctx), ctx),
            exempt=bool(raw.get("exempt", False)),
            # YAML reads a bare `on` as boolean true, so accept both spellings
            initial_on=raw.get("initial_state", False) in (True, "on", "ON", "On"),
        )

    modes: dict[str, UserMode] = {}
    for mode_name, fractions in _require(doc, "modes", "config").items():
        modes[mode_name] = UserMode(
            name=mode_name, fractions={g: float(f) for g, f in fractions.items()}
        )

    users: dict[str, UserBinding] = {}
    for user, raw in _require(doc, "users", "config").items():
        ctx = f"user {user!r}"
        site_realms = {}
        for site, realm in _require(raw, "realms", ctx).items():
            if site not in fences:
                raise ConfigError(f"{ctx}: unknown site {site!r}")
            if realm not in tree:
                raise ConfigError(f"{ctx}: unknown realm {realm!r}")
            site_realms[site] = realm
        groups: dict[str, DeviceGroup] = {}
        for group_id, graw in _require(raw, "groups", ctx).items():
            gctx = f"{ctx} group {group_id!r}"
            site = _require(graw, "site", gctx)
            if site not in site_realms:
                raise ConfigError(f"{gctx}: site {site!r} has no realm for this user")
            members = tuple(_require(graw, "devices", gctx))
            for member in members:
                if member not in devices:
                    raise ConfigError(f"{gctx}: unknown device {member!r}")
                if devices[member].exempt:
                    raise ConfigError(f"{gctx}: exempt device {member!r} cannot be grouped")
                if devices[member].building != site:
                    raise ConfigError(f"{gctx}: device {member!r} is not in building {site!r}")
            groups[group_id] = DeviceGroup(
                group_id=group_id,
                site=site,
                devices=members,
                auto_on=bool(graw.get("auto_on", False)),
            )
        mode_name = raw.get("mode", "frugal")
        if mode_name not in modes:
            raise ConfigError(f"{ctx}: unknown mode {mode_name!r}")
        users[user] = UserBinding(user=user, site_realms=site_realms, groups=groups, mode=mode_name)

    static_rules: list[PolicyRule] = []
    for raw in doc.get("rules", []) or []:
        rule_id = _require(raw, "id", "rule")
        ctx = f"rule {rule_id!r}"
        static_rules.append(
            PolicyRule(
                rule_id=rule_id,
                realm_id=_require(raw, "realm", ctx),
                device_scope=frozenset(_require(raw, "devices", ctx)),
                action=_require(raw, "action", ctx),
                condition=_parse_condition(raw.get("when"), ctx, fences),
                priority_note=raw.get("note", ""),
            )
        )

    estimates: dict[str, dict[str, dict[str, ModeRow]]] = {}
    for site, site_raw in _require(doc, "estimates", "config").items():
        if site not in fences:
            raise ConfigError(f"estimates: unknown site {site!r}")
        estimates[site] = {}
        for device_id, rows_raw in site_raw.items():
            if device_id not in devices:
                raise ConfigError(f"estimates: unknown device {device_id!r}")
            ctx = f"estimate {site}/{device_id}"
            rows: dict[str, ModeRow] = {}
            if "all" in rows_raw:
                row = _parse_mode_row(rows_raw["all"], ctx)
                rows = {mode: row for mode in modes}
            for mode_name, row_raw in rows_raw.items():
                if mode_name == "all":
                    continue
                if mode_name not in modes:
                    raise ConfigError(f"{ctx}: unknown mode {mode_name!r}")
                rows[mode_name] = _parse_mode_row(row_raw, ctx)
            missing = set(modes) - set(rows)
            if missing:
                raise ConfigError(f"{ctx}: no row for modes {sorted(missing)}")
            estimates[site][device_id] = rows

    sched_raw = doc.get("schedule", {})
    schedule = UsageSchedule(
        hours_office=float(sched_raw.get("office", 8)),
        hours_home_awake=float(sched_raw.get("home_awake", 8)),
        hours_sleep=float(sched_raw.get("sleep", 8)),
    )

    config = SystemConfig(
        name=doc.get("name", "deployment"),
        fences=fences,
        tree=tree,
        devices=devices,
        users=users,
        modes=modes,
        static_rules=static_rules,
        estimates=estimates,
        schedule=schedule,
        token=doc.get("token"),
    )
    # building the engine runs the full cross-validation (rule chains, mode ordering)
    build_engine(config)
    return config


def load_config(path: str) -> SystemConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return load_config_dict(doc)


def reference_config() -> SystemConfig:
    """The bundled single-user home + office deployment."""
    text = resources.files("geowatt.data").joinpath("reference.yaml").read_text()
    return load_config_dict(yaml.safe_load(text))


def build_fleet(config: SystemConfig, started_at: datetime) -> DeviceFleet:
    fleet = DeviceFleet(started_at=started_at)
    for spec in config.devices.values():
        fleet.add(
            DeviceDescriptor(
                device_id=spec.device_id,
                name=spec.name,
                building=spec.building,
                profile=spec.profile,
                exempt=spec.exempt,
                state=spec.initial_on,
            )
        )
    return fleet


def build_engine(config: SystemConfig) -> PolicyEngine:
    return PolicyEngine(
        tree=config.tree,
        device_realm=config.device_realm(),
        device_building=config.device_site(),
        exempt=config.exempt_ids(),
        modes=config.modes,
        bindings={u: UserBinding(b.user, dict(b.site_realms), dict(b.groups), b.mode) for u, b in config.users.items()},
        static_rules=config.static_rules,
    )
