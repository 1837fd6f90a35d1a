"""Hierarchical on/off policy over a realm tree.

Realms form a tree (organization at the root, buildings and user territories
beneath). Rules attach to realms; resolution walks the device's chain from
the root and the shallowest realm holding an applicable mandate decides,
with Off beating On inside a single realm. Defer rules pass control deeper
but stay on the decision's provenance trail.

User modes (luxury, moderate, frugal) are realized as generated rules in the
user's own realm: each device group participates with a per-mode fraction,
and a fraction f over n circuits enables the first ceil(f*n) of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import ConfigError
from .presence import PresenceStatus

MANDATE_ON = "mandate_on"
MANDATE_OFF = "mandate_off"
DEFER = "defer"

_ACTIONS = (MANDATE_ON, MANDATE_OFF, DEFER)

LUXURY = "luxury"
MODERATE = "moderate"
FRUGAL = "frugal"
STANDARD_MODES = (LUXURY, MODERATE, FRUGAL)


@dataclass(frozen=True)
class Realm:
    realm_id: str
    name: str
    parent: str | None
    depth: int


class RealmTree:
    """Validated realm hierarchy; single root, no cycles, depth = parent + 1."""

    def __init__(self, definitions: Iterable[tuple[str, str, str | None]]):
        defs = list(definitions)
        by_id: dict[str, tuple[str, str | None]] = {}
        for realm_id, name, parent in defs:
            if realm_id in by_id:
                raise ConfigError(f"duplicate realm {realm_id!r}")
            by_id[realm_id] = (name, parent)
        roots = [rid for rid, (_, parent) in by_id.items() if parent is None]
        if len(roots) != 1:
            raise ConfigError(f"expected exactly one root realm, found {len(roots)}")
        self.realms: dict[str, Realm] = {}
        self._children: dict[str, list[str]] = {rid: [] for rid in by_id}

        def build(realm_id: str, depth: int, seen: set[str]) -> None:
            if realm_id in seen:
                raise ConfigError(f"realm cycle through {realm_id!r}")
            name, parent = by_id[realm_id]
            self.realms[realm_id] = Realm(realm_id, name, parent, depth)
            for child, (_, p) in by_id.items():
                if p == realm_id:
                    self._children[realm_id].append(child)
                    build(child, depth + 1, seen | {realm_id})

        build(roots[0], 0, set())
        if len(self.realms) != len(by_id):
            orphans = sorted(set(by_id) - set(self.realms))
            raise ConfigError(f"unreachable realms (bad parents): {orphans}")
        self.root = roots[0]

    def __contains__(self, realm_id: str) -> bool:
        return realm_id in self.realms

    def children(self, realm_id: str) -> list[str]:
        return list(self._children[realm_id])

    def chain(self, realm_id: str) -> list[str]:
        """Realm ids from the root down to realm_id inclusive."""
        if realm_id not in self.realms:
            raise ConfigError(f"unknown realm {realm_id!r}")
        out = [realm_id]
        parent = self.realms[realm_id].parent
        while parent is not None:
            out.append(parent)
            parent = self.realms[parent].parent
        return list(reversed(out))

    def is_ancestor_or_self(self, shallow: str, deep: str) -> bool:
        return shallow in self.chain(deep)


@dataclass(frozen=True)
class PresenceCondition:
    """Holds when the tracked user is confirmed inside (or outside) a fence."""

    user: str
    fence_id: str
    inside: bool


# condition None means the rule always applies
Condition = PresenceCondition | None


@dataclass(frozen=True)
class PolicyRule:
    rule_id: str
    realm_id: str
    device_scope: frozenset[str]
    action: str
    condition: Condition = None
    priority_note: str = ""

    def __post_init__(self) -> None:
        if self.action not in _ACTIONS:
            raise ConfigError(f"rule {self.rule_id!r}: bad action {self.action!r}")
        if not self.device_scope:
            raise ConfigError(f"rule {self.rule_id!r}: empty device scope")


@dataclass(frozen=True)
class Decision:
    """A resolved desired state plus the root-to-leaf trail that produced it."""

    device_id: str
    turn_on: bool
    provenance: tuple[tuple[str, str], ...]  # (realm_id, rule_id) pairs


PresenceContext = Mapping[tuple[str, str], str]  # (user, fence_id) -> PresenceStatus.*


def _applies(rule: PolicyRule, device_id: str, ctx: PresenceContext) -> bool:
    if device_id not in rule.device_scope:
        return False
    cond = rule.condition
    if cond is None:
        return True
    status = ctx.get((cond.user, cond.fence_id), PresenceStatus.UNKNOWN)
    if status == PresenceStatus.UNKNOWN:
        return False
    return (status == PresenceStatus.INSIDE) == cond.inside


def resolve(
    chain: list[str],
    rules_by_realm: Mapping[str, list[PolicyRule]],
    device_id: str,
    ctx: PresenceContext,
) -> Decision | None:
    """Walk the chain root -> leaf; the shallowest applicable mandate decides.

    Within one realm an applicable Off mandate beats On. Applicable Defer
    rules pass control deeper and are recorded on the provenance trail.
    Returns None when no rule anywhere applies (no-op).
    """
    provenance: list[tuple[str, str]] = []
    for realm_id in chain:
        applicable = [
            r
            for r in sorted(rules_by_realm.get(realm_id, []), key=lambda r: r.rule_id)
            if _applies(r, device_id, ctx)
        ]
        if not applicable:
            continue
        mandates = [r for r in applicable if r.action != DEFER]
        if not mandates:
            provenance.extend((realm_id, r.rule_id) for r in applicable)
            continue
        offs = [r for r in mandates if r.action == MANDATE_OFF]
        winners = offs if offs else mandates
        provenance.extend((realm_id, r.rule_id) for r in winners)
        return Decision(device_id=device_id, turn_on=not offs, provenance=tuple(provenance))
    return None


@dataclass(frozen=True)
class DeviceGroup:
    """A named set of circuits sharing one site and one participation fraction."""

    group_id: str
    site: str  # fence id whose presence gates the group
    devices: tuple[str, ...]
    auto_on: bool = False  # command participating circuits On upon arrival

    def __post_init__(self) -> None:
        if not self.devices:
            raise ConfigError(f"group {self.group_id!r} has no devices")


@dataclass(frozen=True)
class UserMode:
    """Participation fractions per device group, in [0, 1]."""

    name: str
    fractions: Mapping[str, float]

    def __post_init__(self) -> None:
        for group, f in self.fractions.items():
            if not 0.0 <= f <= 1.0:
                raise ConfigError(f"mode {self.name!r}: fraction {f} for {group!r} not in [0, 1]")

    def fraction(self, group_id: str) -> float:
        try:
            return self.fractions[group_id]
        except KeyError:
            raise ConfigError(f"mode {self.name!r} has no fraction for group {group_id!r}") from None


def check_mode_ordering(modes: Mapping[str, UserMode], groups: Iterable[str]) -> None:
    """The standard three modes must not grow participation as frugality rises."""
    if not all(name in modes for name in STANDARD_MODES):
        return
    for group in groups:
        lux = modes[LUXURY].fraction(group)
        mod = modes[MODERATE].fraction(group)
        fru = modes[FRUGAL].fraction(group)
        if not lux >= mod >= fru:
            raise ConfigError(
                f"group {group!r}: fractions must satisfy luxury >= moderate >= frugal "
                f"(got {lux}/{mod}/{fru})"
            )


def participating(devices: tuple[str, ...], fraction: float) -> tuple[str, ...]:
    """First ceil(fraction * n) circuits in listed order; deterministic."""
    if fraction <= 0.0:
        return ()
    return devices[: math.ceil(fraction * len(devices))]


def mode_rules(user: str, realm_id: str, group: DeviceGroup, fraction: float) -> list[PolicyRule]:
    """Generate the user-realm rules realizing one group's participation.

    Arrival mandates cover only the participating prefix; excluded circuits
    are forced off while present, and everything goes off when away.
    """
    part = participating(group.devices, fraction)
    rest = tuple(d for d in group.devices if d not in part)
    prefix = f"{user}:{group.group_id}"
    rules = [
        PolicyRule(
            rule_id=f"{prefix}:away-off",
            realm_id=realm_id,
            device_scope=frozenset(group.devices),
            action=MANDATE_OFF,
            condition=PresenceCondition(user, group.site, inside=False),
        )
    ]
    if group.auto_on and part:
        rules.append(
            PolicyRule(
                rule_id=f"{prefix}:arrive-on",
                realm_id=realm_id,
                device_scope=frozenset(part),
                action=MANDATE_ON,
                condition=PresenceCondition(user, group.site, inside=True),
            )
        )
    if rest:
        rules.append(
            PolicyRule(
                rule_id=f"{prefix}:excluded-off",
                realm_id=realm_id,
                device_scope=frozenset(rest),
                action=MANDATE_OFF,
                condition=PresenceCondition(user, group.site, inside=True),
            )
        )
    return rules


@dataclass
class UserBinding:
    """One user's groups and the realm their generated rules live in, per site."""

    user: str
    site_realms: dict[str, str]  # fence id -> realm id
    groups: dict[str, DeviceGroup]
    mode: str = FRUGAL


class PolicyEngine:
    """Holds the realm tree, static rules, and per-user generated mode rules."""

    def __init__(
        self,
        tree: RealmTree,
        device_realm: Mapping[str, str],
        device_building: Mapping[str, str],
        exempt: frozenset[str],
        modes: Mapping[str, UserMode],
        bindings: Mapping[str, UserBinding],
        static_rules: Iterable[PolicyRule] = (),
    ):
        self.tree = tree
        self.device_realm = dict(device_realm)
        self.device_building = dict(device_building)
        self.exempt = exempt
        self.modes = dict(modes)
        # copy bindings: set_user_mode mutates them, and the source mapping
        # (usually the loaded config) must stay pristine for later rebuilds
        self.bindings = {u: replace(b) for u, b in bindings.items()}
        self.static_rules: dict[str, PolicyRule] = {}
        self._generated: dict[str, list[PolicyRule]] = {}  # per user
        self._rules_by_realm: dict[str, list[PolicyRule]] = {}
        for rule in static_rules:
            self._validate_rule(rule)
            self.static_rules[rule.rule_id] = rule
        check_mode_ordering(self.modes, self._all_groups())
        for user, binding in self.bindings.items():
            self._generated[user] = self._rules_for_mode(user, binding.mode)
        self._reindex()

    def _all_groups(self) -> list[str]:
        seen: list[str] = []
        for binding in self.bindings.values():
            seen.extend(binding.groups)
        return seen

    def _validate_rule(self, rule: PolicyRule) -> None:
        if rule.realm_id not in self.tree:
            raise ConfigError(f"rule {rule.rule_id!r}: unknown realm {rule.realm_id!r}")
        for device_id in rule.device_scope:
            realm = self.device_realm.get(device_id)
            if realm is None:
                raise ConfigError(f"rule {rule.rule_id!r}: unknown device {device_id!r}")
            if not self.tree.is_ancestor_or_self(rule.realm_id, realm):
                raise ConfigError(
                    f"rule {rule.rule_id!r}: realm {rule.realm_id!r} is not on the "
                    f"chain of device {device_id!r}"
                )

    def _rules_for_mode(self, user: str, mode_name: str) -> list[PolicyRule]:
        binding = self.bindings[user]
        mode = self.modes.get(mode_name)
        if mode is None:
            raise ConfigError(f"unknown mode {mode_name!r}")
        rules: list[PolicyRule] = []
        for group_id in sorted(binding.groups):
            group = binding.groups[group_id]
            realm_id = binding.site_realms[group.site]
            rules.extend(mode_rules(user, realm_id, group, mode.fraction(group_id)))
        for rule in rules:
            self._validate_rule(rule)
        return rules

    def _reindex(self) -> None:
        index: dict[str, list[PolicyRule]] = {}
        for rule in self.static_rules.values():
            index.setdefault(rule.realm_id, []).append(rule)
        for rules in self._generated.values():
            for rule in rules:
                index.setdefault(rule.realm_id, []).append(rule)
        self._rules_by_realm = index

    # -- operations --------------------------------------------------------

    def set_user_mode(self, user: str, mode: str | UserMode) -> None:
        """Swap the user's generated rules for the given mode's."""
        if user not in self.bindings:
            raise ConfigError(f"unknown user {user!r}")
        if isinstance(mode, UserMode):
            self.modes[mode.name] = mode
            mode_name = mode.name
        else:
            mode_name = mode
        self._generated[user] = self._rules_for_mode(user, mode_name)
        self.bindings[user].mode = mode_name
        self._reindex()

    def upsert_rule(self, rule: PolicyRule) -> None:
        self._validate_rule(rule)
        self.static_rules[rule.rule_id] = rule
        self._reindex()

    def all_rules(self) -> list[PolicyRule]:
        out = list(self.static_rules.values())
        for rules in self._generated.values():
            out.extend(rules)
        return sorted(out, key=lambda r: r.rule_id)

    def resolve(self, device_id: str, ctx: PresenceContext) -> Decision | None:
        realm = self.device_realm.get(device_id)
        if realm is None:
            raise ConfigError(f"unknown device {device_id!r}")
        return resolve(self.tree.chain(realm), self._rules_by_realm, device_id, ctx)

    def _evaluate(
        self, device_ids: Iterable[str], ctx: PresenceContext, current: Mapping[str, bool]
    ) -> tuple[list[Decision], list[tuple[str, bool, Decision]]]:
        """Resolve each device; exempt devices are dropped before any command."""
        decisions: list[Decision] = []
        commands: list[tuple[str, bool, Decision]] = []
        for device_id in sorted(device_ids):
            if device_id in self.exempt:
                continue
            decision = self.resolve(device_id, ctx)
            if decision is None:
                continue
            decisions.append(decision)
            if decision.turn_on != current[device_id]:
                commands.append((device_id, decision.turn_on, decision))
        return decisions, commands

    def on_presence_event(
        self, user: str, fence_id: str, ctx: PresenceContext, current: Mapping[str, bool]
    ) -> tuple[list[Decision], list[tuple[str, bool, Decision]]]:
        """Re-evaluate every device bound to the user in the affected building."""
        binding = self.bindings.get(user)
        if binding is None:
            return [], []
        affected = [
            d for d in self.user_devices(user) if self.device_building.get(d) == fence_id
        ]
        return self._evaluate(affected, ctx, current)

    def user_devices(self, user: str) -> list[str]:
        binding = self.bindings.get(user)
        if binding is None:
            return []
        out: set[str] = set()
        for group in binding.groups.values():
            out.update(group.devices)
        return sorted(out)
