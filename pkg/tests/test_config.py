"""Loading and cross-validating deployment documents."""

import copy

import pytest
import yaml

from geowatt.config import (
    build_engine,
    build_fleet,
    load_config,
    load_config_dict,
    reference_config,
)
from geowatt.errors import ConfigError

from datetime import datetime

T0 = datetime(2011, 10, 12)


@pytest.fixture(scope="module")
def reference_doc():
    from importlib import resources

    text = resources.files("geowatt.data").joinpath("reference.yaml").read_text()
    return yaml.safe_load(text)


def variant(reference_doc, mutate):
    doc = copy.deepcopy(reference_doc)
    mutate(doc)
    return doc


def test_reference_config_loads():
    config = reference_config()
    assert set(config.fences) == {"home", "office"}
    assert set(config.modes) == {"luxury", "moderate", "frugal"}
    assert "alex" in config.users
    assert config.users["alex"].mode == "frugal"
    assert len(config.devices) == 9


def test_reference_round_trips_through_a_file(tmp_path, reference_doc):
    path = tmp_path / "deploy.yaml"
    path.write_text(yaml.safe_dump(reference_doc))
    config = load_config(str(path))
    assert config.name == reference_config().name
    assert set(config.devices) == set(reference_config().devices)


def test_yaml_bare_on_means_initially_running():
    # YAML 1.1 parses an unquoted `on` as boolean True; both spellings must
    # land the device in the running state
    config = reference_config()
    assert config.devices["refrigerator"].initial_on is True
    assert config.devices["home_lighting"].initial_on is False


def test_exempt_and_placement_views():
    config = reference_config()
    assert config.exempt_ids() == frozenset({"refrigerator", "hvac_home", "hvac_office"})
    assert config.device_site()["desktop"] == "office"
    assert config.device_realm()["desktop"] in config.tree.realms


def test_build_fleet_applies_initial_state():
    config = reference_config()
    fleet = build_fleet(config, T0)
    assert fleet.devices["refrigerator"].state is True
    assert fleet.devices["home_laptop"].state is False


def test_unknown_building_rejected(reference_doc):
    doc = variant(
        reference_doc, lambda d: d["devices"]["home_laptop"].update(building="moon_base")
    )
    with pytest.raises(ConfigError):
        load_config_dict(doc)


def test_unknown_realm_rejected(reference_doc):
    doc = variant(reference_doc, lambda d: d["devices"]["home_laptop"].update(realm="nowhere"))
    with pytest.raises(ConfigError):
        load_config_dict(doc)


def test_group_cannot_contain_exempt_devices(reference_doc):
    def mutate(d):
        d["users"]["alex"]["groups"]["home_lighting"]["devices"].append("refrigerator")

    with pytest.raises(ConfigError):
        load_config_dict(variant(reference_doc, mutate))


def test_group_devices_must_share_the_site(reference_doc):
    def mutate(d):
        d["users"]["alex"]["groups"]["home_lighting"]["devices"].append("office_laptop")

    with pytest.raises(ConfigError):
        load_config_dict(variant(reference_doc, mutate))


def test_estimates_must_cover_every_mode(reference_doc):
    def mutate(d):
        rows = d["estimates"]["home"]["home_lighting"]
        if "all" in rows:
            rows.pop("all")
        rows.pop("luxury", None)

    with pytest.raises(ConfigError):
        load_config_dict(variant(reference_doc, mutate))


def test_mode_ordering_enforced_at_load(reference_doc):
    def mutate(d):
        # frugal looser than moderate for one group: contradiction
        d["modes"]["frugal"]["home_lighting"] = 1.0
        d["modes"]["moderate"]["home_lighting"] = 0.2

    with pytest.raises(ConfigError):
        load_config_dict(variant(reference_doc, mutate))


def test_static_rule_realm_must_lie_on_device_chains(reference_doc):
    def mutate(d):
        d.setdefault("rules", []).append(
            {
                "id": "bad-rule",
                "realm": "office-building",
                "devices": ["home_laptop"],  # home device, office realm
                "action": "mandate_off",
            }
        )

    with pytest.raises(ConfigError):
        load_config_dict(variant(reference_doc, mutate))


def test_missing_top_level_sections_rejected(reference_doc):
    for key in ("fences", "realms", "devices", "modes", "users", "estimates"):
        doc = variant(reference_doc, lambda d, k=key: d.pop(k))
        with pytest.raises(ConfigError):
            load_config_dict(doc)


def test_build_engine_is_independent_per_call():
    config = reference_config()
    a = build_engine(config)
    b = build_engine(config)
    a.set_user_mode("alex", "luxury")
    assert b.bindings["alex"].mode == "frugal"
    assert config.users["alex"].mode == "frugal"
