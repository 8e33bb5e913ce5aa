import numpy as np
import pytest

from cart.errors import ConfigError
from cart.scenario import (apply_overrides, canned, canned_dict, canned_names, dumps_scenario, load_scenario,
                           save_scenario, scenario_from_dict, scenario_to_dict)


def _same(a, b):
    da, db = scenario_to_dict(a), scenario_to_dict(b)
    assert da == db


@pytest.mark.parametrize("name", canned_names())
def test_canned_round_trip(name, tmp_path):
    spec = canned(name)
    path = tmp_path / f"{name}.toml"
    save_scenario(spec, path)
    _same(spec, load_scenario(path))
    _same(spec, scenario_from_dict(scenario_to_dict(spec)))


def test_expected_canned_set():
    assert {"nonlinear_small", "nonlinear_large", "nonlinear_large_cart", "spacecraft_grid",
            "leo_table"} <= set(canned_names())


def test_overrides_parse_toml_literals():
    data = apply_overrides(canned_dict("nonlinear_small"),
                           ["disturbance.d_bar=0.02", 'policy.kind="cart_full"', "sim.randomize=false",
                            "safety.xi=[1.0, 0.5]", "policy.qp.alpha_h=2"])
    spec = scenario_from_dict(data)
    assert spec.disturbance.d_bar == 0.02
    assert spec.policy.kind == "cart_full"
    assert spec.policy.qp_params.alpha_h == 2.0
    assert np.allclose(np.diag(spec.safety.xi), [1.0, 0.5])


def test_bare_word_override_kept_as_string():
    spec = canned("nonlinear_small", ["policy.kind=cart_full"])
    assert spec.policy.kind == "cart_full"


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="gains"):
        canned("nonlinear_small", ["gains.kp=1.0"])
    with pytest.raises(ConfigError):
        canned("nonlinear_small", ["weather.wind=3"])
    with pytest.raises(ConfigError):
        canned("no_such_scenario")


def test_schema_version_checked():
    data = canned_dict("nonlinear_small")
    data["schema_version"] = 99
    with pytest.raises(ConfigError, match="schema_version"):
        scenario_from_dict(data)


def test_required_safety_fields():
    data = canned_dict("nonlinear_small")
    del data["safety"]["r_sen"]
    with pytest.raises(ConfigError, match="r_sen"):
        scenario_from_dict(data)


def test_invalid_toml_is_a_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[safety\nr_s = ")
    with pytest.raises(ConfigError):
        load_scenario(bad)


def test_dump_is_text_toml():
    text = dumps_scenario(canned("leo_table"))
    assert "schema_version = 1" in text and "[policy.qp]" in text
