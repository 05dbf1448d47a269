import numpy as np
import pytest
import yaml

from phobs.config import ConfigError, config_hash, load_config, parse_config
from tests.conftest import CONFIG_PATH


@pytest.fixture()
def raw():
    return yaml.safe_load(open(CONFIG_PATH).read())


class TestShippedConfig:
    def test_loads(self, cfg):
        assert cfg.domain_mode == "frozen"
        assert len(cfg.designs) == 5
        assert len(cfg.scenarios) == 2
        assert cfg.scenarios[0].scenario.dt_s == 1e-5

    def test_hash_stable_under_key_order(self, raw):
        a = parse_config(raw)
        reordered = dict(reversed(list(raw.items())))
        b = parse_config(reordered)
        assert config_hash(a) == config_hash(b)

    def test_design_lookup(self, cfg):
        assert cfg.design("sched_max").mode == "sched"
        with pytest.raises(ConfigError):
            cfg.design("nope")


class TestValidation:
    def test_unknown_key_rejected(self, raw):
        raw["system"]["rho_kg_per_m3"] = 1.0
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(raw)

    def test_unknown_top_level_rejected(self, raw):
        raw["plotting"] = {}
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(raw)

    def test_missing_required_key(self, raw):
        del raw["synthesis"]["designs"]
        with pytest.raises(ConfigError, match="missing required key"):
            parse_config(raw)

    def test_wrong_schema_version(self, raw):
        raw["schema_version"] = 99
        with pytest.raises(ConfigError, match="schema_version"):
            parse_config(raw)

    def test_bad_decay_token(self, raw):
        raw["synthesis"]["designs"][0]["decay_rate_per_s"] = "fastest"
        with pytest.raises(ConfigError, match="decay_rate_per_s"):
            parse_config(raw)

    def test_negative_rate_rejected(self, raw):
        raw["synthesis"]["designs"][0]["decay_rate_per_s"] = -0.1
        with pytest.raises(ConfigError):
            parse_config(raw)

    def test_duplicate_design_names(self, raw):
        raw["synthesis"]["designs"][1]["name"] = raw["synthesis"]["designs"][0]["name"]
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(raw)

    def test_unresolved_scenario_design(self, raw):
        raw["scenarios"][0]["designs"] = ["ghost"]
        with pytest.raises(ConfigError, match="ghost"):
            parse_config(raw)

    def test_type_errors(self, raw):
        raw["output"]["csv_stride"] = "ten"
        with pytest.raises(ConfigError, match="expected an integer"):
            parse_config(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("a: [unclosed")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(p)

    def test_frozen_mode_needs_box(self, raw):
        del raw["domain"]["frozen"]
        with pytest.raises(ConfigError, match="frozen"):
            parse_config(raw)


class TestInputKinds:
    def test_piecewise_input(self, raw):
        raw["scenarios"][0]["input"] = {
            "kind": "piecewise",
            "pieces": [[0.0, 0.0], [0.5, 1.0e7], [1.5, 2.64196e7]],
        }
        cfg = parse_config(raw)
        sig = cfg.scenarios[0].scenario.input
        np.testing.assert_allclose(sig.at([0.25, 0.75, 2.0]),
                                   [0.0, 1.0e7, 2.64196e7])

    def test_zero_input(self, raw):
        raw["scenarios"][0]["input"] = {"kind": "zero"}
        cfg = parse_config(raw)
        assert np.all(cfg.scenarios[0].scenario.input.values == 0.0)

    def test_malformed_pieces(self, raw):
        raw["scenarios"][0]["input"] = {"kind": "piecewise", "pieces": [[0.0]]}
        with pytest.raises(ConfigError, match="pieces"):
            parse_config(raw)


class TestFrozenBoxValues:
    def test_box_matches_reference_prints(self, cfg):
        dom = cfg.frozen_domain
        # the box truncates to the casually printed values
        assert np.floor(dom.q_max[0] * 1e8) / 1e8 == pytest.approx(4.6754e-4)
        assert dom.q_min[0] == -8.1257e-6
        assert -6.303e-3 < dom.p_min[0] <= -6.302e-3
        assert 2.228e-3 <= dom.p_max[0] < 2.229e-3
        assert dom.u_max[0] == 5140.0 ** 2
