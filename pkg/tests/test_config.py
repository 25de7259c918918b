"""Strict JSON configuration loading."""

import json

import pytest

from socialnav.config import ConfigError, config_digest, load_config, parse_config


def write(tmp_path, payload):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(payload))
    return p


class TestParse:
    def test_defaults(self):
        cfg = parse_config({})
        assert cfg.seed == 0
        assert cfg.scenario.kind == "circle_crossing"
        assert cfg.training.gamma == 0.9
        assert cfg.rewards.goal_reward == 10.0
        assert cfg.orca.time_horizon == 5.0
        assert cfg.planner.d_sub == 2.0
        assert not cfg.humans_see_robot

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config({"bogus": 1})

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="training.*learning_rate"):
            parse_config({"training": {"learning_rate": 0.1}})

    def test_invalid_value_reported_with_section(self):
        with pytest.raises(ConfigError, match="scenario"):
            parse_config({"scenario": {"kind": "swarm"}})

    def test_seed_propagates_unless_pinned(self):
        cfg = parse_config({"seed": 9})
        assert cfg.scenario.seed == 9 and cfg.training.seed == 9
        cfg2 = parse_config({"seed": 9, "scenario": {"seed": 4}})
        assert cfg2.scenario.seed == 4 and cfg2.training.seed == 9

    def test_lists_become_tuples(self):
        cfg = parse_config({"scenario": {"radius_range": [0.1, 0.2]}})
        assert cfg.scenario.radius_range == (0.1, 0.2)


class TestDigest:
    def test_stable_under_key_order(self):
        assert config_digest({"a": 1, "b": 2}) == config_digest({"b": 2, "a": 1})

    def test_changes_with_content(self):
        assert config_digest({"seed": 1}) != config_digest({"seed": 2})

    def test_embedded_in_config(self, tmp_path):
        p = write(tmp_path, {"seed": 3})
        cfg = load_config(p)
        assert cfg.digest == config_digest({"seed": 3})


class TestLoad:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_referenced_files_must_exist(self, tmp_path):
        p = write(tmp_path, {"paths": {"checkpoint": str(tmp_path / "missing.mesa")}})
        with pytest.raises(ConfigError, match="checkpoint"):
            load_config(p)

    def test_existing_reference_ok(self, tmp_path):
        ckpt = tmp_path / "ok.mesa"
        ckpt.write_bytes(b"MESA1")
        p = write(tmp_path, {"paths": {"checkpoint": str(ckpt)}})
        cfg = load_config(p)
        assert cfg.paths.checkpoint == str(ckpt)
