from pathlib import Path

import pytest

from app.config_loader import (PROJECT_ROOT, Strategy, build_scenario, dump_scenario, get_global_config_path,
                               get_output_root, list_presets, load_scenario, merge_configs, parse_comm_range,
                               resolve_scenario_path)
from app.errors import ScenarioParseError, ScenarioValidationError

from .conftest import quick_scenario_data


def _robot(rid, **extra):
    return {"id": rid, "start": [0.5, 0.5], "speeds": {"max": 1.0, "min": 0.2}, **extra}


def test_presets_are_bundled():
    assert {"ld_2c", "ld_3c", "sd_2c", "sd_3c", "fixed_targets"} <= set(list_presets())


@pytest.mark.parametrize("preset", ["ld_2c", "ld_3c", "sd_2c", "sd_3c", "fixed_targets"])
def test_presets_validate(preset):
    config = load_scenario(preset, global_config={})
    assert config.name == preset
    assert config.grid.n_cells == 400
    assert len(config.robots) == 4
    assert config.comm_range is None


def test_fixed_targets_uses_the_three_speed_model():
    config = load_scenario("fixed_targets", global_config={})
    assert config.speed_model == "three_speed"
    assert config.robots[3].speeds.v_det == 0.12


def test_defaults_fill_missing_sections(quick_config):
    assert quick_config.strategy is Strategy.MDCPP
    assert quick_config.estimator.theta == 0.6
    assert quick_config.estimator.k_range == (1, 5)
    assert quick_config.n0 == 2
    assert quick_config.capacity_mode == "throughput"
    assert quick_config.robots[0].alpha == 1.0
    assert [r.noise_sigma for r in quick_config.robots] == [0.05, 0.05]
    assert quick_config.estimator.share_detections is True


def test_explicit_noise_overrides_the_default():
    data = quick_scenario_data()
    data["robots"][0]["noise_sigma"] = 0.0
    config = build_scenario(data, global_config={})
    assert [r.noise_sigma for r in config.robots] == [0.0, 0.05]


def test_global_defaults_sit_between_builtins_and_the_file():
    global_config = {"scenario_defaults": {"n0": 3, "seed": 9}}
    config = build_scenario(quick_scenario_data(seed=4), global_config)
    assert config.n0 == 3
    assert config.seed == 4


def test_name_defaults_to_the_file_stem(tmp_path):
    data = quick_scenario_data()
    del data["name"]
    path = tmp_path / "my_field.yaml"
    dump_scenario(build_scenario(data, global_config={}), path)
    text = path.read_text(encoding="utf-8").replace("name: unnamed\n", "")
    path.write_text(text, encoding="utf-8")
    assert load_scenario(path, global_config={}).name == "my_field"


def test_dumped_scenario_loads_back(tmp_path, quick_config):
    path = dump_scenario(quick_config, tmp_path / "scenario.yaml")
    assert load_scenario(path, global_config={}) == quick_config


def test_syntax_error_reports_the_location(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: broken\ngrid: {width_cells: 5\nrobots: []\n", encoding="utf-8")
    with pytest.raises(ScenarioParseError) as excinfo:
        load_scenario(path, global_config={})
    assert excinfo.value.line is not None
    assert "broken.yaml" in str(excinfo.value)


def test_top_level_must_be_a_mapping(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ScenarioParseError):
        load_scenario(path, global_config={})


def test_unknown_scenario():
    with pytest.raises(FileNotFoundError, match="preset"):
        resolve_scenario_path("no_such_scenario")


@pytest.mark.parametrize("overrides, field", [
    ({"robots": [_robot(0), _robot(0)]}, "robots[1].id"),
    ({"robots": [_robot(0, start=[7.0, 0.5])]}, "robots[0].start"),
    ({"robots": []}, "robots"),
    ({"robots": [_robot(0, alpha=0)]}, "robots[0].alpha"),
    ({"robots": [{"id": 0, "speeds": {"max": 1.0}}]}, "robots[0].speeds.min"),
    ({"speed_model": {"kind": "three_speed"}}, "robots[0].speeds.det"),
    ({"speed_model": {"kind": "warp"}}, "speed_model.kind"),
    ({"strategy": "greedy"}, "strategy"),
    ({"comm_range": -5}, "comm_range"),
    ({"targets": {"threshold": 1.5}}, "targets.threshold"),
    ({"max_sim_time": 0.5}, "max_sim_time"),
    ({"assignment": {"capacity_mode": "speed"}}, "assignment.capacity_mode"),
    ({"grid": {"width_cells": 0}}, "grid.width_cells"),
    ({"estimator": {"k_range": [3, 1]}}, "estimator.k_range[1]"),
    ({"estimator": {"share_detections": "yes"}}, "estimator.share_detections"),
])
def test_validation_names_the_field(overrides, field):
    with pytest.raises(ScenarioValidationError) as excinfo:
        build_scenario(quick_scenario_data(**overrides), global_config={})
    assert excinfo.value.field == field


def test_comm_range_values():
    assert parse_comm_range("unlimited") is None
    assert parse_comm_range(None) is None
    assert parse_comm_range("25") == 25.0
    assert parse_comm_range(20) == 20.0
    with pytest.raises(ScenarioValidationError):
        parse_comm_range("far")


def test_merge_does_not_touch_its_inputs():
    base = {"a": {"b": 1, "c": [1, 2]}}
    override = {"a": {"b": 2}}
    merged = merge_configs(base, override)
    assert merged == {"a": {"b": 2, "c": [1, 2]}}
    assert base == {"a": {"b": 1, "c": [1, 2]}}


def test_global_config_dir_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv("MDCPP_USER_CONFIG_DIR", str(tmp_path))
    assert get_global_config_path() == tmp_path / "global_config.yaml"


def test_output_root_precedence(monkeypatch, tmp_path):
    monkeypatch.delenv("MDCPP_OUTPUT_DIR", raising=False)
    assert get_output_root({}) == PROJECT_ROOT / "runs"
    assert get_output_root({"output_dir": str(tmp_path / "cfg")}) == tmp_path / "cfg"
    monkeypatch.setenv("MDCPP_OUTPUT_DIR", str(tmp_path / "env"))
    assert get_output_root({"output_dir": str(tmp_path / "cfg")}) == Path(tmp_path / "env")
