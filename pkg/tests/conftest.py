import numpy as np
import pytest

from app.config_loader import build_scenario, dump_scenario
from app.engine import run_scenario
from app.output_generator import OutputGenerator
from app.world import GaussianComponent, GridSpec, GridWorld, GroundTruthField

THREE_HOTSPOT_CENTERS = [(4.0, 4.0), (16.0, 4.0), (10.0, 16.0)]


def quick_scenario_data(**overrides) -> dict:
    data = {
        "name": "quick",
        "grid": {"width_cells": 6, "height_cells": 6, "cell_size": 10.0},
        "gaussian_components": [{"center": [1.5, 1.5], "sigma": 1.5}],
        "robots": [
            {"id": 0, "start": [0.5, 0.5], "speeds": {"max": 2.0, "min": 0.5}},
            {"id": 1, "start": [0.5, 0.5], "speeds": {"max": 4.0, "min": 1.0}},
        ],
        "max_sim_time": 5000.0,
    }
    data.update(overrides)
    return data


@pytest.fixture
def quick_config():
    return build_scenario(quick_scenario_data(), global_config={})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_world():
    """5x5 grid of 10 m cells with one hotspot on the middle cell."""
    spec = GridSpec(5, 5, cell_size=10.0)
    return GridWorld(spec, GroundTruthField([GaussianComponent((25.0, 25.0), 10.0)]))


@pytest.fixture
def three_hotspot_world():
    spec = GridSpec(20, 20, cell_size=10.0)
    truth = GroundTruthField([GaussianComponent(c, 3.0) for c in THREE_HOTSPOT_CENTERS]).scaled(10.0)
    return GridWorld(spec, truth)


RUN_FILES = ["result.tsv", "robots.tsv", "trajectories.tsv", "paths.tsv", "partitions.tsv", "workloads.tsv",
             "traffic.tsv", "swd.tsv", "densities.tsv", "scenario.yaml", "report.md"]


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    """A quick MDCPP run written under a temporary output root."""
    out_root = tmp_path_factory.mktemp("runs")
    config = build_scenario(quick_scenario_data(), global_config={})
    result, log = run_scenario(config)
    run_dir = OutputGenerator(out_root).write_run(config, result, log)
    return out_root, run_dir, config, result


@pytest.fixture
def scenario_file(tmp_path):
    def write(**overrides):
        path = tmp_path / f"{overrides.get('name', 'quick')}.yaml"
        dump_scenario(build_scenario(quick_scenario_data(**overrides), global_config={}), path)
        return path
    return write
