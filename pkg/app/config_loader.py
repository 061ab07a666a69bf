# app/config_loader.py
import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from decouple import config as env_config

from .errors import ScenarioParseError, ScenarioValidationError
from .world import TARGET_MODES, GaussianComponent, GridSpec

logger = logging.getLogger(__name__)

# Define base paths relative to this script's location or a known project root.
PROJECT_ROOT = Path(__file__).resolve().parent.parent  # Parent of 'app/' dir
USER_CONFIG_DIR_NAME = "user_config"  # Default, can be overridden by env var
SCENARIOS_DIR = PROJECT_ROOT / "scenarios"
GLOBAL_CONFIG_FILE_NAME = "global_config.yaml"
DEFAULT_OUTPUT_DIR_NAME = "runs"


class Strategy(str, Enum):
    MDCPP = "mdcpp"
    DYNAMIC = "dynamic"
    SWEEPING = "sweeping"

    @classmethod
    def parse(cls, value: Union[str, "Strategy"]) -> "Strategy":
        try:
            return cls(str(value.value if isinstance(value, Strategy) else value).lower())
        except ValueError:
            raise ScenarioValidationError("strategy", f"unknown strategy '{value}'. "
                                          f"Valid strategies: {', '.join(s.value for s in cls)}")


SPEED_MODEL_KINDS = ("three_speed", "interpolated")
CAPACITY_MODES = ("throughput", "alpha")

# Lengths below are in cell widths except comm_range (meters).
DEFAULT_SCENARIO: Dict[str, Any] = {
    "name": "unnamed",
    "grid": {"width_cells": 20, "height_cells": 20, "cell_size": 10.0, "origin": [0.0, 0.0]},
    "gaussian_components": [],
    "targets": {"mode": "threshold", "threshold": 0.5},
    "robots": [],
    "speed_model": {"kind": "interpolated", "jitter": [0.5, 1.5]},
    "comm_range": "unlimited",
    "n0": 2,
    "strategy": "mdcpp",
    "seed": 0,
    "estimator": {
        "theta": 0.6,
        "k_range": [1, 5],
        "d": 5.0,
        "sigma_grid": {"lo": 2.5, "hi": 5.0, "step": 0.1},
        "swd_projections": 50,
        "swd_interval": 50.0,
        "prior_density": 0.0,
        "share_detections": True,
    },
    "dt": 1.0,
    "max_sim_time": 500000.0,
    "lloyd": {"eps_s": 0.1, "max_iters": 100},
    "assignment": {"capacity_mode": "throughput", "max_passes": 10000},
}

DEFAULT_ROBOT: Dict[str, Any] = {"start": [0.5, 0.5], "alpha": 1.0, "noise_sigma": 0.05, "speeds": {}}


@dataclass(frozen=True)
class SpeedProfile:
    """Average speeds in m/s. v_det/v_int drive the three-speed model, v_min the interpolated one."""
    v_max: float
    v_det: Optional[float] = None
    v_int: Optional[float] = None
    v_min: Optional[float] = None

    def to_dict(self) -> Dict[str, float]:
        out = {"max": self.v_max}
        for key, value in (("det", self.v_det), ("int", self.v_int), ("min", self.v_min)):
            if value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class RobotConfig:
    id: int
    start: Tuple[float, float]
    speeds: SpeedProfile
    alpha: float = 1.0
    noise_sigma: float = 0.05


@dataclass(frozen=True)
class EstimatorSettings:
    theta: float = 0.6
    k_range: Tuple[int, int] = (1, 5)
    d: float = 5.0
    sigma_lo: float = 2.5
    sigma_hi: float = 5.0
    sigma_step: float = 0.1
    swd_projections: int = 50
    swd_interval: float = 50.0
    prior_density: float = 0.0
    share_detections: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    grid: GridSpec
    gaussian_components: Tuple[GaussianComponent, ...]
    robots: Tuple[RobotConfig, ...]
    target_mode: str = "threshold"
    target_threshold: float = 0.5
    speed_model: str = "interpolated"
    jitter: Tuple[float, float] = (0.5, 1.5)
    comm_range: Optional[float] = None
    n0: int = 2
    strategy: Strategy = Strategy.MDCPP
    seed: int = 0
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    dt: float = 1.0
    max_sim_time: float = 500000.0
    eps_s: float = 0.1
    lloyd_max_iters: int = 100
    capacity_mode: str = "throughput"
    max_passes: int = 10000

    @property
    def robot_ids(self) -> List[int]:
        return sorted(r.id for r in self.robots)

    def to_dict(self) -> Dict[str, Any]:
        """Plain-data form accepted back by `scenario_from_dict`."""
        return {
            "name": self.name,
            "grid": {"width_cells": self.grid.width_cells, "height_cells": self.grid.height_cells,
                     "cell_size": self.grid.cell_size, "origin": list(self.grid.origin)},
            "gaussian_components": [{"center": list(c.center), "sigma": c.sigma, "amplitude": c.amplitude}
                                    for c in self.gaussian_components],
            "targets": {"mode": self.target_mode, "threshold": self.target_threshold},
            "robots": [{"id": r.id, "start": list(r.start), "speeds": r.speeds.to_dict(), "alpha": r.alpha,
                        "noise_sigma": r.noise_sigma} for r in self.robots],
            "speed_model": {"kind": self.speed_model, "jitter": list(self.jitter)},
            "comm_range": "unlimited" if self.comm_range is None else self.comm_range,
            "n0": self.n0,
            "strategy": self.strategy.value,
            "seed": self.seed,
            "estimator": {
                "theta": self.estimator.theta,
                "k_range": list(self.estimator.k_range),
                "d": self.estimator.d,
                "sigma_grid": {"lo": self.estimator.sigma_lo, "hi": self.estimator.sigma_hi,
                               "step": self.estimator.sigma_step},
                "swd_projections": self.estimator.swd_projections,
                "swd_interval": self.estimator.swd_interval,
                "prior_density": self.estimator.prior_density,
                "share_detections": self.estimator.share_detections,
            },
            "dt": self.dt,
            "max_sim_time": self.max_sim_time,
            "lloyd": {"eps_s": self.eps_s, "max_iters": self.lloyd_max_iters},
            "assignment": {"capacity_mode": self.capacity_mode, "max_passes": self.max_passes},
        }


def load_yaml_file(file_path: Path) -> dict:
    """Loads a YAML file and returns its content as a dictionary."""
    file_path = Path(file_path)
    if not file_path.is_file():
        logger.debug("YAML file not found at %s", file_path)
        return {}
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        if mark is not None:
            raise ScenarioParseError(file_path, problem, mark.line + 1, mark.column + 1) from e
        raise ScenarioParseError(file_path, problem) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ScenarioParseError(file_path, f"expected a mapping at the top level, got {type(data).__name__}")
    return data


def merge_configs(base_config: dict, override_config: dict) -> dict:
    """
    Merges two configuration layers.
    Override values win; dicts merge recursively, lists and scalars are replaced.
    """
    merged = copy.deepcopy(base_config)
    for key, value in override_config.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_configs(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def get_global_config_path() -> Path:
    """Determines the path to the global configuration file."""
    user_config_dir_env = env_config('MDCPP_USER_CONFIG_DIR', default='')
    if user_config_dir_env:
        global_config_base_dir = Path(user_config_dir_env).expanduser()
        logger.debug("Using custom user config directory from MDCPP_USER_CONFIG_DIR: %s", global_config_base_dir)
    else:
        global_config_base_dir = PROJECT_ROOT / USER_CONFIG_DIR_NAME
    return global_config_base_dir / GLOBAL_CONFIG_FILE_NAME


def load_global_config() -> dict:
    path = get_global_config_path()
    global_config = load_yaml_file(path)
    if global_config:
        logger.info("Loaded global configuration from %s", path)
    return global_config


def get_output_root(global_config: Optional[dict] = None) -> Path:
    """MDCPP_OUTPUT_DIR, else `output_dir` from the global config, else <project>/runs."""
    env_dir = env_config('MDCPP_OUTPUT_DIR', default='')
    if env_dir:
        return Path(env_dir).expanduser()
    configured = (global_config or {}).get('output_dir')
    if configured:
        return Path(configured).expanduser()
    return PROJECT_ROOT / DEFAULT_OUTPUT_DIR_NAME


def list_presets() -> List[str]:
    return sorted(p.stem for p in SCENARIOS_DIR.glob("*.yaml"))


def resolve_scenario_path(path_or_name: Union[str, Path]) -> Path:
    candidate = Path(path_or_name)
    if candidate.is_file():
        return candidate
    preset = SCENARIOS_DIR / f"{path_or_name}.yaml"
    if preset.is_file():
        return preset
    raise FileNotFoundError(f"Scenario '{path_or_name}' is neither a file nor a preset "
                            f"(presets: {', '.join(list_presets()) or 'none'}).")


# --- validation helpers ---

def _number(value, field_name: str, positive: bool = False, non_negative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioValidationError(field_name, f"expected a number, got {value!r}")
    value = float(value)
    if positive and value <= 0:
        raise ScenarioValidationError(field_name, f"must be positive, got {value}")
    if non_negative and value < 0:
        raise ScenarioValidationError(field_name, f"must be non-negative, got {value}")
    return value


def _integer(value, field_name: str, minimum: Optional[int] = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioValidationError(field_name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ScenarioValidationError(field_name, f"must be at least {minimum}, got {value}")
    return value


def _flag(value, field_name: str) -> bool:
    if not isinstance(value, bool):
        raise ScenarioValidationError(field_name, f"expected true or false, got {value!r}")
    return value


def _pair(value, field_name: str) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioValidationError(field_name, f"expected a pair [x, y], got {value!r}")
    return _number(value[0], f"{field_name}[0]"), _number(value[1], f"{field_name}[1]")


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key)
    if not isinstance(value, dict):
        raise ScenarioValidationError(key, f"expected a mapping, got {value!r}")
    return value


def parse_comm_range(value) -> Optional[float]:
    """Meters, or None for 'unlimited'. Numeric strings (from the command line) are accepted."""
    if value is None or (isinstance(value, str) and value.strip().lower() == "unlimited"):
        return None
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ScenarioValidationError("comm_range", f"expected meters or 'unlimited', got {value!r}")
    return _number(value, "comm_range", positive=True)


def _parse_speeds(raw: Any, field_name: str, kind: str) -> SpeedProfile:
    if not isinstance(raw, dict):
        raise ScenarioValidationError(field_name, f"expected a mapping of speeds, got {raw!r}")
    if "max" not in raw:
        raise ScenarioValidationError(f"{field_name}.max", "travel speed is required")
    v_max = _number(raw["max"], f"{field_name}.max", positive=True)
    opt = {k: _number(raw[k], f"{field_name}.{k}", positive=True) if k in raw else None
           for k in ("det", "int", "min")}
    if kind == "three_speed":
        for k in ("det", "int"):
            if opt[k] is None:
                raise ScenarioValidationError(f"{field_name}.{k}", "required by the three_speed model")
        if not opt["int"] <= opt["det"] <= v_max:
            raise ScenarioValidationError(field_name, "three_speed model needs int <= det <= max")
    else:
        if opt["min"] is None:
            raise ScenarioValidationError(f"{field_name}.min", "required by the interpolated model")
        if opt["min"] > v_max:
            raise ScenarioValidationError(field_name, "interpolated model needs min <= max")
    return SpeedProfile(v_max, opt["det"], opt["int"], opt["min"])


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    """Validates a fully merged scenario mapping and builds the ScenarioConfig."""
    grid_raw = _section(raw, "grid")
    width = _integer(grid_raw.get("width_cells"), "grid.width_cells", minimum=1)
    height = _integer(grid_raw.get("height_cells"), "grid.height_cells", minimum=1)
    grid = GridSpec(width, height, _number(grid_raw.get("cell_size"), "grid.cell_size", positive=True),
                    _pair(grid_raw.get("origin", [0.0, 0.0]), "grid.origin"))

    comps_raw = raw.get("gaussian_components") or []
    if not isinstance(comps_raw, list):
        raise ScenarioValidationError("gaussian_components", "expected a list")
    components = []
    for k, comp in enumerate(comps_raw):
        name = f"gaussian_components[{k}]"
        if not isinstance(comp, dict):
            raise ScenarioValidationError(name, f"expected a mapping, got {comp!r}")
        components.append(GaussianComponent(
            _pair(comp.get("center"), f"{name}.center"),
            _number(comp.get("sigma"), f"{name}.sigma", positive=True),
            _number(comp.get("amplitude", 1.0), f"{name}.amplitude", positive=True)))

    targets = _section(raw, "targets")
    target_mode = targets.get("mode")
    if target_mode not in TARGET_MODES:
        raise ScenarioValidationError("targets.mode", f"expected one of {', '.join(TARGET_MODES)}, got {target_mode!r}")
    threshold = _number(targets.get("threshold"), "targets.threshold")
    if not 0.0 <= threshold <= 1.0:
        raise ScenarioValidationError("targets.threshold", f"must lie in [0, 1], got {threshold}")

    speed_raw = _section(raw, "speed_model")
    kind = speed_raw.get("kind")
    if kind not in SPEED_MODEL_KINDS:
        raise ScenarioValidationError("speed_model.kind",
                                      f"expected one of {', '.join(SPEED_MODEL_KINDS)}, got {kind!r}")
    jitter = _pair(speed_raw.get("jitter"), "speed_model.jitter")
    if not 0 < jitter[0] <= jitter[1]:
        raise ScenarioValidationError("speed_model.jitter", f"needs 0 < lo <= hi, got {list(jitter)}")

    robots_raw = raw.get("robots")
    if not isinstance(robots_raw, list) or not robots_raw:
        raise ScenarioValidationError("robots", "at least one robot is required")
    robots, seen = [], set()
    for k, robot in enumerate(robots_raw):
        name = f"robots[{k}]"
        if not isinstance(robot, dict):
            raise ScenarioValidationError(name, f"expected a mapping, got {robot!r}")
        robot = merge_configs(DEFAULT_ROBOT, robot)
        rid = _integer(robot.get("id"), f"{name}.id", minimum=0)
        if rid in seen:
            raise ScenarioValidationError(f"{name}.id", f"duplicate robot id {rid}")
        seen.add(rid)
        start = _pair(robot.get("start"), f"{name}.start")
        if not (0.0 <= start[0] <= width and 0.0 <= start[1] <= height):
            raise ScenarioValidationError(f"{name}.start", f"{list(start)} lies outside the {width}x{height} grid")
        robots.append(RobotConfig(
            id=rid, start=start, speeds=_parse_speeds(robot.get("speeds"), f"{name}.speeds", kind),
            alpha=_number(robot.get("alpha"), f"{name}.alpha", positive=True),
            noise_sigma=_number(robot.get("noise_sigma"), f"{name}.noise_sigma", non_negative=True)))

    comm_range = parse_comm_range(raw.get("comm_range"))

    est = _section(raw, "estimator")
    k_range = est.get("k_range")
    if not isinstance(k_range, (list, tuple)) or len(k_range) != 2:
        raise ScenarioValidationError("estimator.k_range", f"expected [lo, hi], got {k_range!r}")
    k_lo = _integer(k_range[0], "estimator.k_range[0]", minimum=1)
    k_hi = _integer(k_range[1], "estimator.k_range[1]", minimum=k_lo)
    sigma = est.get("sigma_grid")
    if not isinstance(sigma, dict):
        raise ScenarioValidationError("estimator.sigma_grid", "expected a mapping with lo, hi, step")
    sigma_lo = _number(sigma.get("lo"), "estimator.sigma_grid.lo", positive=True)
    sigma_hi = _number(sigma.get("hi"), "estimator.sigma_grid.hi", positive=True)
    if sigma_hi < sigma_lo:
        raise ScenarioValidationError("estimator.sigma_grid", "hi must not be below lo")
    estimator = EstimatorSettings(
        theta=_number(est.get("theta"), "estimator.theta", non_negative=True),
        k_range=(k_lo, k_hi),
        d=_number(est.get("d"), "estimator.d", positive=True),
        sigma_lo=sigma_lo, sigma_hi=sigma_hi,
        sigma_step=_number(sigma.get("step"), "estimator.sigma_grid.step", positive=True),
        swd_projections=_integer(est.get("swd_projections"), "estimator.swd_projections", minimum=1),
        swd_interval=_number(est.get("swd_interval"), "estimator.swd_interval", positive=True),
        prior_density=_number(est.get("prior_density"), "estimator.prior_density", non_negative=True),
        share_detections=_flag(est.get("share_detections"), "estimator.share_detections"))

    dt = _number(raw.get("dt"), "dt", positive=True)
    max_sim_time = _number(raw.get("max_sim_time"), "max_sim_time", positive=True)
    if max_sim_time < dt:
        raise ScenarioValidationError("max_sim_time", f"must be at least dt ({dt})")

    lloyd = _section(raw, "lloyd")
    assignment = _section(raw, "assignment")
    capacity_mode = assignment.get("capacity_mode")
    if capacity_mode not in CAPACITY_MODES:
        raise ScenarioValidationError("assignment.capacity_mode",
                                      f"expected one of {', '.join(CAPACITY_MODES)}, got {capacity_mode!r}")

    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ScenarioValidationError("name", "a non-empty scenario name is required")

    return ScenarioConfig(
        name=name,
        grid=grid,
        gaussian_components=tuple(components),
        robots=tuple(robots),
        target_mode=target_mode,
        target_threshold=threshold,
        speed_model=kind,
        jitter=jitter,
        comm_range=comm_range,
        n0=_integer(raw.get("n0"), "n0", minimum=1),
        strategy=Strategy.parse(raw.get("strategy")),
        seed=_integer(raw.get("seed"), "seed", minimum=0),
        estimator=estimator,
        dt=dt,
        max_sim_time=max_sim_time,
        eps_s=_number(lloyd.get("eps_s"), "lloyd.eps_s", positive=True),
        lloyd_max_iters=_integer(lloyd.get("max_iters"), "lloyd.max_iters", minimum=1),
        capacity_mode=capacity_mode,
        max_passes=_integer(assignment.get("max_passes"), "assignment.max_passes", minimum=1),
    )


def build_scenario(scenario_data: dict, global_config: Optional[dict] = None) -> ScenarioConfig:
    """Defaults <- global `scenario_defaults` <- scenario data, then validation."""
    layered = merge_configs(DEFAULT_SCENARIO, (global_config or {}).get('scenario_defaults') or {})
    return scenario_from_dict(merge_configs(layered, scenario_data))


def load_scenario(path_or_name: Union[str, Path], global_config: Optional[dict] = None) -> ScenarioConfig:
    """
    Loads a scenario file (or a preset under scenarios/ by name).

    Raises:
        FileNotFoundError: neither a file nor a preset.
        ScenarioParseError: YAML syntax error, with line and column.
        ScenarioValidationError: semantic problem, naming the field.
    """
    path = resolve_scenario_path(path_or_name)
    if global_config is None:
        global_config = load_global_config()
    scenario_data = load_yaml_file(path)
    scenario_data.setdefault("name", path.stem)
    config = build_scenario(scenario_data, global_config)
    logger.info("Loaded scenario '%s' from %s (%d robots, %dx%d grid).", config.name, path, len(config.robots),
                config.grid.width_cells, config.grid.height_cells)
    return config


def dump_scenario(config: ScenarioConfig, file_path: Path) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)
    return file_path


if __name__ == '__main__':
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    print("Testing config_loader.py with the bundled presets...")
    for preset in list_presets():
        cfg = load_scenario(preset, global_config={})
        print(f"  {preset}: {len(cfg.robots)} robots, speed model {cfg.speed_model}, strategy {cfg.strategy.value}")
    print("Config loader test completed.")
