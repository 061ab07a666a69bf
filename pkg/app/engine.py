# app/engine.py
"""
Discrete-time multi-robot coverage simulation.

Strategies:
- mdcpp: goal initialization, capacity-constrained assignment weighted by the
  predicted coverage throughput, nearest-neighbor paths, and range-limited
  re-partitions whenever a robot runs low on cells. Each robot keeps its own
  target-density estimate, refreshed from its observations and from
  observations shared at re-partition events.
- dynamic: the same machinery with the estimator disabled (uniform density).
- sweeping: static vertical strips covered row by row, no communication.

Cells are waypoints: robots travel between centroids at travel speed and
cover a cell at its centroid for cell_size / coverage_speed seconds.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .assignment import (LloydResult, Partition, WorkloadModel, distributed_assignment, largest_remainder,
                         lloyd_init, workload)
from .config_loader import ScenarioConfig, SpeedProfile, Strategy
from .connectors.netsim import BROADCAST, Message, MessageKind, NetworkConfig, NetworkSimulator
from .errors import UndefinedDistanceError
from .estimator import EstimatorConfig, Observation, TargetEstimator, sliced_wasserstein
from .planner import CoveragePath, boustrophedon_order, nearest_neighbor_path, polyline_length
from .world import GridWorld, GroundTruthField

logger = logging.getLogger(__name__)

CO_LOCATED_OFFSET = 1e-3  # cell widths


class RobotMode(Enum):
    TO_INITIAL_GOAL = "to_initial_goal"
    COVERING = "covering"
    IDLE = "idle"


@dataclass(frozen=True)
class SpeedModel:
    kind: str = "interpolated"
    jitter: Tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        if self.kind not in ("three_speed", "interpolated"):
            raise ValueError(f"Unknown speed model '{self.kind}'.")
        if not 0 < self.jitter[0] <= self.jitter[1]:
            raise ValueError(f"Jitter bounds must satisfy 0 < lo <= hi, got {self.jitter}.")

    def draw_jitter(self, rng: np.random.Generator) -> float:
        """Speed multiplier for the next cell; only the three-speed model is randomized."""
        if self.kind != "three_speed":
            return 1.0
        return float(rng.uniform(self.jitter[0], self.jitter[1]))


def coverage_speed(speeds: SpeedProfile, model: SpeedModel, world: GridWorld, cell_index: int,
                   jitter: float = 1.0) -> float:
    if model.kind == "three_speed":
        base = speeds.v_int if world.has_targets(cell_index) else speeds.v_det
        return base * jitter
    peak = world.max_cell_density
    rho_norm = world.cell_density(cell_index) / peak if peak > 0 else 0.0
    return speeds.v_max + (speeds.v_min - speeds.v_max) * min(1.0, max(0.0, rho_norm))


def expected_coverage_speed(speeds: SpeedProfile, model: SpeedModel, rho_est: np.ndarray,
                            target_threshold: float) -> np.ndarray:
    """Coverage speed a robot predicts for cells of estimated density `rho_est` (no jitter)."""
    rho = np.asarray(rho_est, dtype=float)
    if model.kind == "three_speed":
        return np.where(rho > target_threshold, speeds.v_int, speeds.v_det)
    return speeds.v_max + (speeds.v_min - speeds.v_max) * np.clip(rho, 0.0, 1.0)


@dataclass
class RobotState:
    id: int
    position: np.ndarray
    speeds: SpeedProfile
    alpha: float
    noise_sigma: float
    estimator: TargetEstimator
    rng: np.random.Generator
    mode: RobotMode = RobotMode.TO_INITIAL_GOAL
    goal: Optional[np.ndarray] = None
    assigned: Set[int] = field(default_factory=set)
    queue: List[int] = field(default_factory=list)
    target: Optional[int] = None
    covering: bool = False
    cover_left: float = 0.0
    jitter: float = 1.0
    current_path: CoveragePath = field(default_factory=CoveragePath)
    path_length: float = 0.0
    finish_time: float = 0.0
    cells_covered: int = 0
    path_revision: int = 0
    last_event_count: int = -1


@dataclass
class ScenarioResult:
    scenario: str
    strategy: str
    seed: int
    completion_time: Optional[float]
    per_robot_path_length: Dict[int, float]
    per_robot_finish_time: Dict[int, float]
    per_robot_cells: Dict[int, int]
    swd_series: List[Tuple[float, float]]
    partition_events: int
    messages_sent: int = 0
    messages_dropped: int = 0
    aborted: bool = False
    sim_time: float = 0.0

    @property
    def total_path_length(self) -> float:
        return float(sum(self.per_robot_path_length.values()))

    def summary_row(self) -> Dict:
        return {
            "scenario": self.scenario,
            "strategy": self.strategy,
            "seed": self.seed,
            "completion_time": self.completion_time if self.completion_time is not None else float("nan"),
            "total_path_length": self.total_path_length,
            "partition_events": self.partition_events,
            "messages_sent": self.messages_sent,
            "messages_dropped": self.messages_dropped,
            "final_swd": self.swd_series[-1][1] if self.swd_series else float("nan"),
            "aborted": self.aborted,
        }


@dataclass
class RunLog:
    trajectories: List[Dict] = field(default_factory=list)
    paths: List[Dict] = field(default_factory=list)
    partitions: List[Dict] = field(default_factory=list)
    workloads: List[Dict] = field(default_factory=list)
    traffic: List[Dict] = field(default_factory=list)
    swd: List[Dict] = field(default_factory=list)
    truth_density: Optional[np.ndarray] = None
    predicted_density: Optional[np.ndarray] = None


def estimator_config(config: ScenarioConfig) -> EstimatorConfig:
    est = config.estimator
    return EstimatorConfig(theta=est.theta, k_range=est.k_range, radius=est.d, sigma_lo=est.sigma_lo,
                           sigma_hi=est.sigma_hi, sigma_step=est.sigma_step, length_scale=config.grid.cell_size,
                           prior_density=est.prior_density, swd_projections=est.swd_projections)


def build_world(config: ScenarioConfig, rng: np.random.Generator) -> GridWorld:
    truth = GroundTruthField(config.gaussian_components).scaled(config.grid.cell_size, config.grid.origin)
    world = GridWorld(config.grid, truth)
    world.seed_targets(config.target_threshold, rng, config.target_mode)
    return world


class Simulator:
    """One seeded run of one strategy on one scenario."""

    def __init__(self, config: ScenarioConfig, strategy: Optional[Strategy] = None):
        self.config = config
        self.strategy = Strategy.parse(strategy if strategy is not None else config.strategy)
        world_seq, assign_seq, metric_seq, offset_seq, robots_seq = np.random.SeedSequence(config.seed).spawn(5)
        self.assign_rng = np.random.default_rng(assign_seq)
        self.offset_rng = np.random.default_rng(offset_seq)
        self.metric_seed = int(metric_seq.generate_state(1)[0])

        self.world = build_world(config, np.random.default_rng(world_seq))
        self.centroids = self.world.centroids
        self.speed_model = SpeedModel(config.speed_model, tuple(config.jitter))
        self.network = NetworkSimulator(NetworkConfig(config.comm_range))
        self.est_config = estimator_config(config)
        self.predicts = self.strategy is Strategy.MDCPP

        cs = config.grid.cell_size
        origin = np.asarray(config.grid.origin, dtype=float)
        self.robots: Dict[int, RobotState] = {}
        ordered = sorted(config.robots, key=lambda r: r.id)
        for rc, seq in zip(ordered, robots_seq.spawn(len(ordered))):
            motion_seq, est_seq = seq.spawn(2)
            self.robots[rc.id] = RobotState(
                id=rc.id, position=origin + np.asarray(rc.start, dtype=float) * cs, speeds=rc.speeds,
                alpha=rc.alpha, noise_sigma=rc.noise_sigma,
                estimator=TargetEstimator(self.est_config, np.random.default_rng(est_seq), enabled=self.predicts),
                rng=np.random.default_rng(motion_seq))

        self.time = 0.0
        self.event_count = 0
        self.aborted = False
        self.lloyd_result: Optional[LloydResult] = None
        self.log = RunLog(truth_density=self.world.density_cache.copy())
        self._next_swd = 0.0
        self._is_setup = False

    @property
    def ids(self) -> List[int]:
        return sorted(self.robots)

    def positions(self) -> Dict[int, np.ndarray]:
        return {r: self.robots[r].position.copy() for r in self.ids}

    # --- setup ---

    def setup(self):
        if self._is_setup:
            return
        if self.strategy is Strategy.SWEEPING:
            self._setup_sweeping()
        else:
            self._setup_partitioned()
        for rid in self.ids:
            self._log_position(self.robots[rid], 0.0)
        if self.predicts:
            self._sample_swd()
        self._is_setup = True

    def separate_co_located(self, positions: Dict[int, np.ndarray]) -> Dict[int, np.ndarray]:
        """Nudges robots sharing a start point apart by a seeded offset of CO_LOCATED_OFFSET cell widths."""
        groups: Dict[Tuple[float, float], List[int]] = {}
        for rid in sorted(positions):
            groups.setdefault((float(positions[rid][0]), float(positions[rid][1])), []).append(rid)
        radius = CO_LOCATED_OFFSET * self.config.grid.cell_size
        separated = {rid: np.asarray(p, dtype=float).copy() for rid, p in positions.items()}
        for members in groups.values():
            if len(members) < 2:
                continue
            for rid in members:
                angle = self.offset_rng.uniform(0.0, 2.0 * np.pi)
                separated[rid] += radius * np.array([np.cos(angle), np.sin(angle)])
        return separated

    def _setup_partitioned(self):
        ids = self.ids
        starts = self.positions()
        cs = self.config.grid.cell_size
        sites = self.separate_co_located(starts)
        self.lloyd_result = lloyd_init(self.world, sites, WorkloadModel(alpha={r: self.robots[r].alpha for r in ids}),
                                       eps_s=self.config.eps_s * cs, max_iters=self.config.lloyd_max_iters)
        for rid in ids:
            self.robots[rid].goal = self.lloyd_result.goals[rid].copy()
        logger.info("Goal initialization %s after %d iterations.",
                    "converged" if self.lloyd_result.converged else "stopped", self.lloyd_result.iterations)

        pool = list(range(self.world.n_cells))
        ownership = {rid: [] for rid in ids}
        ownership[ids[0]] = pool
        model = self._capacity_model(ids, pool)
        partition = distributed_assignment(ownership, self.lloyd_result.goals, model, self.network, self.centroids,
                                           self.assign_rng, comm_positions=starts, max_passes=self.config.max_passes)
        for rid in ids:
            self.robots[rid].assigned = set(partition.cells_of(rid))
        self._record_partition(ids, partition.capacities)

    def _setup_sweeping(self):
        ids = self.ids
        width, height = self.config.grid.width_cells, self.config.grid.height_cells
        strip_widths = largest_remainder(width, {rid: 1.0 for rid in ids})
        col = 0
        for rid in ids:
            robot = self.robots[rid]
            cols = list(range(col, col + strip_widths[rid]))
            col += strip_widths[rid]
            if not cols:
                robot.mode = RobotMode.IDLE
                continue
            order = boustrophedon_order(cols, range(height), width)
            robot.goal = self.centroids[order[0]].copy()
            robot.assigned = set(order)
            robot.queue = order
            robot.current_path = CoveragePath(order, tuple(robot.goal), polyline_length(self.centroids[order]))
        self._record_partition(ids, {rid: len(self.robots[rid].assigned) for rid in ids})

    # --- motion ---

    def _move_toward(self, robot: RobotState, dest: np.ndarray, speed: float, budget: float) -> Tuple[float, bool]:
        delta = dest - robot.position
        dist = float(np.linalg.norm(delta))
        reach = speed * budget
        if reach >= dist:
            robot.position = np.asarray(dest, dtype=float).copy()
            robot.path_length += dist
            return budget - dist / speed, True
        robot.position = robot.position + delta / dist * reach
        robot.path_length += reach
        return 0.0, False

    def _advance(self, robot: RobotState, dt: float):
        budget = dt
        while budget > 0 and robot.mode is not RobotMode.IDLE:
            if robot.mode is RobotMode.TO_INITIAL_GOAL:
                budget, arrived = self._move_toward(robot, robot.goal, robot.speeds.v_max, budget)
                if arrived:
                    self._log_position(robot, self.time + dt - budget)
                    self._on_goal_reached(robot)
                continue

            if robot.target is None:
                if not robot.queue:
                    robot.mode = RobotMode.IDLE
                    break
                robot.target = robot.queue.pop(0)
                robot.jitter = self.speed_model.draw_jitter(robot.rng)
                robot.covering = False

            if not robot.covering:
                budget, arrived = self._move_toward(robot, self.centroids[robot.target],
                                                    robot.speeds.v_max * robot.jitter, budget)
                if arrived:
                    self._log_position(robot, self.time + dt - budget)
                    robot.covering = True
                    speed = coverage_speed(robot.speeds, self.speed_model, self.world, robot.target, robot.jitter)
                    robot.cover_left = self.config.grid.cell_size / speed
                continue

            spend = min(budget, robot.cover_left)
            robot.cover_left -= spend
            budget -= spend
            if robot.cover_left <= 0.0:
                self._complete_cell(robot, self.time + dt - budget)

    def _on_goal_reached(self, robot: RobotState):
        if self.strategy is not Strategy.SWEEPING:
            self._replan(robot)
        robot.mode = RobotMode.COVERING if robot.assigned else RobotMode.IDLE

    def _complete_cell(self, robot: RobotState, at_time: float):
        cell = robot.target
        self.world.mark_covered(cell)
        z = self.world.observe(cell, robot.noise_sigma, robot.rng)
        robot.estimator.ingest(cell, self.centroids[cell], z)
        if self.predicts and self.config.estimator.share_detections:
            point = self.centroids[cell]
            self._share_detection(robot, Observation(int(cell), (float(point[0]), float(point[1])), float(z)))
        robot.assigned.discard(cell)
        robot.target = None
        robot.covering = False
        robot.cells_covered += 1
        robot.finish_time = at_time

    def _replan(self, robot: RobotState):
        """Nearest-neighbor path over the uncommitted cells, starting from the committed cell if any."""
        if robot.target is not None:
            start = self.centroids[robot.target]
        else:
            start = robot.position
        path = nearest_neighbor_path(start, sorted(robot.assigned - {robot.target}), self.centroids)
        robot.queue = list(path.cells)
        if robot.target is not None:
            lead = float(np.linalg.norm(self.centroids[robot.target] - robot.position))
            path = CoveragePath([robot.target] + path.cells, tuple(robot.position), lead + path.total_length)
        robot.current_path = path
        robot.path_revision += 1
        self._log_path(robot)

    # --- re-partition ---

    def _capacity_model(self, ids: Sequence[int], pool: Sequence[int]) -> WorkloadModel:
        model = WorkloadModel(alpha={rid: self.robots[rid].alpha for rid in ids})
        if not (self.predicts and self.config.capacity_mode == "throughput" and len(pool)):
            return model
        cs = self.config.grid.cell_size
        points = self.centroids[list(pool)]
        for rid in ids:
            robot = self.robots[rid]
            v_cov = expected_coverage_speed(robot.speeds, self.speed_model, robot.estimator.density(points),
                                            self.config.target_threshold)
            model.rate[rid] = 1.0 / (float(np.mean(cs / v_cov)) + cs / robot.speeds.v_max)
        return model

    def _density_for(self, robot: RobotState) -> np.ndarray:
        if self.predicts:
            return robot.estimator.density(self.centroids)
        return np.ones(self.world.n_cells)

    def _share_observations(self, members: Sequence[int], positions: Dict[int, np.ndarray]):
        for rid in members:
            self.network.send(Message(rid, BROADCAST, MessageKind.OBSERVATION_SHARE,
                                      {"observations": self.robots[rid].estimator.share()}), positions)
        for rid in members:
            for msg in self.network.receive(rid, MessageKind.OBSERVATION_SHARE):
                self.robots[rid].estimator.merge(msg.payload["observations"])

    def _share_detection(self, robot: RobotState, obs: Observation):
        """Broadcasts one fresh observation to the robots currently in range."""
        positions = self.positions()
        if not self.network.send(Message(robot.id, BROADCAST, MessageKind.OBSERVATION_SHARE,
                                         {"observations": [obs]}), positions):
            return
        for rid in sorted(self.network.neighbors(robot.id, positions)):
            for msg in self.network.receive(rid, MessageKind.OBSERVATION_SHARE):
                self.robots[rid].estimator.merge(msg.payload["observations"])

    def repartition(self, requester: int):
        positions = self.positions()
        self.network.send(Message(requester, BROADCAST, MessageKind.REPARTITION_REQUEST, {"sim_time": self.time}),
                          positions)
        members = next(c for c in self.network.connected_components(positions) if requester in c)
        for rid in members:
            self.network.receive(rid, MessageKind.REPARTITION_REQUEST)
        if self.predicts:
            self._share_observations(members, positions)

        ownership = {rid: sorted(self.robots[rid].assigned - {self.robots[rid].target}) for rid in members}
        pool = sorted(c for cells in ownership.values() for c in cells)
        model = self._capacity_model(members, pool)
        partition = distributed_assignment(ownership, {rid: positions[rid] for rid in members}, model, self.network,
                                           self.centroids, self.assign_rng, max_passes=self.config.max_passes)
        count = self.world.coverage.covered_count
        for rid in members:
            robot = self.robots[rid]
            robot.assigned = set(partition.cells_of(rid))
            if robot.target is not None:
                robot.assigned.add(robot.target)
            if robot.mode is not RobotMode.TO_INITIAL_GOAL:
                self._replan(robot)
                robot.mode = RobotMode.COVERING if robot.assigned else RobotMode.IDLE
            robot.last_event_count = count
        self.event_count += 1
        logger.debug("t=%.1f re-partition #%d requested by robot %d over %s (%d cells).",
                     self.time, self.event_count, requester, members, len(pool))
        self._record_partition(members, partition.capacities)

    def _check_triggers(self):
        if self.world.is_complete:
            return
        count = self.world.coverage.covered_count
        for rid in self.ids:
            robot = self.robots[rid]
            if robot.mode is RobotMode.TO_INITIAL_GOAL:
                continue
            if len(robot.assigned) < self.config.n0 and robot.last_event_count != count:
                self.repartition(rid)

    # --- logging ---

    def _log_position(self, robot: RobotState, at_time: float):
        self.log.trajectories.append({"time": at_time, "robot_id": robot.id, "x": float(robot.position[0]),
                                      "y": float(robot.position[1]), "mode": robot.mode.value})

    def _log_path(self, robot: RobotState):
        for order, cell in enumerate(robot.current_path.cells):
            self.log.paths.append({"time": self.time, "robot_id": robot.id, "revision": robot.path_revision,
                                   "order": order, "cell_index": cell, "x": float(self.centroids[cell][0]),
                                   "y": float(self.centroids[cell][1])})

    def _record_partition(self, members: Sequence[int], capacities: Dict[int, int]):
        for rid in self.ids:
            for cell in sorted(self.robots[rid].assigned):
                self.log.partitions.append({"event": self.event_count, "time": self.time, "cell_index": cell,
                                            "robot_id": rid})
        model = WorkloadModel(alpha={rid: self.robots[rid].alpha for rid in members})
        owned = {rid: sorted(self.robots[rid].assigned) for rid in members}
        snapshot = Partition.from_ownership(owned, capacities)
        for rid in members:
            model.refresh_phi({rid: owned[rid]}, self._density_for(self.robots[rid]))
            self.log.workloads.append({
                "event": self.event_count, "time": self.time, "robot_id": rid, "cells": len(owned[rid]),
                "capacity": capacities.get(rid, 0), "phi": model.phi[rid],
                "workload": workload(rid, snapshot, self.robots[rid].position, model, self.centroids)})
        self.log.traffic.append({"event": self.event_count, "time": self.time, **self.network.traffic()})

    def _sample_swd(self):
        self._next_swd += self.config.estimator.swd_interval
        truth = self.world.density_cache
        if truth.sum() <= 0:
            return
        uniform = np.ones(self.world.n_cells)
        values = []
        for rid in self.ids:
            estimate = self.robots[rid].estimator.density(self.centroids)
            if estimate.sum() <= 0:
                estimate = uniform
            try:
                values.append(sliced_wasserstein(estimate, truth, self.centroids,
                                                 self.config.estimator.swd_projections,
                                                 np.random.default_rng(self.metric_seed)))
            except UndefinedDistanceError:
                logger.debug("SWD undefined for robot %d at t=%.1f", rid, self.time)
        if values:
            self.log.swd.append({"time": self.time, "swd": float(np.mean(values))})

    # --- loop ---

    def step(self):
        dt = self.config.dt
        for rid in self.ids:
            self._advance(self.robots[rid], dt)
        if self.strategy is not Strategy.SWEEPING:
            self._check_triggers()
        self.time += dt
        if self.predicts and self.time >= self._next_swd:
            self._sample_swd()

    def run(self) -> Tuple[ScenarioResult, RunLog]:
        self.setup()
        while not self.world.is_complete:
            if self.time >= self.config.max_sim_time:
                self.aborted = True
                logger.warning("Watchdog: '%s' (%s, seed %d) stopped at t=%.1f with %d/%d cells covered.",
                               self.config.name, self.strategy.value, self.config.seed, self.time,
                               self.world.coverage.covered_count, self.world.n_cells)
                break
            self.step()
        if self.predicts and (not self.log.swd or self.log.swd[-1]["time"] != self.time):
            self._sample_swd()
        for rid in self.ids:
            self._log_position(self.robots[rid], self.time)
        return self._result(), self._final_log()

    def _final_log(self) -> RunLog:
        if self.predicts:
            self.log.predicted_density = np.mean([self.robots[rid].estimator.density(self.centroids)
                                                  for rid in self.ids], axis=0)
        else:
            self.log.predicted_density = np.full(self.world.n_cells, self.config.estimator.prior_density)
        return self.log

    def _result(self) -> ScenarioResult:
        finish = {rid: self.robots[rid].finish_time for rid in self.ids}
        return ScenarioResult(
            scenario=self.config.name,
            strategy=self.strategy.value,
            seed=self.config.seed,
            completion_time=None if self.aborted else max(finish.values()),
            per_robot_path_length={rid: self.robots[rid].path_length for rid in self.ids},
            per_robot_finish_time=finish,
            per_robot_cells={rid: self.robots[rid].cells_covered for rid in self.ids},
            swd_series=[(row["time"], row["swd"]) for row in self.log.swd],
            partition_events=self.event_count,
            messages_sent=self.network.messages_sent,
            messages_dropped=self.network.messages_dropped,
            aborted=self.aborted,
            sim_time=self.time,
        )


def run_scenario(config: ScenarioConfig, strategy: Optional[Strategy] = None) -> Tuple[ScenarioResult, RunLog]:
    return Simulator(config, strategy).run()


if __name__ == '__main__':
    from .config_loader import load_scenario

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    print("Testing engine.py on the ld_2c preset...")
    scenario = load_scenario("ld_2c", global_config={})
    for strat in Strategy:
        res, _ = run_scenario(scenario, strat)
        print(f"  {strat.value}: completion {res.completion_time:.1f} s, path {res.total_path_length:.1f} m, "
              f"{res.partition_events} re-partitions")
    print("Engine test completed.")
