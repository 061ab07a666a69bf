# app/assignment.py
"""
Workload-aware partitioning of the uncovered cells.

- Goal initialization: Lloyd iterations over the power diagram of the robots.
- Capacity-constrained assignment: a random split with per-robot counts set
  by capacity weights, then pairwise heap swaps until no pair of robots can
  both get closer to their cells. The distributed version runs the same rules
  over range-limited messages; the centralized version is the reference.
"""
import heapq
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .connectors.netsim import BROADCAST, Message, MessageKind, NetworkSimulator

logger = logging.getLogger(__name__)

DEFAULT_MAX_PASSES = 10_000


@dataclass
class Partition:
    """Cell -> robot map over the cells being assigned, plus the per-robot target counts."""
    assignment: Dict[int, int] = field(default_factory=dict)
    capacities: Dict[int, int] = field(default_factory=dict)

    def cells_of(self, robot_id: int) -> List[int]:
        return sorted(c for c, r in self.assignment.items() if r == robot_id)

    def ownership(self) -> Dict[int, List[int]]:
        owned: Dict[int, List[int]] = {r: [] for r in self.capacities}
        for cell, robot in sorted(self.assignment.items()):
            owned.setdefault(robot, []).append(cell)
        return owned

    def counts(self) -> Dict[int, int]:
        return {r: len(cells) for r, cells in self.ownership().items()}

    def validate(self, cells: Sequence[int]):
        """Raises ValueError unless the partition is exactly the given cell set."""
        expected = set(cells)
        assigned = set(self.assignment)
        if assigned != expected:
            raise ValueError(f"Partition is not exhaustive/disjoint: {len(expected - assigned)} cells missing, "
                             f"{len(assigned - expected)} unexpected.")

    @classmethod
    def from_ownership(cls, ownership: Mapping[int, Sequence[int]],
                       capacities: Optional[Mapping[int, int]] = None) -> "Partition":
        assignment = {int(c): int(r) for r, cells in ownership.items() for c in cells}
        caps = dict(capacities) if capacities is not None else {r: len(c) for r, c in ownership.items()}
        return cls(assignment=assignment, capacities=caps)


@dataclass
class WorkloadModel:
    """alpha: coverage-capability weights; phi: summed estimated density over each robot's cells;
    rate: predicted coverage throughput multiplier used for capacity weights."""
    alpha: Dict[int, float]
    phi: Dict[int, float] = field(default_factory=dict)
    rate: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for rid, a in self.alpha.items():
            if a <= 0:
                raise ValueError(f"alpha for robot {rid} must be positive, got {a}.")

    def capacity_weight(self, robot_id: int) -> float:
        return self.alpha[robot_id] * self.rate.get(robot_id, 1.0)

    def power_weight(self, robot_id: int) -> float:
        return (self.phi.get(robot_id, 0.0) * self.alpha[robot_id]) ** 2

    def refresh_phi(self, ownership: Mapping[int, Sequence[int]], cell_density: np.ndarray):
        """Recomputes phi for the robots in `ownership` from a per-cell density array."""
        for r, cells in ownership.items():
            self.phi[r] = float(np.sum(cell_density[list(cells)])) if len(cells) else 0.0


class SwapHeap:
    """Max-heap of (cell, key); equal keys pop in ascending cell order."""

    def __init__(self):
        self._entries: List[Tuple[float, int]] = []

    def push(self, cell: int, key: float):
        heapq.heappush(self._entries, (-key, cell))

    def max_key(self) -> float:
        return -self._entries[0][0]

    def pop(self) -> Tuple[int, float]:
        neg_key, cell = heapq.heappop(self._entries)
        return cell, -neg_key

    def __len__(self):
        return len(self._entries)


def workload(robot_id: int, partition: Partition, position: Sequence[float], model: WorkloadModel,
             centroids: np.ndarray) -> float:
    cells = partition.cells_of(robot_id)
    if not cells:
        return 0.0
    dist = np.linalg.norm(centroids[cells] - np.asarray(position, dtype=float), axis=1)
    return float(model.phi.get(robot_id, 0.0) * model.alpha[robot_id] * dist.sum())


def largest_remainder(total: int, weights: Mapping[int, float]) -> Dict[int, int]:
    """Integer counts summing to `total`, proportional to weights; remainder ties go to the lower id."""
    ids = sorted(weights)
    weight_sum = float(sum(weights[r] for r in ids))
    quotas = {r: total * weights[r] / weight_sum for r in ids}
    counts = {r: int(np.floor(quotas[r])) for r in ids}
    leftover = total - sum(counts.values())
    by_remainder = sorted(ids, key=lambda r: (-(quotas[r] - counts[r]), r))
    for r in by_remainder[:leftover]:
        counts[r] += 1
    return counts


def initial_capacity_assignment(cells: Sequence[int], robot_ids: Sequence[int], model: WorkloadModel,
                                rng: np.random.Generator) -> Partition:
    ids = sorted(robot_ids)
    pool = sorted(int(c) for c in cells)
    capacities = largest_remainder(len(pool), {r: model.capacity_weight(r) for r in ids})
    shuffled = [pool[k] for k in rng.permutation(len(pool))]
    assignment: Dict[int, int] = {}
    start = 0
    for r in ids:
        for c in shuffled[start:start + capacities[r]]:
            assignment[c] = r
        start += capacities[r]
    return Partition(assignment=assignment, capacities=capacities)


def swap_key(g: Sequence[float], q_i: Sequence[float], q_j: Sequence[float]) -> float:
    g = np.asarray(g, dtype=float)
    return float(np.linalg.norm(g - np.asarray(q_i, dtype=float)) - np.linalg.norm(g - np.asarray(q_j, dtype=float)))


def pairwise_swap(cells_i: Sequence[int], cells_j: Sequence[int], q_i: Sequence[float], q_j: Sequence[float],
                  centroids: np.ndarray) -> Tuple[List[int], List[int]]:
    """Exchanges cells one-for-one while the two best keys sum to a positive gain."""
    if set(cells_i) & set(cells_j):
        raise ValueError("pairwise_swap needs disjoint cell sets.")
    qi = np.asarray(q_i, dtype=float)
    qj = np.asarray(q_j, dtype=float)
    heap_i, heap_j = SwapHeap(), SwapHeap()
    for cells, heap, own, other in ((cells_i, heap_i, qi, qj), (cells_j, heap_j, qj, qi)):
        if len(cells):
            pts = centroids[list(cells)]
            keys = np.linalg.norm(pts - own, axis=1) - np.linalg.norm(pts - other, axis=1)
            for c, k in zip(cells, keys):
                heap.push(int(c), float(k))

    new_i, new_j = set(cells_i), set(cells_j)
    while len(heap_i) and len(heap_j) and heap_i.max_key() + heap_j.max_key() > 0:
        g_i, _ = heap_i.pop()
        g_j, _ = heap_j.pop()
        new_i.remove(g_i)
        new_j.remove(g_j)
        new_i.add(g_j)
        new_j.add(g_i)
    return sorted(new_i), sorted(new_j)


def _swap_until_stable(owned: Dict[int, List[int]], positions: Mapping[int, Sequence[float]],
                       pairs: Sequence[Tuple[int, int]], centroids: np.ndarray, max_passes: int) -> int:
    passes = 0
    while passes < max_passes:
        passes += 1
        changed = False
        for i, j in pairs:
            new_i, new_j = pairwise_swap(owned[i], owned[j], positions[i], positions[j], centroids)
            if new_i != owned[i]:
                owned[i], owned[j] = new_i, new_j
                changed = True
        if not changed:
            return passes
    logger.warning("Swap loop stopped after the %d-pass limit without stabilizing.", max_passes)
    return passes


def centralized_assignment(robot_ids: Sequence[int], cells: Sequence[int], positions: Mapping[int, Sequence[float]],
                           model: WorkloadModel, centroids: np.ndarray, rng: np.random.Generator,
                           max_passes: int = DEFAULT_MAX_PASSES) -> Partition:
    ids = sorted(robot_ids)
    partition = initial_capacity_assignment(cells, ids, model, rng)
    owned = {r: partition.cells_of(r) for r in ids}
    pairs = [(i, j) for a, i in enumerate(ids) for j in ids[a + 1:]]
    _swap_until_stable(owned, positions, pairs, centroids, max_passes)
    return Partition.from_ownership(owned, partition.capacities)


@dataclass
class _AgentState:
    robot_id: int
    position: np.ndarray
    weight: float
    cells: List[int]
    neighbors: Set[int] = field(default_factory=set)
    stable: bool = False


def _relay(network: NetworkSimulator, route: Sequence[int], kind: MessageKind, payload: Dict,
           comm: Mapping[int, Sequence[float]]) -> Optional[Message]:
    """Forwards a message hop by hop along `route`; returns the copy delivered to the last robot."""
    delivered: Optional[Message] = None
    for sender, recipient in zip(route, route[1:]):
        network.send(Message(sender, recipient, kind, payload), comm)
        received = network.receive(recipient, kind)
        if not received:
            return None
        delivered = received[-1]
    return delivered


def _run_component(component: Sequence[int], agents: Dict[int, _AgentState], comm: Mapping[int, Sequence[float]],
                   model: WorkloadModel, network: NetworkSimulator, centroids: np.ndarray,
                   rng: np.random.Generator, max_passes: int) -> Dict[int, int]:
    members = sorted(component)
    for rid in members:
        agents[rid].neighbors = network.neighbors(rid, comm)

    def leader_of(rid: int) -> int:
        return min({rid} | agents[rid].neighbors)

    # Each hop goes to the smallest-id neighbor, so ids strictly decrease and
    # every route ends at an initializer (a robot that is its own leader).
    routes: Dict[int, List[int]] = {}
    for rid in members:
        route = [rid]
        while leader_of(route[-1]) != route[-1]:
            route.append(leader_of(route[-1]))
        routes[rid] = route

    capacities: Dict[int, int] = {}
    for leader in members:
        if len(routes[leader]) > 1:
            continue
        group = [rid for rid in members if routes[rid][-1] == leader]
        reports: Dict[int, Dict] = {}
        for rid in group:
            if rid == leader:
                continue
            _relay(network, routes[rid][::-1], MessageKind.REQUEST_ASSIGNMENT, {}, comm)
            a = agents[rid]
            delivered = _relay(network, routes[rid], MessageKind.SEND_STATE_AND_CELLS,
                               {"cells": list(a.cells), "position": tuple(a.position), "weight": a.weight}, comm)
            if delivered is not None:
                reports[rid] = delivered.payload
        pool = list(agents[leader].cells) + [c for rid in sorted(reports) for c in reports[rid]["cells"]]
        group = [leader] + sorted(reports)
        group_model = WorkloadModel(alpha={rid: 1.0 for rid in group},
                                    rate={rid: agents[rid].weight for rid in group})
        init = initial_capacity_assignment(pool, group, group_model, rng)
        capacities.update(init.capacities)
        for rid in group:
            cells = init.cells_of(rid)
            if rid == leader:
                agents[rid].cells = cells
                continue
            delivered = _relay(network, routes[rid][::-1], MessageKind.SEND_ASSIGNMENT, {"cells": cells}, comm)
            if delivered is not None:
                agents[rid].cells = list(delivered.payload["cells"])

    for rid in members:
        if len(routes[rid]) > 1:
            a = agents[rid]
            network.send(Message(rid, BROADCAST, MessageKind.SEND_STATE_AND_CELLS,
                                 {"cells": list(a.cells), "position": tuple(a.position), "weight": a.weight}), comm)
    for rid in members:
        network.receive(rid, MessageKind.SEND_STATE_AND_CELLS)

    pairs = [(i, j) for i in members for j in sorted(agents[i].neighbors) if i < j]
    passes = 0
    while passes < max_passes:
        passes += 1
        for rid in members:
            agents[rid].stable = True
        for i, j in pairs:
            network.send(Message(i, j, MessageKind.REQUEST_ASSIGNMENT), comm)
            network.receive(j, MessageKind.REQUEST_ASSIGNMENT)
            aj = agents[j]
            network.send(Message(j, i, MessageKind.SEND_STATE_AND_CELLS,
                                 {"cells": list(aj.cells), "position": tuple(aj.position), "weight": aj.weight}),
                         comm)
            state = network.receive(i, MessageKind.SEND_STATE_AND_CELLS)[-1].payload
            new_i, new_j = pairwise_swap(agents[i].cells, state["cells"], agents[i].position, state["position"],
                                         centroids)
            if new_i != agents[i].cells:
                agents[i].stable = False
                agents[j].stable = False
            agents[i].cells = new_i
            network.send(Message(i, j, MessageKind.SWAPPED_ASSIGNMENT, {"cells": new_j}), comm)
            for m in network.receive(j, MessageKind.SWAPPED_ASSIGNMENT):
                agents[j].cells = list(m.payload["cells"])
        if all(agents[rid].stable for rid in members):
            break
    else:
        logger.warning("Distributed swap loop stopped after the %d-pass limit without stabilizing.", max_passes)
    return capacities


def distributed_assignment(ownership: Mapping[int, Sequence[int]], positions: Mapping[int, Sequence[float]],
                           model: WorkloadModel, network: NetworkSimulator, centroids: np.ndarray,
                           rng: np.random.Generator, comm_positions: Optional[Mapping[int, Sequence[float]]] = None,
                           max_passes: int = DEFAULT_MAX_PASSES) -> Partition:
    """
    Range-limited cell assignment over network messages.

    Args:
        ownership: robot id -> cells it currently owns (the pool each component redistributes).
        positions: robot positions used for the swap keys.
        model: capacity weights come from `model.capacity_weight`.
        network: message layer; neighbor sets are snapshotted once per call.
        centroids: (n_cells, 2) cell centroids.
        rng: consumed by the random initial split, one initializer at a time in id order.
        comm_positions: positions used for the range graph (defaults to `positions`).

    Returns:
        Partition over all owned cells. Cells never cross range-graph components.
    """
    comm = comm_positions if comm_positions is not None else positions
    comm = {r: comm[r] for r in ownership}
    agents = {
        r: _AgentState(robot_id=r, position=np.asarray(positions[r], dtype=float),
                       weight=model.capacity_weight(r), cells=sorted(int(c) for c in ownership[r]))
        for r in ownership
    }
    capacities: Dict[int, int] = {}
    for component in network.connected_components(comm):
        capacities.update(_run_component(component, agents, comm, model, network, centroids, rng, max_passes))
    return Partition.from_ownership({r: a.cells for r, a in sorted(agents.items())}, capacities)


@dataclass
class LloydResult:
    goals: Dict[int, np.ndarray]
    converged: bool
    iterations: int
    objective_history: List[float] = field(default_factory=list)


def power_labels(points: np.ndarray, sites: np.ndarray, power_weights: np.ndarray) -> np.ndarray:
    """Index of the site minimizing |g - q|^2 - w for every point (ties to the lower index)."""
    return np.argmin(cdist(points, sites, "sqeuclidean") - power_weights[None, :], axis=1)


def lloyd_objective(points: np.ndarray, density: np.ndarray, sites: np.ndarray, power_weights: np.ndarray,
                    labels: np.ndarray) -> float:
    sq = np.sum((points - sites[labels]) ** 2, axis=1)
    return float(np.sum(density * (sq - power_weights[labels])))


def lloyd_init(world, positions: Mapping[int, Sequence[float]], model: WorkloadModel, eps_s: float,
               max_iters: int = 100, density: Optional[np.ndarray] = None) -> LloydResult:
    """Moves each site to the weighted centroid of its power cell until every move is below eps_s."""
    if eps_s <= 0:
        raise ValueError(f"eps_s must be positive, got {eps_s}.")
    ids = sorted(positions)
    if not ids:
        raise ValueError("Goal initialization needs at least one robot.")
    points = world.centroids
    weights_g = np.ones(len(points)) if density is None else np.asarray(density, dtype=float)
    sites = np.array([positions[r] for r in ids], dtype=float).reshape(-1, 2)
    power = np.array([model.power_weight(r) for r in ids], dtype=float)

    history: List[float] = []
    converged = False
    iteration = 0
    for iteration in range(1, max_iters + 1):
        labels = power_labels(points, sites, power)
        history.append(lloyd_objective(points, weights_g, sites, power, labels))
        new_sites = sites.copy()
        for k in range(len(ids)):
            mask = labels == k
            mass = weights_g[mask].sum()
            if mass > 0:
                new_sites[k] = (points[mask] * weights_g[mask, None]).sum(axis=0) / mass
        displacement = np.linalg.norm(new_sites - sites, axis=1)
        sites = new_sites
        if np.all(displacement < eps_s):
            converged = True
            break
    if not converged:
        logger.warning("Goal initialization did not converge within %d iterations.", max_iters)
    labels = power_labels(points, sites, power)
    history.append(lloyd_objective(points, weights_g, sites, power, labels))
    return LloydResult(goals={r: sites[k] for k, r in enumerate(ids)}, converged=converged,
                       iterations=iteration, objective_history=history)
