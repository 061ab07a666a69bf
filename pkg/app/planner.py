# app/planner.py
"""
Coverage paths over an assigned cell set: greedy nearest-neighbor ordering,
an exhaustive oracle for small sets, and the boustrophedon sweep used by the
static baseline. Paths are open (they start at the robot and do not return).
"""
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import NonPositiveSpeedError, PathTooLargeError


BRUTE_FORCE_LIMIT = 10


@dataclass
class CoveragePath:
    cells: List[int] = field(default_factory=list)
    start: tuple = (0.0, 0.0)
    total_length: float = 0.0

    def __len__(self):
        return len(self.cells)

    def waypoints(self, centroids: np.ndarray) -> np.ndarray:
        return np.vstack([np.asarray(self.start, dtype=float).reshape(1, 2), centroids[self.cells]])


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def nearest_neighbor_path(start: Sequence[float], cells: Sequence[int], centroids: np.ndarray) -> CoveragePath:
    """
    Greedy open path: from the current point, go to the closest unvisited cell.

    Args:
        start: robot position the path begins at.
        cells: cell indices to visit (duplicates are ignored).
        centroids: (n_cells, 2) centroid table.

    Returns:
        CoveragePath visiting every cell once. Distance ties go to the lower cell index.
    """
    origin = (float(start[0]), float(start[1]))
    remaining = np.array(sorted(set(int(c) for c in cells)), dtype=int)
    if len(remaining) == 0:
        return CoveragePath([], origin, 0.0)

    order: List[int] = []
    current = np.asarray(origin, dtype=float)
    total = 0.0
    while len(remaining):
        dist = np.linalg.norm(centroids[remaining] - current, axis=1)
        k = int(np.argmin(dist))  # remaining is sorted, so argmin keeps the lowest index on ties
        order.append(int(remaining[k]))
        total += float(dist[k])
        current = centroids[remaining[k]]
        remaining = np.delete(remaining, k)
    return CoveragePath(order, origin, total)


def brute_force_path(start: Sequence[float], cells: Sequence[int], centroids: np.ndarray) -> CoveragePath:
    unique = sorted(set(int(c) for c in cells))
    if len(unique) > BRUTE_FORCE_LIMIT:
        raise PathTooLargeError(f"Exhaustive search is limited to {BRUTE_FORCE_LIMIT} cells, got {len(unique)}.")
    origin = (float(start[0]), float(start[1]))
    if not unique:
        return CoveragePath([], origin, 0.0)

    pts = np.vstack([np.asarray(origin, dtype=float).reshape(1, 2), centroids[unique]])
    dist = cdist(pts, pts).tolist()
    n = len(unique)
    best = {"order": None, "length": np.inf}

    # depth-first over permutations in lexicographic order, pruning prefixes already too long
    def extend(prefix: List[int], last: int, length: float, left: List[int]):
        if length >= best["length"]:
            return
        if not left:
            best["order"], best["length"] = list(prefix), length
            return
        for k, node in enumerate(left):
            prefix.append(node)
            extend(prefix, node, length + dist[last][node], left[:k] + left[k + 1:])
            prefix.pop()

    extend([], 0, 0.0, list(range(1, n + 1)))
    return CoveragePath([unique[k - 1] for k in best["order"]], origin, float(best["length"]))


def path_travel_time(path: CoveragePath, v_max: float) -> float:
    if v_max <= 0:
        raise NonPositiveSpeedError(f"Travel speed must be positive, got {v_max}.")
    return path.total_length / v_max


def boustrophedon_order(cols: Sequence[int], rows: Sequence[int], width_cells: int) -> List[int]:
    """Row-by-row zigzag over a rectangle, starting at its lower-left cell."""
    cols = list(cols)
    order = []
    for k, row in enumerate(rows):
        line = cols if k % 2 == 0 else cols[::-1]
        order.extend(row * width_cells + c for c in line)
    return order


if __name__ == '__main__':
    print("Testing planner.py...")
    table = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 5.0]])
    nn = nearest_neighbor_path((0.0, 0.0), [0, 1, 2], table)
    exact = brute_force_path((0.0, 0.0), [0, 1, 2], table)
    print(f"  nearest neighbor: {nn.cells} ({nn.total_length:.3f} m)")
    print(f"  exhaustive:       {exact.cells} ({exact.total_length:.3f} m)")
    print("Planner test completed.")
