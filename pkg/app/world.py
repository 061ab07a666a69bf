# app/world.py
"""
Gridded task space: cell geometry, the ground-truth Gaussian-mixture target
density, the observation model, and coverage bookkeeping.

Cells are indexed row-major (j = row * width_cells + col); the centroid of
cell j sits at origin + ((col + 0.5) * cell_size, (row + 0.5) * cell_size).
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import CellIndexError

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

TARGET_MODES = ("threshold", "bernoulli")


@dataclass(frozen=True)
class GridSpec:
    width_cells: int
    height_cells: int
    cell_size: float = 10.0
    origin: Point = (0.0, 0.0)

    def __post_init__(self):
        if self.width_cells <= 0 or self.height_cells <= 0:
            raise ValueError(f"Grid dimensions must be positive, got {self.width_cells}x{self.height_cells}.")
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}.")

    @property
    def n_cells(self) -> int:
        return self.width_cells * self.height_cells

    def centroids(self) -> np.ndarray:
        cols, rows = np.meshgrid(np.arange(self.width_cells), np.arange(self.height_cells))
        xs = self.origin[0] + (cols.ravel() + 0.5) * self.cell_size
        ys = self.origin[1] + (rows.ravel() + 0.5) * self.cell_size
        return np.column_stack([xs, ys]).astype(float)

    def col_row(self, cell_index: int) -> Tuple[int, int]:
        return cell_index % self.width_cells, cell_index // self.width_cells

    def index_of(self, col: int, row: int) -> int:
        return row * self.width_cells + col


@dataclass(frozen=True)
class GaussianComponent:
    center: Point
    sigma: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"Gaussian sigma must be positive, got {self.sigma}.")
        if self.amplitude <= 0:
            raise ValueError(f"Gaussian amplitude must be positive, got {self.amplitude}.")


class GroundTruthField:
    """Superposition (sum) of isotropic Gaussians."""

    def __init__(self, components: Sequence[GaussianComponent]):
        self.components: List[GaussianComponent] = list(components)

    @property
    def peak_bound(self) -> float:
        return float(sum(c.amplitude for c in self.components))

    def density_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        total = np.zeros(len(pts))
        for comp in self.components:
            sq = (pts[:, 0] - comp.center[0]) ** 2 + (pts[:, 1] - comp.center[1]) ** 2
            total += comp.amplitude * np.exp(-sq / (2.0 * comp.sigma ** 2))
        return total

    def true_density(self, p: Point) -> float:
        return float(self.density_at(np.array([p], dtype=float))[0])

    def scaled(self, factor: float, offset: Point = (0.0, 0.0)) -> "GroundTruthField":
        """Same field with centers and sigmas multiplied by `factor` (cell widths -> meters), shifted by `offset`."""
        return GroundTruthField([
            GaussianComponent((offset[0] + c.center[0] * factor, offset[1] + c.center[1] * factor),
                              c.sigma * factor, c.amplitude)
            for c in self.components
        ])


@dataclass
class CoverageState:
    covered: np.ndarray
    has_targets: np.ndarray
    covered_count: int = 0

    @classmethod
    def empty(cls, n_cells: int) -> "CoverageState":
        return cls(covered=np.zeros(n_cells, dtype=bool), has_targets=np.zeros(n_cells, dtype=bool))


def seed_targets(target_field: GroundTruthField, centroids: np.ndarray, threshold: float,
                 rng: np.random.Generator, mode: str = "threshold") -> np.ndarray:
    """Decide which cells hold targets of interest.

    `threshold` mode marks cells whose true density exceeds the threshold;
    `bernoulli` mode draws each cell with probability min(1, density).
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"Target threshold must lie in [0, 1], got {threshold}.")
    density = target_field.density_at(centroids)
    if mode == "threshold":
        return density > threshold
    if mode == "bernoulli":
        return rng.random(len(density)) < np.minimum(1.0, density)
    raise ValueError(f"Unknown target mode '{mode}'. Valid modes: {', '.join(TARGET_MODES)}")


class GridWorld:
    def __init__(self, spec: GridSpec, target_field: GroundTruthField,
                 has_targets: Optional[np.ndarray] = None):
        self.spec = spec
        self.field = target_field
        self.centroids = spec.centroids()
        self.density_cache = self.field.density_at(self.centroids)
        self.coverage = CoverageState.empty(spec.n_cells)
        if has_targets is not None:
            self.coverage.has_targets = np.asarray(has_targets, dtype=bool).copy()

    @property
    def n_cells(self) -> int:
        return self.spec.n_cells

    @property
    def cell_size(self) -> float:
        return self.spec.cell_size

    @property
    def max_cell_density(self) -> float:
        return float(self.density_cache.max()) if self.n_cells else 0.0

    def _check(self, cell_index: int) -> int:
        if not 0 <= int(cell_index) < self.n_cells:
            raise CellIndexError(cell_index, self.n_cells)
        return int(cell_index)

    def true_density(self, p: Point) -> float:
        return self.field.true_density(p)

    def centroid(self, cell_index: int) -> np.ndarray:
        return self.centroids[self._check(cell_index)]

    def cell_density(self, cell_index: int) -> float:
        return float(self.density_cache[self._check(cell_index)])

    def cell_of(self, p: Sequence[float]) -> int:
        col = int(np.clip((p[0] - self.spec.origin[0]) // self.cell_size, 0, self.spec.width_cells - 1))
        row = int(np.clip((p[1] - self.spec.origin[1]) // self.cell_size, 0, self.spec.height_cells - 1))
        return self.spec.index_of(col, row)

    def observe(self, cell_index: int, noise_sigma: float, rng: np.random.Generator) -> float:
        j = self._check(cell_index)
        rho = float(self.density_cache[j])
        if noise_sigma <= 0:
            return rho
        return max(0.0, rho + float(rng.normal(0.0, noise_sigma)))

    def mark_covered(self, cell_index: int) -> CoverageState:
        j = self._check(cell_index)
        if not self.coverage.covered[j]:
            self.coverage.covered[j] = True
            self.coverage.covered_count += 1
        return self.coverage

    def seed_targets(self, threshold: float, rng: np.random.Generator, mode: str = "threshold") -> np.ndarray:
        self.coverage.has_targets = seed_targets(self.field, self.centroids, threshold, rng, mode)
        logger.debug("Seeded %d target cells (%s mode).", int(self.coverage.has_targets.sum()), mode)
        return self.coverage.has_targets

    def has_targets(self, cell_index: int) -> bool:
        return bool(self.coverage.has_targets[self._check(cell_index)])

    def is_covered(self, cell_index: int) -> bool:
        return bool(self.coverage.covered[self._check(cell_index)])

    def uncovered_cells(self) -> List[int]:
        return np.flatnonzero(~self.coverage.covered).tolist()

    @property
    def is_complete(self) -> bool:
        return self.coverage.covered_count == self.n_cells


if __name__ == '__main__':
    print("Testing world.py on the 20x20 grid...")
    spec = GridSpec(20, 20, cell_size=10.0)
    truth = GroundTruthField([GaussianComponent((5.0, 5.0), 3.0), GaussianComponent((15.0, 15.0), 3.0)]).scaled(10.0)
    world = GridWorld(spec, truth)
    world.seed_targets(0.5, np.random.default_rng(0))
    print(f"  cells: {world.n_cells}, target cells: {int(world.coverage.has_targets.sum())}, "
          f"max cell density: {world.max_cell_density:.4f}")
    for j in range(world.n_cells):
        world.mark_covered(j)
    assert world.is_complete and not world.uncovered_cells()
    print("World test completed.")
