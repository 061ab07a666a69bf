# app/estimator.py
"""
Online estimation of the target distribution from sparse, noisy cell
observations.

Pipeline per refit: keep the observations above a threshold, cluster their
positions with K-means for each candidate K, keep the K with the best fit
score, then pick each component's sigma from a grid by mean squared error
against the observations around it. The estimate is a max-composition of
unit Gaussians. The sliced Wasserstein distance compares an estimate with the
ground truth.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import pearsonr, wasserstein_distance

from .errors import InfeasibleClusteringError, UndefinedDistanceError

logger = logging.getLogger(__name__)


@dataclass
class EstimatorConfig:
    """Estimator parameters. Lengths (radius, sigma range) are in cell widths."""
    theta: float = 0.6
    k_range: Tuple[int, int] = (1, 5)
    radius: float = 5.0
    sigma_lo: float = 2.5
    sigma_hi: float = 5.0
    sigma_step: float = 0.1
    length_scale: float = 1.0
    prior_density: float = 0.0
    swd_projections: int = 50

    @property
    def radius_m(self) -> float:
        return self.radius * self.length_scale

    def sigma_grid(self) -> np.ndarray:
        n = int(round((self.sigma_hi - self.sigma_lo) / self.sigma_step)) + 1
        grid = np.round(np.linspace(self.sigma_lo, self.sigma_hi, n), 10)
        return grid * self.length_scale

    @property
    def sigma_midpoint(self) -> float:
        return 0.5 * (self.sigma_lo + self.sigma_hi) * self.length_scale

    def k_candidates(self) -> range:
        return range(self.k_range[0], self.k_range[1] + 1)


@dataclass(frozen=True)
class Observation:
    cell_index: int
    point: Tuple[float, float]
    z: float


class ObservationStore:
    """All observations by cell (latest wins) plus the subset above the threshold."""

    def __init__(self, threshold: float):
        self.threshold = threshold
        self.all_observations: Dict[int, Observation] = {}
        self._filtered: Dict[int, Observation] = {}
        self.version = 0
        self._arrays_version = -1
        self._points = np.empty((0, 2))
        self._values = np.empty(0)
        self._cells = np.empty(0, dtype=int)

    def __len__(self):
        return len(self.all_observations)

    def ingest(self, cell_index: int, point: Sequence[float], z: float) -> "ObservationStore":
        if z < 0:
            raise ValueError(f"Observed density must be non-negative, got {z}.")
        obs = Observation(int(cell_index), (float(point[0]), float(point[1])), float(z))
        self.all_observations[obs.cell_index] = obs
        if obs.z > self.threshold:
            self._filtered[obs.cell_index] = obs
        else:
            self._filtered.pop(obs.cell_index, None)
        self.version += 1
        return self

    def merge(self, observations: Iterable[Observation]) -> int:
        """Adds observations of cells not seen locally. Returns how many were new."""
        added = 0
        for obs in observations:
            if obs.cell_index not in self.all_observations:
                self.ingest(obs.cell_index, obs.point, obs.z)
                added += 1
        return added

    @property
    def filtered_set(self) -> List[Observation]:
        return [self._filtered[c] for c in sorted(self._filtered)]

    def rebuild_filtered(self) -> List[Observation]:
        return [o for c, o in sorted(self.all_observations.items()) if o.z > self.threshold]

    def filtered_points(self) -> np.ndarray:
        return np.array([o.point for o in self.filtered_set], dtype=float).reshape(-1, 2)

    def _refresh_arrays(self):
        if self._arrays_version == self.version:
            return
        ordered = [self.all_observations[c] for c in sorted(self.all_observations)]
        self._cells = np.array([o.cell_index for o in ordered], dtype=int)
        self._points = np.array([o.point for o in ordered], dtype=float).reshape(-1, 2)
        self._values = np.array([o.z for o in ordered], dtype=float)
        self._arrays_version = self.version

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cell indices, points, values) of all observations, sorted by cell index."""
        self._refresh_arrays()
        return self._cells, self._points, self._values


@dataclass
class GmmComponent:
    center: Tuple[float, float]
    sigma: Optional[float] = None
    low_confidence: bool = False


@dataclass
class GmmEstimate:
    components: List[GmmComponent] = field(default_factory=list)
    fit_score: float = 0.0

    @property
    def k_hat(self) -> int:
        return len(self.components)

    @classmethod
    def empty(cls) -> "GmmEstimate":
        return cls()


@dataclass
class ComponentScore:
    peak_density: float
    explored_count: int
    pearson: float
    score: float


@dataclass
class FitScoreBreakdown:
    per_component: List[ComponentScore]
    aggregate: float


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss: float
    iterations: int
    wcss_history: List[float] = field(default_factory=list)


@dataclass
class SigmaFit:
    sigma: float
    mse: float
    low_confidence: bool = False


def _farthest_point_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(len(points)))
    chosen = [first]
    min_d = cdist(points, points[[first]]).ravel()
    while len(chosen) < k:
        nxt = int(np.argmax(min_d))
        chosen.append(nxt)
        min_d = np.minimum(min_d, cdist(points, points[[nxt]]).ravel())
    return points[chosen].copy()


def _wcss(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


def kmeans(points: Sequence[Sequence[float]], k: int, rng: np.random.Generator,
           max_iter: int = 100) -> KMeansResult:
    """
    Lloyd-style K-means with farthest-point seeding.

    Args:
        points: (n, 2) positions.
        k: number of clusters, 1 <= k <= n.
        rng: seeded generator; only the first seed point is random.

    Returns:
        KMeansResult with labels, centroids (cluster means), the within-cluster
        sum of squares and its per-iteration history.

    Raises:
        InfeasibleClusteringError: if k exceeds the number of points or is < 1.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise InfeasibleClusteringError("K-means needs at least one point.")
    if k < 1 or k > len(pts):
        raise InfeasibleClusteringError(f"Cannot form {k} clusters from {len(pts)} points.")

    centroids = _farthest_point_seeds(pts, k, rng)
    labels = np.argmin(cdist(pts, centroids, "sqeuclidean"), axis=1)
    history = [_wcss(pts, labels, centroids)]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        new_labels = np.argmin(cdist(pts, centroids, "sqeuclidean"), axis=1)
        history.append(_wcss(pts, new_labels, centroids))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels=labels, centroids=centroids, wcss=_wcss(pts, labels, centroids),
                        iterations=iterations, wcss_history=history)


def _unit_gaussian(sq_dist: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-sq_dist / (2.0 * sigma ** 2))


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    # Correlation is undefined on fewer than two samples or a constant vector.
    if len(a) < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0
    r = float(pearsonr(a, b)[0])
    return float(np.clip(r, -1.0, 1.0)) if np.isfinite(r) else 0.0


def fit_score(candidate_centers: Sequence[Sequence[float]], store: ObservationStore,
              radius: float, sigma: float) -> FitScoreBreakdown:
    centers = np.asarray(candidate_centers, dtype=float).reshape(-1, 2)
    if len(centers) == 0:
        raise ValueError("fit_score needs at least one candidate center.")
    _, pts, vals = store.arrays()
    if len(pts) == 0:
        raise ValueError("fit_score needs at least one observation.")

    sq = cdist(centers, pts, "sqeuclidean")
    per_component = []
    for k in range(len(centers)):
        nearest = int(np.argmin(sq[k]))
        peak = float(vals[nearest])
        in_radius = np.sqrt(sq[k]) < radius
        explored = int(in_radius.sum())
        e_k = _pearson(vals[in_radius], _unit_gaussian(sq[k][in_radius], sigma))
        per_component.append(ComponentScore(peak, explored, e_k, peak * explored * e_k))
    aggregate = float(np.mean([c.score for c in per_component]))
    return FitScoreBreakdown(per_component=per_component, aggregate=aggregate)


def select_k(store: ObservationStore, k_candidates: Iterable[int], rng: np.random.Generator,
             radius: float, sigma: float) -> GmmEstimate:
    """Best-scoring K-means clustering of the filtered observations; sigmas are left unset."""
    points = store.filtered_points()
    if len(points) == 0:
        return GmmEstimate.empty()

    best: Optional[GmmEstimate] = None
    for k in sorted(set(k_candidates)):
        if k < 1 or k > len(points):
            continue
        result = kmeans(points, k, rng)
        score = fit_score(result.centroids, store, radius, sigma).aggregate
        logger.debug("K=%d fit score %.4f", k, score)
        # strict comparison keeps the smaller K on ties
        if best is None or score > best.fit_score:
            best = GmmEstimate([GmmComponent((float(c[0]), float(c[1]))) for c in result.centroids], score)
    return best if best is not None else GmmEstimate.empty()


def fit_sigma(center: Sequence[float], store: ObservationStore, sigma_grid: Sequence[float],
              radius: float) -> SigmaFit:
    grid = np.sort(np.asarray(sigma_grid, dtype=float))
    _, pts, vals = store.arrays()
    if len(pts):
        sq = cdist(np.asarray(center, dtype=float).reshape(1, 2), pts, "sqeuclidean").ravel()
        mask = np.sqrt(sq) < radius
    else:
        mask = np.zeros(0, dtype=bool)
    if not mask.any():
        fallback = 0.5 * (grid[0] + grid[-1])
        logger.warning("No explored cells within %.2f of center %s; sigma falls back to %.3f.",
                       radius, tuple(center), fallback)
        return SigmaFit(sigma=float(fallback), mse=float("nan"), low_confidence=True)

    sq, rho = sq[mask], vals[mask]
    mse = np.array([np.mean((rho - _unit_gaussian(sq, s)) ** 2) for s in grid])
    best = int(np.argmin(mse))  # first minimum -> smaller sigma wins ties
    return SigmaFit(sigma=float(grid[best]), mse=float(mse[best]))


def predicted_field(estimate: GmmEstimate, points: np.ndarray, prior: float = 0.0) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if estimate.k_hat == 0:
        return np.full(len(pts), float(prior))
    centers = np.array([c.center for c in estimate.components], dtype=float)
    sigmas = np.array([c.sigma for c in estimate.components], dtype=float)
    sq = cdist(pts, centers, "sqeuclidean")
    return np.max(np.exp(-sq / (2.0 * sigmas ** 2)), axis=1)


def predicted_density(estimate: GmmEstimate, p: Sequence[float], prior: float = 0.0) -> float:
    return float(predicted_field(estimate, np.array([p], dtype=float), prior)[0])


def estimate_gmm(store: ObservationStore, config: EstimatorConfig, rng: np.random.Generator,
                 correlation_sigma: Optional[float] = None) -> GmmEstimate:
    sigma = correlation_sigma if correlation_sigma is not None else config.sigma_midpoint
    estimate = select_k(store, config.k_candidates(), rng, config.radius_m, sigma)
    grid = config.sigma_grid()
    for comp in estimate.components:
        fit = fit_sigma(comp.center, store, grid, config.radius_m)
        comp.sigma = fit.sigma
        comp.low_confidence = fit.low_confidence
    return estimate


class TargetEstimator:
    """One robot's belief about the target distribution."""

    def __init__(self, config: EstimatorConfig, rng: np.random.Generator, enabled: bool = True):
        self.config = config
        self.rng = rng
        self.enabled = enabled
        self.store = ObservationStore(config.theta)
        self._estimate = GmmEstimate.empty()
        self._fitted_version = 0
        self._correlation_sigma: Optional[float] = None

    def ingest(self, cell_index: int, point: Sequence[float], z: float):
        if self.enabled:
            self.store.ingest(cell_index, point, z)

    def share(self) -> List[Observation]:
        return list(self.store.all_observations.values())

    def merge(self, observations: Iterable[Observation]) -> int:
        return self.store.merge(observations) if self.enabled else 0

    @property
    def estimate(self) -> GmmEstimate:
        if self.enabled and self._fitted_version != self.store.version:
            self._estimate = estimate_gmm(self.store, self.config, self.rng, self._correlation_sigma)
            sigmas = [c.sigma for c in self._estimate.components if c.sigma is not None]
            if sigmas:
                self._correlation_sigma = float(np.mean(sigmas))
            self._fitted_version = self.store.version
        return self._estimate

    def density(self, points: np.ndarray) -> np.ndarray:
        return predicted_field(self.estimate, points, self.config.prior_density)


def sliced_wasserstein(a: Sequence[float], b: Sequence[float], points: np.ndarray,
                       n_projections: int, rng: np.random.Generator) -> float:
    """
    Monte-Carlo sliced Wasserstein-1 distance between two densities on the same
    support points. Both fields are normalized to probability masses first.
    """
    wa = np.asarray(a, dtype=float)
    wb = np.asarray(b, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if wa.shape != wb.shape or len(wa) != len(pts):
        raise ValueError("Both density fields must be defined over the same points.")
    if wa.sum() <= 0 or wb.sum() <= 0:
        raise UndefinedDistanceError("Sliced Wasserstein distance is undefined for a field with zero total mass.")
    wa, wb = wa / wa.sum(), wb / wb.sum()

    directions = rng.normal(size=(n_projections, 2))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    projected = pts @ directions.T
    distances = [wasserstein_distance(projected[:, i], projected[:, i], wa, wb) for i in range(n_projections)]
    return float(np.mean(distances))
