import numpy as np
import pytest

from app.errors import InfeasibleClusteringError, UndefinedDistanceError
from app.estimator import (EstimatorConfig, GmmComponent, GmmEstimate, ObservationStore, TargetEstimator,
                           estimate_gmm, fit_score, fit_sigma, kmeans, predicted_density, predicted_field,
                           select_k, sliced_wasserstein)

from .conftest import THREE_HOTSPOT_CENTERS


def _gaussian_store(center, sigma, points, threshold=0.6):
    store = ObservationStore(threshold)
    for j, p in enumerate(points):
        sq = (p[0] - center[0]) ** 2 + (p[1] - center[1]) ** 2
        store.ingest(j, p, float(np.exp(-sq / (2.0 * sigma ** 2))))
    return store


class TestObservationStore:
    def test_threshold_is_strict(self):
        store = ObservationStore(0.6)
        store.ingest(0, (0.0, 0.0), 0.7)
        store.ingest(1, (1.0, 0.0), 0.6)
        assert [o.cell_index for o in store.filtered_set] == [0]
        assert len(store) == 2

    def test_reobserving_below_threshold_removes_the_cell(self):
        store = ObservationStore(0.6)
        store.ingest(4, (0.0, 0.0), 0.7)
        store.ingest(4, (0.0, 0.0), 0.3)
        assert store.filtered_set == []
        assert store.filtered_set == store.rebuild_filtered()

    def test_negative_observation_is_rejected(self):
        with pytest.raises(ValueError):
            ObservationStore(0.6).ingest(0, (0.0, 0.0), -0.1)

    def test_merge_only_adds_unseen_cells(self):
        mine = ObservationStore(0.6)
        mine.ingest(0, (0.0, 0.0), 0.9)
        theirs = ObservationStore(0.6)
        theirs.ingest(0, (0.0, 0.0), 0.1)
        theirs.ingest(1, (1.0, 0.0), 0.8)
        added = mine.merge(theirs.all_observations.values())
        assert added == 1
        assert mine.all_observations[0].z == 0.9
        assert [o.cell_index for o in mine.filtered_set] == [0, 1]

    def test_arrays_are_sorted_by_cell(self):
        store = ObservationStore(0.6)
        store.ingest(5, (5.0, 0.0), 0.2)
        store.ingest(2, (2.0, 0.0), 0.4)
        cells, points, values = store.arrays()
        assert cells.tolist() == [2, 5]
        assert points[0].tolist() == [2.0, 0.0]
        assert values.tolist() == [0.4, 0.2]


class TestKMeans:
    def test_two_pairs(self, rng):
        result = kmeans([(0, 0), (0, 1), (10, 0), (10, 1)], 2, rng)
        centroids = sorted(map(tuple, result.centroids.tolist()))
        assert centroids == [(0.0, 0.5), (10.0, 0.5)]
        assert result.wcss == pytest.approx(1.0)

    def test_identical_points(self, rng):
        result = kmeans([(3, 3)] * 5, 1, rng)
        assert result.centroids[0].tolist() == [3.0, 3.0]
        assert result.wcss == 0.0

    def test_one_cluster_per_point(self, rng):
        points = [(0, 0), (4, 1), (7, 9)]
        result = kmeans(points, 3, rng)
        assert result.wcss == pytest.approx(0.0)
        assert sorted(map(tuple, result.centroids.tolist())) == sorted((float(x), float(y)) for x, y in points)

    def test_too_many_clusters(self, rng):
        with pytest.raises(InfeasibleClusteringError):
            kmeans([(0, 0), (1, 1)], 3, rng)
        with pytest.raises(InfeasibleClusteringError):
            kmeans([], 1, rng)

    def test_wcss_never_increases(self, rng):
        points = rng.uniform(0, 100, size=(80, 2))
        history = kmeans(points, 4, rng).wcss_history
        assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))

    def test_same_seed_same_result(self):
        points = np.random.default_rng(1).uniform(0, 50, size=(40, 2))
        a = kmeans(points, 3, np.random.default_rng(9))
        b = kmeans(points, 3, np.random.default_rng(9))
        assert np.array_equal(a.labels, b.labels)
        assert np.array_equal(a.centroids, b.centroids)


class TestFitScore:
    def test_single_sample_has_zero_correlation(self):
        store = ObservationStore(0.6)
        store.ingest(0, (0.0, 0.0), 1.0)
        breakdown = fit_score([(0.0, 0.0)], store, radius=2.0, sigma=1.0)
        comp = breakdown.per_component[0]
        assert (comp.peak_density, comp.explored_count, comp.pearson, comp.score) == (1.0, 1, 0.0, 0.0)

    def test_perfect_gaussian_samples(self):
        store = _gaussian_store((0.0, 0.0), 1.0, [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (5.0, 0.0)])
        comp = fit_score([(0.0, 0.0)], store, radius=3.0, sigma=1.0).per_component[0]
        assert comp.explored_count == 3
        assert comp.peak_density == pytest.approx(1.0)
        assert comp.pearson == pytest.approx(1.0)
        assert comp.score == pytest.approx(3.0)

    def test_aggregate_is_the_mean(self):
        store = _gaussian_store((0.0, 0.0), 1.0, [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
        breakdown = fit_score([(0.0, 0.0), (0.0, 0.0)], store, radius=3.0, sigma=1.0)
        assert breakdown.aggregate == pytest.approx(breakdown.per_component[0].score)

    def test_requires_observations(self):
        with pytest.raises(ValueError):
            fit_score([(0.0, 0.0)], ObservationStore(0.6), radius=1.0, sigma=1.0)


class TestSigmaFit:
    GRID = [2.5, 3.0, 3.5, 4.0, 4.5, 5.0]

    def test_recovers_the_generating_sigma(self):
        points = [(x, y) for x in range(-6, 7) for y in range(-6, 7)]
        store = _gaussian_store((0.0, 0.0), 3.0, points)
        fit = fit_sigma((0.0, 0.0), store, self.GRID, radius=6.0)
        assert fit.sigma == 3.0
        assert fit.mse == pytest.approx(0.0, abs=1e-20)

    def test_off_grid_sigma_picks_the_lower_mse_neighbor(self):
        points = [(x, y) for x in range(-6, 7) for y in range(-6, 7)]
        store = _gaussian_store((0.0, 0.0), 3.2, points)
        _, pts, vals = store.arrays()
        inside = np.hypot(pts[:, 0], pts[:, 1]) < 6.0
        sq = (pts[inside] ** 2).sum(axis=1)
        mse = {s: float(np.mean((vals[inside] - np.exp(-sq / (2 * s * s))) ** 2)) for s in (3.0, 3.5)}
        assert fit_sigma((0.0, 0.0), store, self.GRID, radius=6.0).sigma == min(mse, key=mse.get)

    def test_ties_go_to_the_smallest_sigma(self):
        store = ObservationStore(0.6)
        store.ingest(0, (0.0, 0.0), 1.0)
        assert fit_sigma((0.0, 0.0), store, self.GRID, radius=1.0).sigma == 2.5

    def test_no_explored_cells_falls_back_to_the_midpoint(self):
        store = ObservationStore(0.6)
        store.ingest(0, (100.0, 100.0), 1.0)
        fit = fit_sigma((0.0, 0.0), store, self.GRID, radius=1.0)
        assert fit.sigma == 3.75
        assert fit.low_confidence


class TestSelectK:
    def test_empty_filtered_set(self, rng):
        store = ObservationStore(0.6)
        store.ingest(0, (0.0, 0.0), 0.2)
        assert select_k(store, range(1, 5), rng, radius=5.0, sigma=3.0).k_hat == 0

    def test_one_tight_blob(self, rng):
        points = [(x, y) for x in range(-8, 9) for y in range(-8, 9)]
        store = _gaussian_store((0.0, 0.0), 3.0, points)
        estimate = select_k(store, range(1, 5), rng, radius=5.0, sigma=3.0)
        assert estimate.k_hat == 1
        assert estimate.components[0].center == pytest.approx((0.0, 0.0), abs=1e-9)


class TestPrediction:
    def test_peak_is_one(self):
        estimate = GmmEstimate([GmmComponent((5.0, 5.0), 3.0)])
        assert predicted_density(estimate, (5.0, 5.0)) == 1.0
        assert predicted_density(estimate, (5.0, 8.0)) == pytest.approx(np.exp(-0.5))

    def test_max_not_sum(self):
        estimate = GmmEstimate([GmmComponent((0.0, 0.0), 2.0), GmmComponent((1.0, 0.0), 2.0)])
        assert predicted_density(estimate, (0.0, 0.0)) == 1.0

    def test_empty_estimate_uses_the_prior(self):
        points = np.array([[0.0, 0.0], [3.0, 4.0]])
        assert predicted_field(GmmEstimate.empty(), points).tolist() == [0.0, 0.0]
        assert predicted_field(GmmEstimate.empty(), points, prior=1.0).tolist() == [1.0, 1.0]


def test_three_hotspots_are_recovered(three_hotspot_world):
    world = three_hotspot_world
    config = EstimatorConfig(length_scale=world.cell_size)
    observed = np.random.default_rng(7).choice(world.n_cells, 360, replace=False)
    store = ObservationStore(config.theta)
    for j in sorted(observed):
        store.ingest(j, world.centroids[j], world.cell_density(j))

    estimate = estimate_gmm(store, config, np.random.default_rng(0))

    assert estimate.k_hat == 3
    truth = np.array(THREE_HOTSPOT_CENTERS) * world.cell_size
    step = config.sigma_step * world.cell_size
    for comp in estimate.components:
        assert np.min(np.linalg.norm(truth - np.array(comp.center), axis=1)) <= 1.5 * world.cell_size
        assert abs(comp.sigma - 3.0 * world.cell_size) <= step + 1e-6


def test_fully_observed_hotspots_recover_sigma(three_hotspot_world):
    world = three_hotspot_world
    config = EstimatorConfig(length_scale=world.cell_size)
    store = ObservationStore(config.theta)
    for j in range(world.n_cells):
        store.ingest(j, world.centroids[j], world.cell_density(j))

    estimate = estimate_gmm(store, config, np.random.default_rng(0))

    assert estimate.k_hat == 3
    step = config.sigma_step * world.cell_size
    for comp in estimate.components:
        assert abs(comp.sigma - 3.0 * world.cell_size) <= step + 1e-6


class TestTargetEstimator:
    def test_refits_only_after_new_observations(self):
        est = TargetEstimator(EstimatorConfig(), np.random.default_rng(0))
        assert est.estimate.k_hat == 0
        for j, p in enumerate([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]):
            est.ingest(j, p, 0.9)
        first = est.estimate
        assert first.k_hat >= 1
        assert est.estimate is first

    def test_disabled_estimator_ignores_observations(self):
        est = TargetEstimator(EstimatorConfig(prior_density=1.0), np.random.default_rng(0), enabled=False)
        est.ingest(0, (0.0, 0.0), 0.9)
        assert len(est.store) == 0
        assert est.density(np.array([[0.0, 0.0]])).tolist() == [1.0]

    def test_share_and_merge(self):
        a = TargetEstimator(EstimatorConfig(), np.random.default_rng(0))
        b = TargetEstimator(EstimatorConfig(), np.random.default_rng(1))
        a.ingest(3, (30.0, 0.0), 0.8)
        assert b.merge(a.share()) == 1
        assert 3 in b.store.all_observations


class TestSlicedWasserstein:
    def test_identical_fields(self, rng):
        points = rng.uniform(0, 10, size=(20, 2))
        field = rng.uniform(0, 1, size=20)
        assert sliced_wasserstein(field, field, points, 50, rng) == pytest.approx(0.0, abs=1e-12)

    def test_point_masses(self, rng):
        points = np.array([[0.0, 0.0], [3.0, 4.0]])
        value = sliced_wasserstein([1.0, 0.0], [0.0, 1.0], points, 1000, rng)
        assert value == pytest.approx(5.0 * 2.0 / np.pi, rel=0.05)

    def test_symmetric_under_the_same_projections(self):
        gen = np.random.default_rng(4)
        points = gen.uniform(0, 10, size=(30, 2))
        a, b = gen.uniform(0, 1, size=30), gen.uniform(0, 1, size=30)
        ab = sliced_wasserstein(a, b, points, 40, np.random.default_rng(11))
        ba = sliced_wasserstein(b, a, points, 40, np.random.default_rng(11))
        assert ab == pytest.approx(ba)

    def test_zero_mass_is_undefined(self, rng):
        points = np.array([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(UndefinedDistanceError):
            sliced_wasserstein([0.0, 0.0], [1.0, 0.0], points, 10, rng)
