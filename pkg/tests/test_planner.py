import numpy as np
import pytest

from app.errors import NonPositiveSpeedError, PathTooLargeError
from app.planner import (CoveragePath, boustrophedon_order, brute_force_path, nearest_neighbor_path,
                         path_travel_time, polyline_length)


def test_nearest_neighbor_example():
    table = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 5.0]])
    path = nearest_neighbor_path((0.0, 0.0), [2, 0, 1], table)
    assert path.cells == [0, 1, 2]
    assert path.total_length == pytest.approx(2.0 + np.sqrt(29.0))


def test_distance_ties_go_to_the_lower_index():
    table = np.array([[-1.0, 0.0], [1.0, 0.0]])
    assert nearest_neighbor_path((0.0, 0.0), [1, 0], table).cells == [0, 1]


def test_empty_cell_set():
    path = nearest_neighbor_path((3.0, 4.0), [], np.zeros((0, 2)))
    assert path.cells == [] and path.total_length == 0.0
    assert len(path) == 0


def test_length_matches_the_waypoints():
    table = np.random.default_rng(3).uniform(0, 50, size=(12, 2))
    path = nearest_neighbor_path((10.0, 10.0), range(12), table)
    assert path.total_length == pytest.approx(polyline_length(path.waypoints(table)))
    assert sorted(path.cells) == list(range(12))


def test_brute_force_on_a_triangle():
    table = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    path = brute_force_path((0.0, 0.0), [0, 1, 2], table)
    assert path.total_length == pytest.approx(3.0)
    assert path.cells in ([0, 1, 2], [2, 1, 0])


def test_brute_force_never_loses_to_nearest_neighbor():
    gen = np.random.default_rng(8)
    for _ in range(25):
        table = gen.uniform(0, 10, size=(7, 2))
        start = tuple(gen.uniform(0, 10, size=2))
        exact = brute_force_path(start, range(7), table)
        greedy = nearest_neighbor_path(start, range(7), table)
        assert exact.total_length <= greedy.total_length + 1e-9


def test_brute_force_limit():
    with pytest.raises(PathTooLargeError):
        brute_force_path((0.0, 0.0), range(11), np.zeros((11, 2)))


def test_travel_time():
    assert path_travel_time(CoveragePath([0], (0.0, 0.0), 12.0), 3.0) == 4.0
    with pytest.raises(NonPositiveSpeedError):
        path_travel_time(CoveragePath([0], (0.0, 0.0), 12.0), 0.0)


def test_boustrophedon_zigzags_by_row():
    assert boustrophedon_order([0, 1], [0, 1, 2], 4) == [0, 1, 5, 4, 8, 9]
