"""Tests for the kd-tree against a linear-scan oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multipose.core.exceptions import EmptyCloudError, GeometryError
from multipose.core.geometry import PointCloud, point_distances
from multipose.spatial.kdtree import KdTree, build, nearest, radius_search


def scan_nearest(points: np.ndarray, query: np.ndarray) -> tuple[int, float]:
    """Closest point by linear scan, lowest index on ties."""
    d = point_distances(points, query)
    best = d.min()
    index = int(np.flatnonzero(d == best)[0])
    return index, float(best)


def scan_radius(points: np.ndarray, query: np.ndarray, r: float) -> list[tuple[int, float]]:
    d = point_distances(points, query)
    hits = [(int(i), float(d[i])) for i in np.flatnonzero(d <= r)]
    return sorted(hits, key=lambda h: (h[1], h[0]))


def test_single_point_tree():
    """Test a tree holding one point."""
    tree = KdTree(np.array([[1.0, 2.0, 3.0]]))
    assert tree.nearest((0.0, 0.0, 0.0)) == (0, pytest.approx(np.sqrt(14.0)))
    assert tree.radius_search((1.0, 2.0, 3.0), 0.1) == [(0, 0.0)]


def test_empty_tree_raises():
    """Test that an empty cloud cannot be indexed."""
    with pytest.raises(EmptyCloudError):
        build(PointCloud.empty())


def test_radius_must_be_positive():
    """Test that a non-positive radius is rejected."""
    tree = KdTree(np.zeros((3, 3)))
    with pytest.raises(GeometryError):
        tree.radius_search((0.0, 0.0, 0.0), 0.0)


def test_duplicate_points_tie_break_by_index():
    """Test that coincident points resolve to the lowest index."""
    points = np.array([[1.0, 0.0, 0.0]] * 6 + [[5.0, 5.0, 5.0]])
    tree = KdTree(points)
    index, distance = nearest(tree, (1.0, 0.0, 0.0))
    assert index == 0 and distance == 0.0
    assert [i for i, _ in radius_search(tree, (1.0, 0.0, 0.0), 0.5)] == [0, 1, 2, 3, 4, 5]


def test_equidistant_points_tie_break_by_index():
    """Test exact distance ties between distinct points."""
    points = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, -1.0, 0.0]])
    tree = KdTree(points)
    assert tree.nearest((0.0, 0.0, 0.0))[0] == 0


def test_radius_is_inclusive():
    """Test that a point exactly on the radius is returned."""
    tree = KdTree(np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    assert [i for i, _ in tree.radius_search((0.0, 0.0, 0.0), 0.5)] == [0, 1]


def test_every_index_held_once():
    """Test that the tree holds each source index exactly once."""
    points = np.random.default_rng(1).uniform(size=(257, 3))
    assert np.array_equal(KdTree(points).indices(), np.arange(257))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.01, max_value=0.5))
def test_queries_match_linear_scan(seed, r):
    """Test nearest and radius results against a brute-force scan."""
    rng = np.random.default_rng(seed)
    # a coarse grid produces many exact ties
    points = np.round(rng.uniform(-1.0, 1.0, size=(300, 3)), 1)
    queries = np.round(rng.uniform(-1.2, 1.2, size=(40, 3)), 1)
    tree = KdTree(points)
    idx, dist = tree.nearest_many(queries)
    balls = tree.radius_many(queries, r)
    for q, i, d, (b_idx, b_dist) in zip(queries, idx, dist, balls):
        assert (int(i), float(d)) == scan_nearest(points, q)
        expected = scan_radius(points, q, r)
        assert list(zip(b_idx.tolist(), b_dist.tolist())) == expected
        assert tree.radius_search(q, r) == expected


def test_batch_equals_single_queries():
    """Test that batch forms agree with single-query forms."""
    rng = np.random.default_rng(7)
    tree = KdTree(rng.normal(size=(500, 3)))
    queries = rng.normal(size=(25, 3))
    idx, dist = tree.nearest_many(queries)
    for q, i, d in zip(queries, idx, dist):
        assert tree.nearest(q) == (int(i), float(d))


@pytest.mark.slow
def test_ten_thousand_queries_match_linear_scan():
    """Test 10^4 mixed queries over a 10^3-point cloud."""
    rng = np.random.default_rng(2024)
    points = rng.uniform(-1.0, 1.0, size=(1000, 3))
    tree = KdTree(points)
    queries = rng.uniform(-1.0, 1.0, size=(5000, 3))
    idx, dist = tree.nearest_many(queries)
    for q, i, d in zip(queries, idx, dist):
        assert (int(i), float(d)) == scan_nearest(points, q)
    for q, (b_idx, b_dist) in zip(queries, tree.radius_many(queries, 0.1)):
        assert list(zip(b_idx.tolist(), b_dist.tolist())) == scan_radius(points, q, 0.1)


def test_radius_table_rows_match_single_queries():
    """Test the flat neighbourhood table row by row, including queries with no hits."""
    rng = np.random.default_rng(11)
    points = np.round(rng.uniform(-1.0, 1.0, size=(400, 3)), 1)
    queries = np.vstack([np.round(rng.uniform(-1.0, 1.0, size=(30, 3)), 1), [[5.0, 5.0, 5.0]]])
    tree = KdTree(points)
    offsets, idx, dist = tree.radius_table(queries, 0.25)
    assert offsets[0] == 0 and offsets[-1] == len(idx) == len(dist)
    assert len(offsets) == len(queries) + 1
    for row, q in enumerate(queries):
        a, b = offsets[row], offsets[row + 1]
        assert list(zip(idx[a:b].tolist(), dist[a:b].tolist())) == tree.radius_search(q, 0.25)
    assert offsets[-2] == offsets[-1]


def test_radius_table_without_queries():
    """Test that no queries give a single zero offset."""
    offsets, idx, dist = KdTree(np.eye(3)).radius_table(np.zeros((0, 3)), 0.1)
    assert offsets.tolist() == [0]
    assert idx.size == dist.size == 0
