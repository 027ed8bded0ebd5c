import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull, Delaunay

from rfsisso.hull import (
    convex_hull,
    hull_distance,
    hull_overlap_count,
    intersection_area,
    interval_gap,
    interval_margin,
    interval_overlap_count,
    pair_overlaps,
    separation_margin,
)

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], dtype=float)


def test_square_hull():
    h = convex_hull(SQUARE)
    assert len(h.vertices) == 4
    assert h.area == pytest.approx(1.0)


def test_boundary_points_count_as_inside():
    h = convex_hull(SQUARE)
    assert h.contains([[1.0, 0.5], [0.0, 0.0], [0.5, 0.5]]).all()
    assert not h.contains([[1.0 + 1e-6, 0.5]]).any()


def test_degenerate_hulls():
    pt = convex_hull([[1.0, 1.0], [1.0, 1.0]])
    assert len(pt.vertices) == 1 and pt.contains([[1.0, 1.0]]).all()
    seg = convex_hull([[0, 0], [1, 1], [2, 2]])
    assert len(seg.vertices) == 2
    assert seg.contains([[0.5, 0.5]]).all() and not seg.contains([[0.5, 0.6]]).any()
    with pytest.raises(ValueError):
        convex_hull(np.zeros((0, 2)))


def test_overlap_counts():
    a = np.array([[0, 0], [2, 0], [0, 2], [2, 2]], dtype=float)
    b = np.array([[1, 1], [3, 1], [1, 3], [3, 3]], dtype=float)
    # (2,2) lies in hull(b), (1,1) lies in hull(a)
    assert hull_overlap_count(a, b) == 2
    assert hull_overlap_count(a, b + 5) == 0


def test_intervals():
    assert interval_overlap_count([0, 1, 2], [2, 3]) == 2
    assert interval_gap([0, 1], [3, 4]) == 2.0
    assert interval_margin([0, 1], [3, 4]) == 2.0
    assert interval_margin([0, 2], [1, 4]) == -1.0


def test_distance_and_margin():
    a = convex_hull([[0, 0], [1, 0], [0, 1]])
    b = convex_hull([[3, 0], [4, 0], [3, 1]])
    assert hull_distance(a, b) == pytest.approx(2.0)
    assert separation_margin([[0, 0], [2, 0], [0, 2], [2, 2]], [[1, 1], [3, 1], [1, 3], [3, 3]]) == pytest.approx(-1.0)
    assert intersection_area(a, convex_hull([[0, 0], [1, 0], [0, 1]])) == pytest.approx(0.5)


def test_pair_overlaps_matches_pointwise():
    rng = np.random.default_rng(3)
    Z = rng.normal(size=(30, 4))
    pos = rng.random(30) < 0.5
    pairs = np.array([[0, 1], [1, 2], [2, 3], [0, 3]], dtype=np.int64)
    got = pair_overlaps(Z, pos, pairs)
    for k, (i, j) in enumerate(pairs):
        assert got[k] == hull_overlap_count(Z[~pos][:, [i, j]], Z[pos][:, [i, j]])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(3, 30))
def test_hull_against_qhull(seed, n):
    P = np.random.default_rng(seed).normal(size=(n, 2))
    ref = ConvexHull(P)
    ours = convex_hull(P)
    assert ours.area == pytest.approx(ref.volume, rel=1e-9)
    assert sorted(map(tuple, ours.vertices)) == sorted(map(tuple, P[ref.vertices]))
    Q = np.random.default_rng(seed + 1).normal(size=(50, 2)) * 1.5
    inside = Delaunay(P[ref.vertices]).find_simplex(Q) >= 0
    # the tolerance only matters for points essentially on an edge
    assert (ours.contains(Q) == inside).mean() >= 0.98


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_overlap_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(8, 2)), rng.normal(0.5, 1, size=(9, 2))
    k = hull_overlap_count(a, b)
    assert k == hull_overlap_count(b, a)
    assert 0 <= k <= 17
