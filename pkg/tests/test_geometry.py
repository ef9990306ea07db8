import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divfree.fields import Grid, ScalarField
from divfree.geometry import (Disk, Point, Polyline, distance_field, koch_angle, koch_curve, make_compact_set,
                              neighborhood, separated_preimage_cover)

# frozen from the closed form cos(alpha) = 1 / (2a) - 1 evaluated independently
KOCH_ALPHA_035 = math.acos(1 / 0.7 - 1)  # 1.1278852827212578
KOCH_THETA_035 = math.log(1 / 0.35) / math.log(4)  # 0.7572821...


def test_koch_angle_frozen():
    assert math.cos(koch_angle(0.35)) == pytest.approx(3 / 7, abs=1e-11)
    assert koch_angle(0.35) == pytest.approx(KOCH_ALPHA_035, abs=1e-11)
    assert koch_angle(0.25) == 0.0


@pytest.mark.parametrize("a", [0.2, 0.5, 0.6])
def test_koch_angle_range(a):
    with pytest.raises(ValueError):
        koch_angle(a)


def test_koch_curve_geometry():
    k = koch_curve(0.35, 4)
    v = k.vertices
    assert len(v) == 4**4 + 1
    assert np.allclose(v[0], [0, 0]) and np.allclose(v[-1], [1, 0], atol=1e-12)
    seg = np.hypot(*np.diff(v, axis=0).T)
    assert np.allclose(seg, 0.35**4)
    assert k.theta == pytest.approx(KOCH_THETA_035, rel=1e-12)
    assert k.gamma == pytest.approx(0.32050, abs=1e-4)


def test_koch_parametrization_holder_band():
    band = koch_curve(0.35, 5).holder_band(n_pairs=4000)
    assert 0 < band["min_ratio"] <= band["max_ratio"] < 10


def test_disk_rasterization_and_distance():
    g = Grid.square(-1.0, 1.0, 128)
    d = Disk((0.1, -0.2), 0.3)
    K = make_compact_set([d], g)
    pts = g.points(K.mask)
    assert np.all(np.hypot(pts[:, 0] - 0.1, pts[:, 1] + 0.2) <= 0.3)
    D = distance_field(K).values
    X, Y = g.mesh()
    exact = np.maximum(np.hypot(X - 0.1, Y + 0.2) - 0.3, 0.0)
    assert np.max(np.abs(D - exact)) <= g.h


def test_point_claims_nearest_node():
    g = Grid.square(0.0, 1.0, 16)
    K = make_compact_set([Point((0.26, 0.5))], g)
    assert K.mask.sum() == 1
    assert np.allclose(g.points(K.mask), [[0.25, 0.5]])


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_polyline_projection_matches_segment_distance(x, y):
    line = Polyline(np.array([[0.0, 0.0], [1.0, 0.0]]))
    dist, par = line.project([[x, y]])
    t = min(max(x, 0.0), 1.0)
    assert dist[0] == pytest.approx(math.hypot(x - t, y), abs=1e-12)
    assert par[0] == pytest.approx(t, abs=1e-12)


def test_polyline_needs_two_vertices():
    with pytest.raises(ValueError):
        Polyline(np.array([[0.0, 0.0]]))


def test_neighborhood_contains_set():
    g = Grid.square(-1.0, 1.0, 64)
    K = make_compact_set([Disk((0.0, 0.0), 0.2)], g)
    N = neighborhood(K, 0.1)
    assert np.all(N.mask[K.mask])
    assert N.mask.sum() > K.mask.sum()


def test_preimage_cover_is_separated():
    g = Grid.square(-1.0, 1.0, 128)
    K = make_compact_set([Disk((-0.5, 0.0), 0.2), Disk((0.5, 0.0), 0.2)], g)
    psi = ScalarField.from_function(g, lambda x, y: np.tanh(4 * x))
    v = psi.values[K.mask]
    lo_l, lo_r = v[v < 0].min(), v[v < 0].max()
    hi_l, hi_r = v[v > 0].min(), v[v > 0].max()
    U = separated_preimage_cover(psi, K, [(lo_l - 1e-3, lo_r + 1e-3), (hi_l - 1e-3, hi_r + 1e-3)])
    assert len(U) == 2
    a, b = U[0].mask, U[1].mask
    assert not np.any(a & b)
    assert np.all((a | b)[K.mask])


def test_preimage_cover_rejects_overlapping_intervals():
    g = Grid.square(-1.0, 1.0, 32)
    K = make_compact_set([Disk((0.0, 0.0), 0.2)], g)
    psi = ScalarField(g, np.zeros(g.dims))
    with pytest.raises(ValueError, match="disjoint closures"):
        separated_preimage_cover(psi, K, [(-1, 0), (0, 1)])
