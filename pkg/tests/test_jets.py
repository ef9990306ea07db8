import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divfree.fields import Grid, ScalarField
from divfree.geometry import Disk, Point, make_compact_set
from divfree.jets import (Jet, extension_derivatives, jet_norm, remainder, restrict, shvartsman_maximal,
                          taylor_poly, whitney_extend, whitney_extend_sobolev)
from divfree.whitney import partition_of_unity, whitney_decompose

QUAD = (0.7, -1.2, 0.4, 2.0, -0.6, 1.5)  # coefficients of 1, x, y, x^2, xy, y^2


def quad(x, y):
    c = QUAD
    return c[0] + c[1] * x + c[2] * y + c[3] * x**2 + c[4] * x * y + c[5] * y**2


def quad_jet(points):
    x, y = np.asarray(points, dtype=float).T
    c = QUAD
    vals = np.column_stack([quad(x, y), c[1] + 2 * c[3] * x + c[4] * y, c[2] + c[4] * x + 2 * c[5] * y,
                            np.full_like(x, 2 * c[3]), np.full_like(x, c[4]), np.full_like(x, 2 * c[5])])
    return Jet(2, points, vals)


def test_jet_shape_and_columns():
    j = quad_jet(np.zeros((3, 2)))
    assert j.column((1, 1)) == 4
    assert np.allclose(j.component((2, 0)), 2 * QUAD[3])
    with pytest.raises(ValueError, match="not part of"):
        j.column((3, 0))
    with pytest.raises(ValueError, match="shape"):
        Jet(1, np.zeros((2, 2)), np.zeros((2, 2)))


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_taylor_polynomial_of_quadratic_is_exact(x, y):
    j = quad_jet(np.array([[0.3, -0.4], [-0.5, 0.1]]))
    for k in range(2):
        assert taylor_poly(j, k, 2, [[x, y]]) == pytest.approx(quad(x, y), abs=1e-12)


def test_remainders_of_polynomial_jet_vanish(rng):
    j = quad_jet(rng.uniform(-1, 1, size=(20, 2)))
    for jj in [(0, 0), (1, 0), (0, 2)]:
        assert remainder(j, jj, 3, 11) == pytest.approx(0.0, abs=1e-12)
    rep = jet_norm(j, 2)
    assert rep.remainder_ratio == pytest.approx(0.0, abs=1e-10)
    assert rep.jet_norm == pytest.approx(np.max(np.abs(j.values)))


def test_two_level_jet_norm_frozen():
    # values 0 and 1 at distance L: the order-0 remainder ratio is 1 / L^2
    L = 0.25
    j = Jet.constant_values(np.array([[0.0, 0.0], [L, 0.0]]), [0.0, 1.0], 2)
    assert jet_norm(j, 2).jet_norm == pytest.approx(1 / L**2)
    assert jet_norm(j, 2, gamma=0.5).jet_norm == pytest.approx(1 / L**2.5)


def test_restrict_is_exact_on_quadratics():
    g = Grid.square(-1.0, 1.0, 64)
    K = make_compact_set([Disk((0.1, 0.2), 0.3)], g)
    F = ScalarField.from_function(g, quad)
    j = restrict(F, K, 2)
    assert np.allclose(j.values, quad_jet(j.points).values, atol=1e-9)


def test_restrict_rejects_stencil_off_grid():
    g = Grid.square(-1.0, 1.0, 32)
    K = make_compact_set([Point((0.0, 0.0))], g)
    edge = np.zeros(g.dims, dtype=bool)
    edge[0, 16] = True
    with pytest.raises(ValueError, match="leaves the grid"):
        restrict(ScalarField(g, np.zeros(g.dims)), K, 2, samples=edge)


@pytest.fixture(scope="module")
def disk_setup():
    g = Grid.square(-1.0, 1.0, 96)
    K = make_compact_set([Disk((-0.3, 0.0), 0.2), Disk((0.4, 0.3), 0.15)], g)
    dec = whitney_decompose(K)
    return g, K, dec, partition_of_unity(dec)


def test_extension_reproduces_jet_on_samples(disk_setup):
    g, K, dec, pou = disk_setup
    j = quad_jet(g.points(K.mask))
    E = whitney_extend(j, dec, 2, g, pou)
    assert np.array_equal(E.values[K.mask], j.values[:, 0])


def test_extension_of_quadratic_is_the_quadratic(disk_setup):
    # every Taylor polynomial is the quadratic itself and the partition sums to 1
    g, K, dec, pou = disk_setup
    j = quad_jet(g.points(K.mask))
    E = whitney_extend(j, dec, 2, g, pou)
    X, Y = g.mesh()
    assert np.max(np.abs(E.values - quad(X, Y))) <= 1e-9
    ders = extension_derivatives(j, dec, 2, 2, pou)
    assert np.max(np.abs(ders[(1, 1)].values - QUAD[4])) <= 1e-8
    assert np.max(np.abs(ders[(1, 0)].values - (QUAD[1] + 2 * QUAD[3] * X + QUAD[4] * Y))) <= 1e-8


def test_extension_rejects_foreign_grid(disk_setup):
    g, K, dec, pou = disk_setup
    j = quad_jet(g.points(K.mask))
    with pytest.raises(ValueError, match="mismatch"):
        whitney_extend(j, dec, 2, Grid.square(-1.0, 1.0, 48), pou)


def test_maximal_function_vanishes_on_polynomial_jets(rng):
    # M^(3) compares order-2 Taylor polynomials, which all equal the quadratic
    j = quad_jet(rng.uniform(-1, 1, size=(30, 2)))
    M = np.asarray(shvartsman_maximal(j, 3, rng.uniform(-1, 1, size=(10, 2))))
    assert np.max(np.abs(M)) <= 1e-9


def test_maximal_function_positive_for_two_levels():
    j = Jet.constant_values(np.array([[0.0, 0.0], [0.5, 0.0]]), [0.0, 1.0], 2)
    M = np.asarray(shvartsman_maximal(j, 2, np.array([[0.25, 0.0], [3.0, 3.0]])))
    assert M[0] > M[1] > 0


def test_sobolev_extension_requires_zero_higher_jet(disk_setup):
    g, K, dec, pou = disk_setup
    with pytest.raises(ValueError, match="f\\^\\(j\\) = 0"):
        whitney_extend_sobolev(quad_jet(g.points(K.mask)), dec, 2, g, 4.0, pou)
    j = Jet.constant_values(g.points(K.mask), np.where(g.points(K.mask)[:, 0] < 0, 0.0, 1.0), 2)
    F = whitney_extend_sobolev(j, dec, 2, g, 4.0, pou)
    assert F.info["grad_m_lp"] > 0 and F.info["p"] == 4.0


def test_jet_csv_round_trip(tmp_path, rng):
    j = quad_jet(rng.uniform(-1, 1, size=(5, 2)))
    j.to_csv(tmp_path / "jet.csv")
    back = Jet.from_csv(tmp_path / "jet.csv")
    assert back.order == 2
    assert np.array_equal(back.values, j.values) and np.array_equal(back.points, j.points)
