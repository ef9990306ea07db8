import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from divfree.approx import perp_gradient, stream_potential
from divfree.fields import Grid, ScalarField, VectorField2
from divfree.norms import (cm_norm, divergence, fd_derivative, grad_lp, holder_seminorm, holder_seminorm_grid,
                           lattice_offsets, lp_norm, mfact, multi_indices, wmp_norm)


def test_square_grid_spacing_and_extent():
    g = Grid.square(-1.0, 1.0, 256)
    assert g.h == 2.0 / 256
    assert g.dims == (256, 256)
    xmin, xmax, ymin, ymax = g.extent
    assert xmin == -1.0 and xmax == pytest.approx(1.0 - g.h)


def test_points_follow_index_convention():
    g = Grid.square(0.0, 1.0, 8)
    mask = np.zeros(g.dims, dtype=bool)
    mask[3, 5] = True
    assert np.allclose(g.points(mask), [[3 * g.h, 5 * g.h]])
    i, j = g.nearest_index([[3 * g.h + 0.4 * g.h, 5 * g.h]])
    assert (i[0], j[0]) == (3, 5)


def test_field_shape_is_checked():
    g = Grid.square(0.0, 1.0, 8)
    with pytest.raises(ValueError, match="does not match"):
        ScalarField(g, np.zeros((8, 7)))


def test_multi_index_order():
    assert multi_indices(2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert multi_indices(2, exact=True) == [(2, 0), (1, 1), (0, 2)]
    assert mfact((2, 3)) == 12


def test_central_differences_exact_on_quadratics():
    g = Grid.square(-1.0, 1.0, 64)
    F = ScalarField.from_function(g, lambda x, y: 3 * x**2 - 2 * x * y + 0.5 * y**2 + x - 4)
    X, Y = g.mesh()
    expect = {(1, 0): 6 * X - 2 * Y + 1, (0, 1): -2 * X + Y, (2, 0): 6.0, (1, 1): -2.0, (0, 2): 1.0}
    for j, e in expect.items():
        d = fd_derivative(F.values, g.h, j)
        ok = np.isfinite(d)
        assert np.allclose(d[ok], np.broadcast_to(e, g.dims)[ok], atol=1e-9)
    # stencils that leave the grid are NaN
    assert np.isnan(fd_derivative(F.values, g.h, (2, 0))[0, 5])


def test_derivative_error_is_second_order():
    errs = []
    for n in (64, 128):
        g = Grid.square(-1.0, 1.0, n)
        F = ScalarField.from_function(g, lambda x, y: np.sin(2 * x) * np.cos(y))
        X, Y = g.mesh()
        d = fd_derivative(F.values, g.h, (1, 0))
        ok = np.isfinite(d)
        errs.append(np.max(np.abs(d - 2 * np.cos(2 * X) * np.cos(Y))[ok]))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_norms_of_simple_fields():
    g = Grid.square(-1.0, 1.0, 128)
    one = ScalarField(g, np.ones(g.dims))
    assert lp_norm(one, 2.0) == pytest.approx(2.0)  # area 4
    lin = ScalarField.from_function(g, lambda x, y: 2 * x - y)
    assert grad_lp(lin, 2, 3.0) == pytest.approx(0.0, abs=1e-8)
    assert 3.0 - 6 * g.h <= cm_norm(lin, 1) <= 3.0  # sup over nodes where the stencil fits
    assert wmp_norm(one, 1, 2.0) > 0


def test_offset_holder_is_lower_bound_of_pair_sweep(rng):
    g = Grid.square(0.0, 1.0, 12)
    f = ScalarField(g, rng.normal(size=g.dims))
    lo = holder_seminorm_grid(f, 0.5)
    full = holder_seminorm(f, 0.5)
    assert lo.mode == "offsets"
    assert lo <= full * (1 + 1e-12)
    # the offset set contains every near pair, where the sup of white noise sits
    assert lo >= 0.5 * full


def test_lattice_offsets_are_half_plane():
    offs = lattice_offsets(16)
    assert (1, 0) in offs and (0, 1) in offs and (1, -1) in offs
    assert all(i > 0 or (i == 0 and j > 0) for i, j in offs)


@given(arrays(np.float64, (9, 7), elements=st.floats(-10, 10)))
def test_perp_gradient_is_exactly_divergence_free(v):
    g = Grid((0.0, 0.0), 0.125, (9, 7))
    u = perp_gradient(ScalarField(g, v))
    assert np.max(np.abs(divergence(u).values)) == 0.0


@given(arrays(np.float64, (8, 8), elements=st.floats(-1, 1)))
def test_stream_potential_inverts_perp_gradient(v):
    g = Grid((0.0, 0.0), 0.25, (8, 8))
    u = perp_gradient(ScalarField(g, v))
    psi = stream_potential(u, corner=(0, 0))
    w = perp_gradient(psi)
    assert np.allclose(w.u1, u.u1, atol=1e-9) and np.allclose(w.u2, u.u2, atol=1e-9)


def test_stream_potential_rejects_divergent_field():
    g = Grid((0.0, 0.0), 0.25, (6, 6))
    u = VectorField2(g, np.ones((6, 5)), np.zeros((5, 6)))
    u.u1[2, 2] = 3.0
    with pytest.raises(ValueError, match="not divergence-free"):
        stream_potential(u)
