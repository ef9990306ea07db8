import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from divfree.approx import (StageError, approximate_divfree, compress_jet, compression_map, glue_approximations,
                            hedberg_truncate, image_cover, perp_gradient, plateau_step, smooth_cutoff,
                            two_disk_fixture)
from divfree.fields import Grid, ScalarField, VectorField2
from divfree.geometry import Disk, distance_field, make_compact_set
from divfree.jets import Jet, restrict
from divfree.scenarios import cubic_point_fixture


@st.composite
def interval_lists(draw):
    start = draw(st.floats(-3, 3))
    n = draw(st.integers(1, 5))
    out, t = [], start
    for _ in range(n):
        t += draw(st.floats(1e-3, 1.0))
        length = draw(st.floats(1e-3, 0.5))
        out.append((t, t + length))
        t += length
    return out


@given(interval_lists(), st.lists(st.floats(-5, 5), min_size=2, max_size=20))
def test_compression_map_is_monotone_contraction(iv, ts):
    eta = compression_map(iv)
    t = np.sort(np.array(ts))
    v = eta(t)
    assert eta(0.0) == 0.0
    assert np.all(np.diff(v) >= -1e-12)
    assert np.all(np.diff(v) <= np.diff(t) + 1e-12)
    assert np.all(np.abs(v) <= eta.total_length + 1e-12)


@given(interval_lists())
def test_compression_map_is_a_translation_on_each_interval(iv):
    eta = compression_map(iv)
    for (l, r), off in zip(eta.intervals, eta.offsets):
        t = np.linspace(l, r, 5)
        assert np.allclose(t - eta(t), off, atol=1e-12)


def test_compression_map_rejects_touching_intervals():
    with pytest.raises(ValueError, match="overlap or touch"):
        compression_map([(0.0, 1.0), (1.0, 2.0)])


@pytest.fixture(scope="module")
def two_disks():
    return two_disk_fixture(128)


@pytest.mark.parametrize("eps", [0.5, 0.1, 0.01])
def test_image_cover_budget(two_disks, eps):
    grid, K, psi, u = two_disks
    iv = image_cover(psi, K, eps)
    vals = psi.values[K.mask]
    assert sum(r - l for l, r in iv) < eps
    assert all(r0 < l1 for (_, r0), (l1, _) in zip(iv, iv[1:]))
    assert all(any(l < v < r for l, r in iv) for v in np.unique(vals))


@given(st.floats(1e-3, 0.5))
def test_compressed_jet_is_small(two_disks, eps):
    grid, K, psi, u = two_disks
    jet = restrict(psi, K, 0)
    je = compress_jet(jet, compression_map(image_cover(psi, K, eps)))
    assert np.max(np.abs(je.values)) <= eps


def test_compress_jet_requires_zero_higher():
    j = Jet(1, np.zeros((1, 2)), np.array([[0.0, 1.0, 0.0]]))
    with pytest.raises(ValueError):
        compress_jet(j, compression_map([(-0.1, 0.1)]))


def test_plateau_step_values():
    d = np.array([0.0, 0.1, 0.15, 0.3, 1.0])
    s = plateau_step(d, 0.1, 0.1)
    assert s[0] == 0.0 and s[1] == 0.0 and s[-1] == 1.0 and s[-2] == 1.0
    assert 0 < s[2] < 1


def test_smooth_cutoff_plateaus(two_disks):
    grid, K, psi, u = two_disks
    eps = 0.2
    rho = smooth_cutoff(K, eps)
    d = distance_field(K).values
    assert np.all(rho.values[d < 0.4 * eps] == 1.0)
    assert np.all(rho.values[d >= 0.6 * eps] == 0.0)
    assert rho.values.min() >= 0.0 and rho.values.max() <= 1.0
    with pytest.raises(ValueError, match="8h"):
        smooth_cutoff(K, 4 * grid.h)


def test_hedberg_truncation_vanishes_near_set():
    grid = Grid.square(-0.5, 0.5, 256)
    K, F = cubic_point_fixture(grid)
    T = hedberg_truncate(F, K, 0.1, 2)
    d = distance_field(K).values
    assert np.all(T.values[d < 0.04] == 0.0)
    assert np.array_equal(T.values[d >= 0.06], F.values[d >= 0.06])
    rep = T.info["report"]
    assert set(rep["i"]) == set(rep["iii"]) and rep["omega"] > 0


def test_hedberg_rejects_nonvanishing_function():
    grid = Grid.square(-0.5, 0.5, 128)
    K, _ = cubic_point_fixture(grid)
    F = ScalarField.from_function(grid, lambda x, y: 1.0 + x)
    with pytest.raises(ValueError, match="does not vanish"):
        hedberg_truncate(F, K, 0.1, 2)


def test_pipeline_on_small_grid(two_disks):
    grid, K, psi, u = two_disks
    rep = approximate_divfree(u, K, [0.5, 0.25], [0.25, 0.125], keep_diagonal=True)
    assert len(rep.errors) == 4
    assert all(e["max_div"] <= 1e-12 for e in rep.errors)
    assert all(e["support_gap"] >= e["cutoff"] / 4 - grid.h for e in rep.errors)
    assert set(rep.fields) == {0, 1}
    assert rep.matrix("err_C1").shape == (2, 2)


def test_pipeline_stage_failure_names_stage():
    grid = Grid.square(-1.0, 1.0, 64)
    K = make_compact_set([Disk((0.0, 0.0), 0.3)], grid)
    psi = ScalarField.from_function(grid, lambda x, y: x)
    with pytest.raises(StageError) as info:
        approximate_divfree(perp_gradient(psi), K, [0.5], [0.5])
    assert info.value.stage == "S2-jet"


def test_glue_rejects_cutoff_not_one_near_first_set():
    grid = Grid.square(-1.0, 1.0, 64)
    K1 = make_compact_set([Disk((-0.5, 0.0), 0.2)], grid)
    K2 = make_compact_set([Disk((0.5, 0.0), 0.2)], grid)
    z = VectorField2.zeros(grid)
    with pytest.raises(ValueError, match="equal 1"):
        glue_approximations(z, z, K1, K2, ScalarField(grid, np.zeros(grid.dims)))
