import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from divfree.approx import compression_map
from divfree.besov import (BesovSequence, RegularMeasure, _split_beta, besov_compress, besov_conditions,
                           canonical_sequence, geometric_sequence, level_constants, regularity_band,
                           sample_measure, zero_derivative_reduce)
from divfree.fields import Grid
from divfree.geometry import Disk, Point, Polyline, make_compact_set
from divfree.jets import Jet

GRID = Grid.square(-1.0, 1.0, 128)


@pytest.fixture(scope="module")
def segments():
    K = make_compact_set([Polyline(np.array([[-0.6, -0.3], [-0.6, 0.4]])),
                          Polyline(np.array([[0.0, -0.3], [0.3, 0.5]]))], GRID)
    mu = sample_measure(K, 1.0, 400)
    values = np.where(mu.points[:, 0] < -0.3, 0.0, 1.0)
    return mu, values


def test_segment_measure_is_length_regular():
    K = make_compact_set([Polyline(np.array([[-0.5, -0.2], [0.5, -0.2]]))], GRID)
    mu = sample_measure(K, 1.0, 1000)
    assert mu.total == pytest.approx(1.0)
    x = mu.points[500]
    for r in (0.05, 0.1, 0.3):
        # an interior ball meets a chord of length 2r
        assert mu.ball_mass(r, [x])[0] / r == pytest.approx(2.0, abs=2e-3 / r)
    c, C = mu.reg_constants
    assert 0.9 <= c <= C <= 2.1


def test_point_measure_is_a_unit_atom():
    K = make_compact_set([Point((0.1, 0.2))], GRID)
    mu = sample_measure(K, 0.0, 5)
    assert len(mu) == 1 and mu.total == 1.0


def test_disk_area_measure():
    K = make_compact_set([Disk((0.0, 0.0), 0.3)], GRID)
    mu = sample_measure(K, 2.0, 800)
    assert mu.total == pytest.approx(np.pi * 0.09, rel=0.02)  # lattice quadrature of the area
    assert np.all(np.hypot(*mu.points.T) <= 0.3 + 1e-12)


def test_measure_validation():
    with pytest.raises(ValueError, match="positive"):
        RegularMeasure(np.zeros((1, 2)), [0.0], 1.0, 0.1)
    with pytest.raises(ValueError, match="one weight"):
        RegularMeasure(np.zeros((2, 2)), [1.0], 1.0, 0.1)


def test_measure_csv_round_trip(tmp_path, segments):
    mu, _ = segments
    mu.to_csv(tmp_path / "mu.csv")
    back = RegularMeasure.from_csv(tmp_path / "mu.csv", mu.d, mu.spacing)
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)
    assert regularity_band(back) == pytest.approx(back.reg_constants)


def test_max_level_respects_spacing(segments):
    mu, _ = segments
    nu = mu.max_level()
    assert 2.0**-nu >= 4 * mu.spacing > 2.0 ** -(nu + 1) or nu == 0


@pytest.mark.parametrize("beta,expect", [(0.5, (0, 0)), (1.0, (0, 1)), (1.5, (1, 1)), (2.0, (1, 2))])
def test_split_beta(beta, expect):
    assert _split_beta(beta) == expect


def test_canonical_sequence_is_valid(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points, values, 1)
    seq = canonical_sequence(f, mu, 1.5, 3.0)
    assert besov_conditions(f, seq, mu).valid
    assert seq.reduced()


def test_conditions_detect_too_small_bounds(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points, values, 1)
    seq = canonical_sequence(f, mu, 1.5, 3.0)
    seq.a_nu = seq.a_nu * 0.5
    rep = besov_conditions(f, seq, mu)
    assert not rep.valid and rep.violations()


def test_conditions_reject_foreign_samples(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points[:-1], values[:-1], 1)
    seq = canonical_sequence(Jet.constant_values(mu.points, values, 1), mu, 1.5, 3.0)
    with pytest.raises(ValueError, match="mismatch"):
        besov_conditions(f, seq, mu)


def test_reduction_is_idempotent_on_reduced_sequences(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points, values, 1)
    seq = canonical_sequence(f, mu, 1.5, 3.0)
    red = zero_derivative_reduce(seq)
    assert np.array_equal(red.a_nu, seq.a_nu)


def test_reduction_of_geometric_sequence(segments):
    mu, values = segments
    seq = geometric_sequence(mu, values, beta=1.5, p=3.0, seed=3)
    assert not seq.reduced()
    red = zero_derivative_reduce(seq)
    assert red.reduced()
    assert besov_conditions(red.target, red, mu).valid
    assert red.info["hardy_ratio"] <= red.info["hardy_majorant"]
    assert np.all(red.a_nu >= seq.a_nu)


def test_reduction_needs_locally_constant_target(segments):
    mu, values = segments
    seq = geometric_sequence(mu, values, beta=1.5, p=3.0)
    vals = seq.target.values.copy()
    vals[:, 1] = 1.0
    with pytest.raises(ValueError, match="nonzero higher"):
        zero_derivative_reduce(seq, f=seq.target.with_values(vals))


def test_compression_needs_reduced_sequence(segments):
    mu, values = segments
    seq = geometric_sequence(mu, values, beta=1.5, p=3.0)
    with pytest.raises(ValueError, match="unreduced"):
        besov_compress(seq.target, seq, compression_map([(-0.01, 0.01), (0.99, 1.01)]), mu)


def test_level_constants_shapes(segments):
    mu, _ = segments
    c = level_constants(mu, 4, 1.0, 3.0)
    assert c["ball"].shape == (4,) and np.all(c["pair"] > c["ball"] * 0)


@pytest.fixture(scope="module")
def reduced(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points, values, 1)
    return f, zero_derivative_reduce(canonical_sequence(f, mu, 1.5, 3.0)), mu


@settings(max_examples=15)
@given(st.floats(1e-4, 0.1), st.floats(1.1, 4.0))
def test_compressed_bounds_grow_with_budget(reduced, eps, factor):
    f, red, mu = reduced

    def a_eps(e):
        eta = compression_map([(-e / 4, e / 4), (1 - e / 4, 1 + e / 4)])
        fe, se = besov_compress(f, red, eta, mu)
        return fe, se

    fe, small = a_eps(eps)
    _, big = a_eps(min(eps * factor, 0.2))
    assert np.all(small.a_nu <= big.a_nu * (1 + 1e-12))
    assert np.all(small.a_nu <= red.a_nu * (1 + 1e-12))
    assert np.max(np.abs(fe.values[:, 0])) <= eps
    assert besov_conditions(fe, small, mu).valid


def test_sequence_validation(segments):
    mu, values = segments
    f = Jet.constant_values(mu.points, values, 1)
    with pytest.raises(ValueError, match="order"):
        BesovSequence([f.truncated(0)], [1.0], 1.5, 3.0)
    with pytest.raises(ValueError, match="non-negative"):
        BesovSequence([f], [-1.0], 1.5, 3.0)
