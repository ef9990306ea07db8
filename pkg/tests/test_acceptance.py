"""One test per acceptance criterion; the terminal summary prints a PASS/FAIL line for each."""

import time

import numpy as np
import pytest
from scipy import ndimage
from scipy.spatial import cKDTree

from divfree.besov import besov_conditions, geometric_sequence, sample_measure, zero_derivative_reduce
from divfree.cli import load_config
from divfree.fields import Grid
from divfree.geometry import Polyline, koch_curve, make_compact_set
from divfree.jets import (extension_derivatives, extension_sup, jet_norm, restrict, shvartsman_field,
                          whitney_extend, whitney_extend_sobolev)
from divfree.norms import grad_lp
from divfree.scenarios import DRIVERS, plateau_fixture, random_disks, whitney_invariants
from divfree.whitney import partition_of_unity, whitney_decompose

SQRT2 = np.sqrt(2.0)
RESOLUTIONS = (256, 512, 1024)  # h = 1/128, 1/256, 1/512 on [-1, 1]
SUITE_SEEDS = range(20)


def run_scenario(name, **over):
    cfg = load_config(name)
    cfg.update(over)
    t = time.perf_counter()
    res = DRIVERS[name](cfg)
    return res, time.perf_counter() - t


def show(res):
    for name, c in res.checks.items():
        print(f"  {'ok ' if c['passed'] else 'BAD'} {name}: value={c['value']} limit={c['limit']}")


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "Whitney invariants on 50 random disk sets at 512^2")
def test_whitney_invariants():
    grid = Grid.square(-1.0, 1.0, 512)
    t = time.perf_counter()
    worst = {"dist_min": np.inf, "dist_max": 0.0, "side_min": np.inf, "side_max": 0.0, "nb": 0, "pou": 0.0}
    for seed in range(50):
        K = make_compact_set(random_disks(grid, seed), grid)
        dec = whitney_decompose(K)
        inv = whitney_invariants(dec, partition_of_unity(dec))
        worst["dist_min"] = min(worst["dist_min"], inv["dist_ratio_min"])
        worst["dist_max"] = max(worst["dist_max"], inv["dist_ratio_max"])
        worst["side_min"] = min(worst["side_min"], inv["side_ratio_min"])
        worst["side_max"] = max(worst["side_max"], inv["side_ratio_max"])
        worst["nb"] = max(worst["nb"], inv["max_neighbors"])
        worst["pou"] = max(worst["pou"], inv["pou_error"])
    elapsed = time.perf_counter() - t
    print(f"criterion 1: {worst}, {elapsed:.1f} s")
    assert worst["dist_min"] >= SQRT2 * (1 - 1e-12)
    assert worst["dist_max"] <= 4 * SQRT2 * (1 + 1e-12)
    assert worst["side_min"] >= 0.25 and worst["side_max"] <= 4.0
    assert worst["nb"] <= 144
    assert worst["pou"] <= 1e-10
    assert elapsed <= 60.0


# ---------------------------------------------------------------- 2 and 3 (shared suite)


def _k_adjacent(mask):
    """Off-K nodes with a 4-neighbour in K."""
    return ndimage.binary_dilation(mask) & ~mask


def _suite_case(seed, n):
    grid = Grid.square(-1.0, 1.0, n)
    disks, levels, F = plateau_fixture(grid, seed)
    K = make_compact_set(disks, grid)
    jet = restrict(F, K, 2)
    dec = whitney_decompose(K)
    pou = partition_of_unity(dec)
    h = grid.h

    E = whitney_extend(jet, dec, 2, grid, pou)
    repro = float(np.max(np.abs(E.values[K.mask] - jet.values[:, 0])))
    ders = extension_derivatives(jet, dec, 2, 2, pou)
    adj = _k_adjacent(K.mask)
    near = cKDTree(jet.points).query(grid.points(adj))[1]
    deriv_err = 0.0
    for a, D in ders.items():
        target = jet.values[near, jet.column(a)]
        deriv_err = max(deriv_err, float(np.max(np.abs(D.values[adj] - target))))
    node_sup = max(float(np.max(np.abs(D.values))) for D in ders.values())
    cm = max(node_sup, extension_sup(jet, dec, 2, 2, pou))
    ext_ratio = cm / jet_norm(jet, 2, 0.0).jet_norm

    M = shvartsman_field(jet, 2, grid).values
    out = {"h": h, "zero_higher": jet.zero_higher(), "repro": repro, "deriv_err": deriv_err, "ext_ratio": ext_ratio}
    for p in (3.0, 4.0):
        Mp = float((np.sum(M**p) * h**2) ** (1.0 / p))
        out[f"M_{p:g}"] = Mp
        out[f"maximal_ratio_{p:g}"] = Mp / grad_lp(F, 2, p)
    S = whitney_extend_sobolev(jet, dec, 2, grid, 4.0, pou)
    out["sobolev_ratio"] = S.info["grad_m_lp"] / out["M_4"]
    return out


@pytest.fixture(scope="module")
def plateau_suite():
    return {(s, n): _suite_case(s, n) for s in SUITE_SEEDS for n in RESOLUTIONS}


def _drift(suite, key):
    """Largest max/min of ``key`` over resolutions, per seed, and the global constant."""
    drift, C = 1.0, 0.0
    for s in SUITE_SEEDS:
        v = np.array([suite[(s, n)][key] for n in RESOLUTIONS])
        drift = max(drift, float(v.max() / v.min()))
        C = max(C, float(v.max()))
    return drift, C


@pytest.mark.criterion(2, "extension round trip and C^2 constant across h")
def test_extension_round_trip(plateau_suite):
    cases = plateau_suite.values()
    assert all(c["zero_higher"] for c in cases)
    repro = max(c["repro"] for c in cases)
    deriv = max(c["deriv_err"] / (10 * c["h"]) for c in cases)
    drift, C = _drift(plateau_suite, "ext_ratio")
    print(f"criterion 2: reproduction {repro}, derivative error / 10h {deriv:.3g}, C {C:.4g}, drift {drift:.4f}")
    assert repro == 0.0
    assert deriv <= 1.0
    assert drift < 2.0


@pytest.mark.criterion(3, "maximal function bounds stable across h for p = 3, 4")
def test_maximal_function_bounds(plateau_suite):
    lines = []
    for key in ("maximal_ratio_3", "maximal_ratio_4", "sobolev_ratio"):
        drift, C = _drift(plateau_suite, key)
        lines.append((key, C, drift))
        print(f"criterion 3: {key} C {C:.4g} drift {drift:.4f}")
    for key, C, drift in lines:
        assert np.isfinite(C) and C > 0
        assert drift < 2.0, key


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4, "compression decay: jet, Sobolev and Besov")
def test_compression_decay():
    sob, _ = run_scenario("sobolev-diagnostics")
    show(sob)
    eps = [r["eps"] for r in sob.rows]
    assert len(eps) == 7 and eps[0] == 0.5 and np.allclose(np.diff(np.log2(eps)), -1.0)
    for key in ("delta_jet", "delta_sobolev"):
        v = [r[key] for r in sob.rows]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:])), key
        assert v[-1] <= 0.05 * v[0], key
    bes, _ = run_scenario("besov-compression")
    show(bes)
    v = [r["norm"] for r in bes.rows]
    assert len(v) == 7
    assert all(r["valid"] for r in bes.rows)
    assert v[-1] <= 0.05 * v[0]


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5, "c1-pipeline convergence at 512^2")
def test_pipeline_convergence():
    res, elapsed = run_scenario("c1-pipeline")
    show(res)
    print(f"criterion 5: {elapsed:.1f} s")
    rep = res.report
    diag = rep["diagonal_err_C1"]
    cut = rep["cutoff_schedule"]
    h = 2.0 / 512
    assert len(diag) >= 5
    assert all(b < a for a, b in zip(diag, diag[1:]))
    assert diag[-1] <= 0.1 * diag[0]
    assert max(e["max_div"] for e in rep["errors"]) <= 1e-12
    for e in rep["errors"]:
        assert e["support_gap"] >= cut[e["k"]] / 4 - h > 0, (e["i"], e["k"])
    assert elapsed <= 300.0


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6, "Hedberg truncation power laws within a factor 4")
def test_hedberg_power_laws():
    res, _ = run_scenario("cmgamma-pipeline")
    show(res)
    assert len(res.rows) == 6  # five halvings
    for key in ("i", "ii", "iii", "iv"):
        assert res.checks[f"power_law_{key}"]["value"] <= 4.0, key
    prods = res.checks["product_decreasing"]["value"]
    assert all(b < a for a, b in zip(prods, prods[1:]))


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7, "Koch sharpness: C^0 potential gap >= 0.4")
def test_koch_sharpness():
    koch = koch_curve(0.35, 5)
    assert koch.theta == pytest.approx(0.7573, abs=1e-4)
    assert koch.gamma == pytest.approx(1 / koch.theta - 1, rel=1e-12)
    res, _ = run_scenario("koch-sharpness")
    show(res)
    cands = res.report["candidates"]
    assert len(cands) == 4  # zero field and three mollified truncations
    assert min(c["gap"] for c in cands) >= 0.4
    assert all(c["c0_lower_bound"] > 0 for c in cands)


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8, "zero-derivative reduction on 20 geometric sequences")
def test_zero_derivative_reduction():
    t = time.perf_counter()
    grid = Grid.square(-1.0, 1.0, 256)
    K = make_compact_set([Polyline(np.array([[-0.6, -0.3], [-0.6, 0.4]])),
                          Polyline(np.array([[0.0, -0.3], [0.3, 0.5]]))], grid)
    mu = sample_measure(K, 1.0, 600)
    values = np.where(mu.points[:, 0] < -0.3, 0.0, 1.0)
    ratios, majorants = [], []
    for seed in range(20):
        seq = geometric_sequence(mu, values, beta=1.5, p=3.0, seed=seed)
        assert besov_conditions(seq.target, seq, mu).valid
        red = zero_derivative_reduce(seq)
        assert red.reduced()
        rep = besov_conditions(red.target, red, mu)
        assert rep.valid, rep.worst
        assert red.info["majorant_sufficient"]
        ratios.append(red.info["hardy_ratio"])
        majorants.append(red.info["hardy_majorant"])
    elapsed = time.perf_counter() - t
    C = max(majorants)
    print(f"criterion 8: measured ratio max {max(ratios):.4g}, global C {C:.4g}, {elapsed:.1f} s")
    assert np.ptp(majorants) <= 1e-9 * C  # the majorant does not depend on the seed
    assert max(ratios) <= C
    assert elapsed <= 30.0


# ---------------------------------------------------------------- 9


@pytest.mark.criterion(9, "gluing on three components")
def test_gluing():
    res, _ = run_scenario("glue-demo")
    show(res)
    info = res.report["glue"]
    print(f"criterion 9: C(chi) = {info['C_chi']:.6g}")
    assert info["max_div"] <= 1e-12
    assert info["support_gap_K1"] > 0 and info["support_gap_K2"] > 0
    assert info["err"] <= info["C_chi"] * (info["err_u1"] + info["err_u2"])
