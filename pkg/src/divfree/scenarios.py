"""Fixtures and scenario drivers shared by the command line and the acceptance suite.

Every driver takes a resolved configuration dict and returns a ``Result``
holding a JSON-ready report, table rows for ``convergence.csv``, optional
extra tables and rasters, and named pass/fail checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .approx import (
    approximate_divfree, compress_jet, compression_diagnostics, compression_map, glue_approximations,
    hedberg_truncate, image_cover, koch_target, perp_gradient, plateau_step, sharpness_certificate,
    truncation_candidates, two_disk_fixture,
)
from .besov import besov_compress, besov_conditions, canonical_sequence, sample_measure, zero_derivative_reduce
from .fields import Grid, ScalarField
from .geometry import Disk, Point, distance_field, koch_curve, make_compact_set
from .jets import Jet, restrict, whitney_extend_sobolev
from .norms import cm_norm
from .whitney import neighbors, partition_of_unity, whitney_decompose

SQRT2 = float(np.sqrt(2.0))


@dataclass
class Result:
    report: dict
    rows: list
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    rasters: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def check(self, name: str, passed: bool, value=None, limit=None) -> None:
        self.checks[name] = {"passed": bool(passed), "value": value, "limit": limit}


def schedule(spec) -> list:
    """{start, factor, count} -> [start, start * factor, ...]."""
    return [float(spec["start"]) * float(spec["factor"]) ** i for i in range(int(spec["count"]))]


def make_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    return Grid.square(float(g["lo"]), float(g["hi"]), int(g["n"]))


# ---------------------------------------------------------------- fixtures


def random_disks(grid: Grid, seed: int, n_min: int = 1, n_max: int = 5, tries: int = 2000) -> list:
    """1 to 5 disjoint disks with radii in [0.05, 0.25] of the grid width, well inside the grid."""
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = grid.extent
    width = xmax - xmin
    target = int(rng.integers(n_min, n_max + 1))
    disks = []
    for _ in range(tries):
        if len(disks) == target:
            break
        r = rng.uniform(0.025, 0.125) * width
        pad = r + 0.05 * width
        c = (rng.uniform(xmin + pad, xmax - pad), rng.uniform(ymin + pad, ymax - pad))
        if all(np.hypot(c[0] - d.center[0], c[1] - d.center[1]) > r + d.radius + 4 * grid.h for d in disks):
            disks.append(Disk(c, r))
    return disks


def three_disk_fixture(grid: Grid, values=(1.0, -0.5, 0.5), r: float = 0.2, t0: float = 0.02, w: float = 0.2):
    """Disks A, B, C with a potential equal to values[i] near disk i and 0 away from all of them."""
    centers = [(-0.5, -0.35), (0.5, -0.35), (0.0, 0.45)]
    disks = [Disk(c, r) for c in centers]
    X, Y = grid.mesh()
    psi = np.zeros(grid.dims)
    for (cx, cy), v in zip(centers, values):
        psi += v * (1.0 - plateau_step(np.hypot(X - cx, Y - cy) - r, t0, w))
    psi = ScalarField(grid, psi)
    return disks, psi, perp_gradient(psi)


def plateau_fixture(grid: Grid, seed: int, t0: float = 0.02, w: float = 0.12):
    """2 or 3 disks with random levels c_i and F = sum c_i (1 - S((d_i - t0) / w)).

    F is constant within t0 of each disk, so its 2-jet on K is (c_i, 0, 0);
    disks are placed so the transition annuli of different disks never meet.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    disks = []
    while len(disks) < n:
        r = rng.uniform(0.1, 0.2)
        c = rng.uniform(-0.6, 0.6, size=2)
        if all(np.hypot(*(c - d.center)) > r + d.radius + 2 * (t0 + w) + 0.02 for d in disks):
            disks.append(Disk((float(c[0]), float(c[1])), float(r)))
    levels = rng.uniform(-1.0, 1.0, size=n)
    X, Y = grid.mesh()
    F = np.zeros(grid.dims)
    for d, c in zip(disks, levels):
        F += c * (1.0 - plateau_step(np.hypot(X - d.center[0], Y - d.center[1]) - d.radius, t0, w))
    return disks, levels, ScalarField(grid, F)


def cubic_point_fixture(grid: Grid):
    """K = {0} and the harmonic cubic F = x^3 - 3 x y^2, whose 2-jet vanishes at 0."""
    K = make_compact_set([Point((0.0, 0.0))], grid)
    F = ScalarField.from_function(grid, lambda x, y: x**3 - 3 * x * y**2)
    return K, F


def _two_disks(cfg):
    g = cfg["grid"]
    return two_disk_fixture(int(g["n"]), float(g["lo"]), float(g["hi"]))


# ---------------------------------------------------------------- whitney


def whitney_invariants(dec, pou=None) -> dict:
    """Measured Whitney bounds: dist/side, touching side ratios, neighbour counts, |sum phi - 1|."""
    pou = partition_of_unity(dec) if pou is None else pou
    side = dec.side
    ratio = dec.dist / side
    nb = dec._neighbors
    counts = np.array([len(v) for v in nb])
    I = np.repeat(np.arange(len(dec)), counts)
    J = np.concatenate(nb) if len(nb) else np.zeros(0, dtype=int)
    sr = side[J] / side[I] if len(I) else np.ones(1)
    K = dec.K
    pts = K.grid.points(~K.mask)
    # grid nodes get their distance to K from the exact transform instead of a tree query
    total, covered = pou.sum(pts, dK=distance_field(K).values[~K.mask])
    err = float(np.max(np.abs(total[covered] - 1.0))) if covered.any() else 0.0
    return {
        "cubes": len(dec), "dist_ratio_min": float(ratio.min()), "dist_ratio_max": float(ratio.max()),
        "side_ratio_min": float(sr.min()), "side_ratio_max": float(sr.max()),
        "max_neighbors": int(counts.max()), "pou_error": err, "uncovered_nodes": int((~covered).sum()),
        "unresolved_cubes": int(len(dec.unresolved.get("level", []))),
    }


def run_whitney_demo(cfg: dict) -> Result:
    grid = make_grid(cfg)
    fx = cfg["fixture"]
    if fx["name"] == "random-disks":
        prims = random_disks(grid, int(fx.get("seed", cfg.get("seed", 0))))
    elif fx["name"] in ("two-disks", "three-disks"):
        prims = [Disk((-0.5, 0.0), 0.25), Disk((0.5, 0.0), 0.25)] if fx["name"] == "two-disks" else (
            three_disk_fixture(grid)[0])
    else:
        raise ValueError(f"whitney-demo does not support fixture {fx['name']!r}")
    K = make_compact_set(prims, grid)
    dec = whitney_decompose(K)
    pou = partition_of_unity(dec)
    inv = whitney_invariants(dec, pou)
    consts = pou.derivative_constants()
    rows = []
    for L in np.unique(dec.level):
        sel = dec.level == L
        r = dec.dist[sel] / dec.side[sel]
        rows.append({"level": int(L), "side": float(dec.side[sel][0]), "count": int(sel.sum()),
                     "dist_ratio_min": float(r.min()), "dist_ratio_max": float(r.max())})
    res = Result({"invariants": inv, "partition_constants": consts,
                  "disks": [{"center": list(d.center), "radius": d.radius} for d in prims]}, rows)
    res.check("dist_lower", inv["dist_ratio_min"] >= SQRT2 * (1 - 1e-12), inv["dist_ratio_min"], SQRT2)
    res.check("dist_upper", inv["dist_ratio_max"] <= 4 * SQRT2 * (1 + 1e-12), inv["dist_ratio_max"], 4 * SQRT2)
    res.check("side_ratio", 0.25 <= inv["side_ratio_min"] and inv["side_ratio_max"] <= 4.0,
              [inv["side_ratio_min"], inv["side_ratio_max"]], [0.25, 4.0])
    res.check("neighbors", inv["max_neighbors"] <= 144, inv["max_neighbors"], 144)
    res.check("partition", inv["pou_error"] <= 1e-10, inv["pou_error"], 1e-10)
    res.tables["cubes.csv"] = _cube_rows(dec)
    return res


def _cube_rows(dec) -> list:
    c = dec.center
    y = dec.nearest_xy
    return [{"k": k, "center_x": float(c[k, 0]), "center_y": float(c[k, 1]), "side": float(dec.side[k]),
             "level": int(dec.level[k]), "y_k_x": float(y[k, 0]), "y_k_y": float(y[k, 1]),
             "n_neighbors": int(len(neighbors(dec, k)))} for k in range(len(dec))]


# ---------------------------------------------------------------- pipelines


def _pipeline_fixture(cfg):
    name = cfg["fixture"]["name"]
    if name == "two-disks":
        grid, K, psi, u = _two_disks(cfg)
        return grid, K, u
    if name == "three-disks":
        grid = make_grid(cfg)
        disks, psi, u = three_disk_fixture(grid)
        return grid, make_compact_set(disks, grid), u
    raise ValueError(f"pipeline scenarios do not support fixture {name!r}")


def run_c1_pipeline(cfg: dict) -> Result:
    grid, K, u = _pipeline_fixture(cfg)
    eps = schedule(cfg["eps"])
    cut = schedule(cfg["cutoff"])
    rep = approximate_divfree(u, K, eps, cut, m=int(cfg["m"]), gamma=float(cfg["gamma"]), p=float(cfg["p"]),
                              seed=int(cfg.get("seed", 0)), keep_diagonal=True)
    rows = rep.rows()
    diag = rep.diagonal()
    h = grid.h
    n = min(len(eps), len(cut))
    gaps = [float(rep.matrix("support_gap")[i, i]) for i in range(n)]
    res = Result(rep.to_dict(), rows)
    res.check("stages", n >= 5, n, 5)
    res.check("err_C1_decreasing", all(b < a for a, b in zip(diag, diag[1:])), diag)
    res.check("err_C1_final", diag[-1] <= 0.1 * diag[0], diag[-1] / diag[0], 0.1)
    md = max(e["max_div"] for e in rep.errors)
    res.check("max_div", md <= 1e-12, md, 1e-12)
    res.check("support_gap", all(g >= cut[i] / 4 - h and g > 0 for i, g in enumerate(gaps)), gaps,
              [c / 4 - h for c in cut[:n]])
    if rep.fields:
        last = rep.fields[max(rep.fields)]
        res.rasters["speed.pgm"] = _edge_speed(last)
    return res


def _edge_speed(u) -> np.ndarray:
    a = np.zeros(u.grid.dims)
    a[:, :-1] += u.u1**2
    a[:-1, :] += u.u2**2
    return np.sqrt(a)


def run_cmgamma_pipeline(cfg: dict) -> Result:
    """Hedberg truncations F (1 - rho_eps) of a function vanishing to order m on K."""
    grid = make_grid(cfg)
    if cfg["fixture"]["name"] != "cubic-point":
        raise ValueError("cmgamma-pipeline supports the cubic-point fixture")
    K, F = cubic_point_fixture(grid)
    m, gamma = int(cfg["m"]), float(cfg["gamma"])
    eps = schedule(cfg["eps"])
    reports, rows = [], []
    for e in eps:
        T = hedberg_truncate(F, K, e, m, gamma, seed=int(cfg.get("seed", 0)))
        r = T.info["report"]
        reports.append(r)
        err = cm_norm(ScalarField(grid, F.values - T.values), m)
        row = {"eps": e, "err_Cm": err, "omega": r["omega"], "omega_2eps": r["omega_2eps"]}
        for key in ("i", "ii", "iii", "iv"):
            for j, v in r[key].items():
                row[f"{key}{j}".replace(" ", "")] = v
        row.update({f"product{j}".replace(" ", ""): v for j, v in r["product"].items()})
        rows.append(row)
    res = Result({"truncations": reports, "h": grid.h}, rows)
    spreads = power_law_spreads(reports)
    for key, sp in spreads.items():
        res.check(f"power_law_{key}", sp <= 4.0, sp, 4.0)
    prods = [max(r["product"].values()) for r in reports]
    res.check("product_decreasing", all(b < a for a, b in zip(prods, prods[1:])), prods)
    return res


def power_law_spreads(reports) -> dict:
    """max / min over eps of each normalized quantity, per estimate and multi-index (positive values only)."""
    out = {}
    for key in ("i", "ii", "iii", "iv"):
        worst = 1.0
        for j in reports[0][key]:
            v = np.array([r[key][j] for r in reports])
            v = v[v > 0]
            if len(v) > 1:
                worst = max(worst, float(v.max() / v.min()))
        out[key] = worst
    return out


# ---------------------------------------------------------------- compression


def _two_disk_jet(cfg):
    grid, K, psi, u = _two_disks(cfg)
    jet = restrict(psi, K, int(cfg["m"]))
    jet = jet.with_values(np.where(np.arange(jet.values.shape[1]) == 0, jet.values, 0.0))
    return grid, K, psi, jet


def run_sobolev_diagnostics(cfg: dict) -> Result:
    if cfg["fixture"]["name"] != "two-disks":
        raise ValueError("sobolev-diagnostics supports the two-disks fixture")
    grid, K, psi, jet = _two_disk_jet(cfg)
    m, p, gamma = int(cfg["m"]), float(cfg["p"]), float(cfg["gamma"])
    dec = whitney_decompose(K)
    pou = partition_of_unity(dec)
    rows = []
    for e in schedule(cfg["eps"]):
        eta = compression_map(image_cover(psi, K, e))
        je = compress_jet(jet, eta)
        d = compression_diagnostics(je, m, gamma, p, grid)
        ext = whitney_extend_sobolev(je, dec, m, grid, p, pou)
        g = float(ext.info["grad_m_lp"])
        rows.append({"eps": e, "delta_jet": d["jet_norm"], "delta_sobolev": d["maximal_lp"], "grad_m_lp": g,
                     "extension_ratio": g / d["maximal_lp"] if d["maximal_lp"] > 0 else 0.0})
    res = Result({"cubes": len(dec), "partition_constants": pou.derivative_constants()}, rows)
    for key in ("delta_jet", "delta_sobolev"):
        v = [r[key] for r in rows]
        res.check(f"{key}_nonincreasing", all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:])), v)
        res.check(f"{key}_final", v[-1] <= 0.05 * v[0], v[-1] / v[0], 0.05)
    return res


def run_besov_compression(cfg: dict) -> Result:
    if cfg["fixture"]["name"] != "two-disks":
        raise ValueError("besov-compression supports the two-disks fixture")
    grid, K, psi, u = _two_disks(cfg)
    mu = sample_measure(K, float(cfg["d"]), int(cfg["n_points"]))
    i, j = grid.nearest_index(mu.points)
    beta, p = float(cfg["beta"]), float(cfg["p"])
    k = int(np.ceil(beta)) - 1
    f = Jet.constant_values(mu.points, psi.values[i, j], k)
    levels = cfg.get("levels")
    seq = canonical_sequence(f, mu, beta, p, cfg.get("q"), levels)
    red = zero_derivative_reduce(seq)
    base = besov_conditions(f, red, mu)
    rows = []
    for e in schedule(cfg["eps"]):
        eta = compression_map(image_cover(psi, K, e))
        fe, se = besov_compress(f, red, eta, mu)
        rep = besov_conditions(fe, se, mu)
        rows.append({"eps": e, "eta_length": eta.total_length, "a_eps_0": float(se.a_nu[0]), "norm": se.norm,
                     "valid": rep.valid, "worst_ratio": rep.worst, "C_pair": se.info["C_pair"]})
    res = Result({"measure": mu.to_dict(), "sequence": seq.to_dict(), "reduced": red.to_dict(),
                  "reduced_conditions": base.to_dict()}, rows)
    res.tables["measure.csv"] = [{"x": float(x), "y": float(y), "weight": float(w)}
                                 for (x, y), w in zip(mu.points, mu.weights)]
    res.check("reduced_valid", base.valid, base.worst, 1.0)
    res.check("compressed_valid", all(r["valid"] for r in rows), max(r["worst_ratio"] for r in rows), 1.0)
    v = [r["norm"] for r in rows]
    res.check("norm_nonincreasing", all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:])), v)
    res.check("norm_final", v[-1] <= 0.05 * v[0], v[-1] / v[0], 0.05)
    return res


# ---------------------------------------------------------------- sharpness and gluing


def run_koch_sharpness(cfg: dict) -> Result:
    fx = cfg["fixture"]
    if fx["name"] != "koch":
        raise ValueError("koch-sharpness supports the koch fixture")
    grid = make_grid(cfg)
    koch = koch_curve(float(fx.get("a", 0.35)), int(fx.get("order", 5)))
    gamma = koch.gamma if cfg.get("gamma") is None else float(cfg["gamma"])
    K, jet, F, u, dec = koch_target(koch, grid)
    cands = truncation_candidates(F, K, [float(w) for w in cfg["widths"]])
    cert = sharpness_certificate(gamma, cands, koch, K, F, jet, seed=int(cfg.get("seed", 0)))
    cert["holder_band"] = koch.holder_band(seed=int(cfg.get("seed", 0)))
    cert["cubes"] = len(dec)
    rows = [{"candidate": c["index"], "gap": c["gap"], "c0_lower_bound": c["c0_lower_bound"],
             "c0_distance": c["c0_distance"], "support_gap": c["support_gap"]} for c in cert["candidates"]]
    res = Result(cert, rows)
    floor = float(cfg.get("gap_floor", 0.4))
    res.check("gap", cert["min_gap"] >= floor, cert["min_gap"], floor)
    lb = [c["c0_lower_bound"] for c in cert["candidates"]]
    res.check("positive_lower_bound", all(b > 0 for b in lb), lb)
    res.rasters["potential.pgm"] = F.values
    return res


def glue_fixture(cfg: dict):
    """Three disks split into K1 = {A} and K2 = {B, C}, single-stage approximations and a cutoff chi."""
    grid = make_grid(cfg)
    disks, psi, u = three_disk_fixture(grid)
    K1 = make_compact_set(disks[:1], grid)
    K2 = make_compact_set(disks[1:], grid)
    eps = schedule(cfg["eps"])[-1:]
    cut = schedule(cfg["cutoff"])[-1:]
    m, p = int(cfg["m"]), float(cfg["p"])
    r1 = approximate_divfree(u, K1, eps, cut, m=m, p=p, keep_diagonal=True)
    r2 = approximate_divfree(u, K2, eps, cut, m=m, p=p, keep_diagonal=True)
    d1 = distance_field(K1).values
    chi = ScalarField(grid, 1.0 - plateau_step(d1, 0.1, 0.25))
    return grid, (K1, K2), u, r1.fields[0], r2.fields[0], chi


def run_glue_demo(cfg: dict) -> Result:
    if cfg["fixture"]["name"] != "three-disks":
        raise ValueError("glue-demo supports the three-disks fixture")
    grid, (K1, K2), u, u1, u2, chi = glue_fixture(cfg)
    v = glue_approximations(u1, u2, K1, K2, chi, u)
    info = v.info
    res = Result({"glue": info}, [dict(info)])
    res.check("max_div", info["max_div"] <= 1e-12, info["max_div"], 1e-12)
    res.check("support_K1", info["support_gap_K1"] > 0, info["support_gap_K1"], 0.0)
    res.check("support_K2", info["support_gap_K2"] > 0, info["support_gap_K2"], 0.0)
    res.check("error_bound", info["err"] <= info["bound"], info["err"], info["bound"])
    res.rasters["speed.pgm"] = _edge_speed(v)
    return res


DRIVERS = {
    "whitney-demo": run_whitney_demo,
    "c1-pipeline": run_c1_pipeline,
    "cmgamma-pipeline": run_cmgamma_pipeline,
    "sobolev-diagnostics": run_sobolev_diagnostics,
    "besov-compression": run_besov_compression,
    "koch-sharpness": run_koch_sharpness,
    "glue-demo": run_glue_demo,
}

_HALVING = {"start": 0.5, "factor": 0.5}

DEFAULTS = {
    "whitney-demo": {"grid": {"lo": -1.0, "hi": 1.0, "n": 512}, "fixture": {"name": "random-disks"}},
    "c1-pipeline": {"grid": {"lo": -1.0, "hi": 1.0, "n": 512}, "fixture": {"name": "two-disks"},
                    "eps": {**_HALVING, "count": 5}, "cutoff": {**_HALVING, "count": 5},
                    "m": 2, "gamma": 0.0, "p": 4.0},
    "cmgamma-pipeline": {"grid": {"lo": -0.75, "hi": 0.75, "n": 1536}, "fixture": {"name": "cubic-point"},
                         "eps": {**_HALVING, "count": 6}, "m": 2, "gamma": 0.5},
    "sobolev-diagnostics": {"grid": {"lo": -1.0, "hi": 1.0, "n": 512}, "fixture": {"name": "two-disks"},
                            "eps": {**_HALVING, "count": 7}, "m": 2, "gamma": 0.0, "p": 4.0},
    "besov-compression": {"grid": {"lo": -1.0, "hi": 1.0, "n": 512}, "fixture": {"name": "two-disks"},
                          "eps": {**_HALVING, "count": 7}, "d": 2.0, "beta": 1.5, "p": 4.0, "q": 4.0,
                          "n_points": 1500},
    "koch-sharpness": {"grid": {"lo": -0.5, "hi": 1.5, "n": 512}, "fixture": {"name": "koch", "a": 0.35, "order": 5},
                       "gamma": None, "widths": [0.2, 0.1, 0.05], "gap_floor": 0.4},
    "glue-demo": {"grid": {"lo": -1.0, "hi": 1.0, "n": 512}, "fixture": {"name": "three-disks"},
                  "eps": {"start": 0.0625, "factor": 0.5, "count": 1},
                  "cutoff": {"start": 0.0625, "factor": 0.5, "count": 1}, "m": 2, "p": 4.0},
}
