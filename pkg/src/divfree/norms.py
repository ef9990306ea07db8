"""Norms, seminorms and discrete differential operators on grid fields.

Derivatives use second-order central differences composed per axis; nodes
whose stencil leaves the array get NaN and are skipped by every norm.
Quadrature is the midpoint rule on the dual cells (weight h^2 per node).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.spatial import cKDTree

from .fields import Grid, ScalarField, VectorField2

PAIR_THRESHOLD = 20_000


def multi_indices(m: int, exact: bool = False) -> list:
    """Canonical multi-indices j = (j1, j2) ordered by |j| then j2."""
    out = []
    for k in range(m + 1):
        if exact and k != m:
            continue
        out.extend((k - i, i) for i in range(k + 1))
    return out


def mfact(j) -> int:
    return factorial(j[0]) * factorial(j[1])


def _d1(a, h, axis):
    out = np.full(a.shape, np.nan)
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[1:-1] = (src[2:] - src[:-2]) / (2.0 * h)
    return out


def _d2(a, h, axis):
    out = np.full(a.shape, np.nan)
    src = np.moveaxis(a, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    dst[1:-1] = (src[2:] - 2.0 * src[1:-1] + src[:-2]) / (h * h)
    return out


def fd_derivative(values: np.ndarray, h: float, j) -> np.ndarray:
    """Central-difference D^j of a node array; NaN where the stencil does not fit."""
    out = np.asarray(values, dtype=float)
    for axis, order in enumerate(j):
        for _ in range(order // 2):
            out = _d2(out, h, axis)
        if order % 2:
            out = _d1(out, h, axis)
    return out


def stencil_radius(j) -> tuple:
    return tuple(o // 2 + o % 2 for o in j)


def derivatives(f: ScalarField, m: int, exact: bool = False) -> dict:
    return {j: fd_derivative(f.values, f.grid.h, j) for j in multi_indices(m, exact)}


class SweepValue(float):
    """A float carrying how a pair sweep was evaluated ("exact" or "stratified")."""

    def __new__(cls, value, mode="exact", pairs=0):
        obj = float.__new__(cls, value)
        obj.mode = mode
        obj.pairs = int(pairs)
        return obj


def exact_pair_blocks(n: int, max_block: int = 2_000_000):
    """Yield (I, J) index blocks covering every unordered pair i < j exactly once."""
    rows = max(1, max_block // max(n, 1))
    for a in range(0, n, rows):
        b = min(n, a + rows)
        I = np.repeat(np.arange(a, b), n)
        J = np.tile(np.arange(n), b - a)
        keep = J > I
        yield I[keep], J[keep]


def stratified_pairs(points: np.ndarray, per_stratum: int = 40_000, seed: int = 0, k_nearest: int = 8):
    """Pairs stratified by distance decade, plus all k-nearest-neighbour pairs.

    For each decade [10^k, 10^(k+1)) random anchors are paired with the sample
    nearest to a random offset of that length, so every scale from the
    nearest-neighbour spacing to the diameter gets the same number of probes.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    rng = np.random.default_rng(seed)
    tree = cKDTree(pts)
    k = min(k_nearest + 1, n)
    dist, idx = tree.query(pts, k=k)
    I = [np.repeat(np.arange(n), k - 1)]
    J = [idx[:, 1:].ravel()]
    pos = dist[:, 1:][dist[:, 1:] > 0]
    lo = pos.min() if pos.size else 1e-12
    span = pts.max(axis=0) - pts.min(axis=0)
    hi = float(np.hypot(*span)) or lo
    for dec in range(int(np.floor(np.log10(lo))), int(np.ceil(np.log10(hi))) + 1):
        anchors = rng.integers(0, n, size=per_stratum)
        r = 10.0 ** rng.uniform(dec, dec + 1, size=per_stratum)
        th = rng.uniform(0.0, 2 * np.pi, size=per_stratum)
        target = pts[anchors] + np.column_stack([r * np.cos(th), r * np.sin(th)])
        _, partner = tree.query(target)
        I.append(anchors)
        J.append(partner)
    I = np.concatenate(I)
    J = np.concatenate(J)
    keep = I != J
    return I[keep], J[keep]


def pair_sup(points: np.ndarray, ratio, threshold: int = PAIR_THRESHOLD, seed: int = 0) -> SweepValue:
    """Supremum of ``ratio(I, J)`` over pairs of samples, exact below ``threshold`` samples."""
    n = len(points)
    best = 0.0
    count = 0
    if n <= threshold:
        for I, J in exact_pair_blocks(n):
            if len(I):
                best = max(best, float(np.max(ratio(I, J))))
                count += len(I)
        return SweepValue(best, "exact", count)
    I, J = stratified_pairs(points, seed=seed)
    for a in range(0, len(I), 2_000_000):
        best = max(best, float(np.max(ratio(I[a:a + 2_000_000], J[a:a + 2_000_000]))))
    return SweepValue(best, "stratified", len(I))


def _samples(f, region):
    if isinstance(f, ScalarField):
        mask = np.ones(f.grid.dims, dtype=bool) if region is None else np.asarray(region, dtype=bool)
        mask = mask & np.isfinite(f.values)
        return f.grid.points(mask), f.values[mask]
    pts, vals = f
    return np.asarray(pts, dtype=float), np.asarray(vals, dtype=float)


def holder_seminorm(f, gamma: float, region=None, threshold: int = PAIR_THRESHOLD, seed: int = 0) -> SweepValue:
    """sup |f(x) - f(y)| / |x - y|^gamma over region samples.

    ``f`` is a ScalarField (optionally restricted by a boolean ``region``) or a
    ``(points, values)`` pair.  gamma = 0 gives the oscillation.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"Hoelder exponent must lie in [0, 1], got {gamma}")
    pts, vals = _samples(f, region)
    if len(pts) < 2:
        raise ValueError("Hoelder seminorm needs at least two points")
    if gamma == 0.0:
        return SweepValue(float(vals.max() - vals.min()), "exact", 0)

    def ratio(I, J):
        d = np.hypot(*(pts[I] - pts[J]).T)
        return np.abs(vals[I] - vals[J]) / d**gamma

    return pair_sup(pts, ratio, threshold, seed)


def lattice_offsets(max_radius: int, near: int = 2, directions: int = 8) -> list:
    """All offsets with |di|, |dj| <= near plus log-spaced radii in ``directions`` directions."""
    offs = {(i, j) for i in range(0, near + 1) for j in range(-near, near + 1) if (i, j) > (0, 0)}
    r = near + 1
    while r <= max_radius:
        for k in range(directions):
            th = np.pi * k / directions
            offs.add((int(round(r * np.cos(th))), int(round(r * np.sin(th)))))
        r *= 2
    return sorted(o for o in offs if o != (0, 0) and (o[0] > 0 or (o[0] == 0 and o[1] > 0)))


def holder_seminorm_grid(f: ScalarField, gamma: float, region=None, max_radius: int | None = None) -> SweepValue:
    """Hoelder seminorm over node pairs separated by a fixed set of lattice offsets.

    Every pair at distance <= 2 sqrt(2) h is included, longer separations
    on a log-spaced set of radii and 8 directions; the result is a lower
    bound of the full pair sweep and is flagged with mode "offsets".
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"Hoelder exponent must lie in (0, 1], got {gamma}")
    r = _region(f, region) & np.isfinite(f.values)
    if r.sum() < 2:
        raise ValueError("Hoelder seminorm needs at least two points")
    ii, jj = np.nonzero(r)
    i0, i1, j0, j1 = ii.min(), ii.max() + 1, jj.min(), jj.max() + 1
    v = f.values[i0:i1, j0:j1]
    m = r[i0:i1, j0:j1]
    h = f.grid.h
    span = max(i1 - i0, j1 - j0)
    R = span if max_radius is None else min(span, max_radius)
    best = 0.0
    count = 0
    for di, dj in lattice_offsets(R):
        a = (slice(0, v.shape[0] - di), slice(max(0, -dj), v.shape[1] - max(0, dj)))
        b = (slice(di, v.shape[0]), slice(max(0, dj), v.shape[1] - max(0, -dj)))
        if a[0].stop <= 0 or a[1].stop - a[1].start <= 0:
            continue
        ok = m[a] & m[b]
        if not ok.any():
            continue
        d = np.abs(v[a][ok] - v[b][ok])
        best = max(best, float(d.max()) / (h * np.hypot(di, dj)) ** gamma)
        count += int(ok.sum())
    return SweepValue(best, "offsets", count)


def _region(f: ScalarField, region):
    return np.ones(f.grid.dims, dtype=bool) if region is None else np.asarray(region, dtype=bool)


def sup_norm(f: ScalarField, region=None) -> float:
    r = _region(f, region) & np.isfinite(f.values)
    return float(np.max(np.abs(f.values[r]))) if r.any() else 0.0


def lp_norm(f: ScalarField, p: float, region=None) -> float:
    r = _region(f, region) & np.isfinite(f.values)
    if np.isinf(p):
        return sup_norm(f, r)
    return float((np.sum(np.abs(f.values[r]) ** p) * f.grid.h**2) ** (1.0 / p))


def _valid(ders: dict, region):
    ok = region.copy()
    for arr in ders.values():
        ok &= np.isfinite(arr)
    if not ok.any():
        raise ValueError("region too thin for the difference stencil")
    return ok


def cm_norm(f: ScalarField, m: int, region=None) -> float:
    """max over |j| <= m of sup |D^j f| on the region."""
    ders = derivatives(f, m)
    ok = _valid(ders, _region(f, region))
    return float(max(np.max(np.abs(a[ok])) for a in ders.values()))


def cm_gamma_norm(f: ScalarField, m: int, gamma: float, region=None, seed: int = 0) -> float:
    """C^m norm plus the gamma-Hoelder seminorm of the order-m derivatives."""
    base = cm_norm(f, m, region)
    if gamma == 0.0:
        return base
    r = _region(f, region)
    semi = max(
        holder_seminorm(ScalarField(f.grid, fd_derivative(f.values, f.grid.h, j)), gamma, r, seed=seed)
        for j in multi_indices(m, exact=True)
    )
    return max(base, float(semi))


def wmp_norm(f: ScalarField, m: int, p: float, region=None) -> float:
    """(sum_{|j|<=m} ||D^j f||_p^p)^(1/p) with central differences."""
    if p < 1:
        raise ValueError("p must be at least 1")
    ders = derivatives(f, m)
    ok = _valid(ders, _region(f, region))
    total = sum(np.sum(np.abs(a[ok]) ** p) for a in ders.values())
    return float((total * f.grid.h**2) ** (1.0 / p))


def grad_lp(f: ScalarField, m: int, p: float, region=None) -> float:
    """||nabla^m f||_p = (sum_{|j|=m} ||D^j f||_p^p)^(1/p)."""
    ders = derivatives(f, m, exact=True)
    ok = _valid(ders, _region(f, region))
    total = sum(np.sum(np.abs(a[ok]) ** p) for a in ders.values())
    return float((total * f.grid.h**2) ** (1.0 / p))


def divergence(u: VectorField2) -> ScalarField:
    """Cell-centred divergence of a staggered field, adjoint to ``perp_gradient``."""
    h = u.grid.h
    nx, ny = u.grid.dims
    div = (u.u1[1:, :] - u.u1[:-1, :]) / h + (u.u2[:, 1:] - u.u2[:, :-1]) / h
    return ScalarField(u.grid.offset(0.5, 0.5, (nx - 1, ny - 1)), div)


def vector_cm_norm(u: VectorField2, m: int = 1, region_nodes=None) -> float:
    """max over both staggered components of their C^m norms."""
    out = 0.0
    for comp, mask in zip(u.components(), _edge_regions(u, region_nodes)):
        out = max(out, cm_norm(comp, m, mask))
    return out


def vector_wmp_norm(u: VectorField2, m: int, p: float, region_nodes=None) -> float:
    parts = [wmp_norm(c, m, p, mask) for c, mask in zip(u.components(), _edge_regions(u, region_nodes))]
    return float(sum(v**p for v in parts) ** (1.0 / p))


def _edge_regions(u: VectorField2, region_nodes):
    if region_nodes is None:
        return None, None
    r = np.asarray(region_nodes, dtype=bool)
    return r[:, :-1] & r[:, 1:], r[:-1, :] & r[1:, :]


@dataclass(frozen=True)
class NormSpec:
    kind: str
    m: int = 0
    gamma: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        kinds = {"sup", "holder", "cm", "cmgamma", "lp", "wmp"}
        if self.kind not in kinds:
            raise ValueError(f"unknown norm kind {self.kind!r}; expected one of {sorted(kinds)}")
        if self.m < 0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("norm parameters out of range (m >= 0, gamma in [0, 1])")
        if self.kind in ("lp", "wmp") and not self.p > 1:
            raise ValueError("p must exceed 1")

    def evaluate(self, f: ScalarField, region=None) -> float:
        if self.kind == "sup":
            return sup_norm(f, region)
        if self.kind == "holder":
            return float(holder_seminorm(f, self.gamma, region))
        if self.kind == "cm":
            return cm_norm(f, self.m, region)
        if self.kind == "cmgamma":
            return cm_gamma_norm(f, self.m, self.gamma, region)
        if self.kind == "lp":
            return lp_norm(f, self.p, region)
        return wmp_norm(f, self.m, self.p, region)
