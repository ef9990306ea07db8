"""Regular measures on compact sets, Besov approximating sequences, their
condition checks, the zero-derivative reduction and monotone compression.

Conditions for a sequence (f_nu, a_nu) approximating a jet f of order k,
with k < beta <= k + 1 and b = 2^(-nu) the level scale:

a) ||f^(j) - f_nu^(j)||_p <= 2^(-nu (beta - |j|)) a_nu            |j| <= k
b) ||f_nu^(j) - f_(nu+1)^(j)||_p <= a_nu       beta = k + 1, |j| = k + 1
c) (2^(D nu) sum_{|x-y| < b} |R_(j nu)(x, y)|^p w_x w_y)^(1/p)
       <= 2^(-nu (beta - |j|)) a_nu                         |j| <= [beta]
d) ||f_0^(j)||_p <= a_0                                     |j| <= [beta]

All L^p norms are taken against the sampled measure; D defaults to d.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import CompactSet, Disk, Point, Polyline
from .jets import Jet, _remainders
from .norms import mfact, multi_indices

RATIO_TOL = 1e-9
BLOCK = 512


@dataclass
class RegularMeasure:
    """Weighted samples standing in for H^d restricted to K."""

    points: np.ndarray
    weights: np.ndarray
    d: float
    spacing: float
    reg_constants: tuple = (np.nan, np.nan)
    info: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if len(self.points) != len(self.weights):
            raise ValueError("measure needs one weight per sample")
        if len(self.weights) == 0 or np.any(self.weights <= 0):
            raise ValueError("measure weights must be positive and non-empty")
        if not 0 <= self.d <= 2:
            raise ValueError(f"dimension d must lie in [0, 2], got {self.d}")

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def lp(self, g, p: float) -> float:
        g = np.abs(np.asarray(g, dtype=float))
        return float(np.sum(self.weights * g**p) ** (1.0 / p))

    def ball_mass(self, r: float, centers=None) -> np.ndarray:
        """mu(B(x, r)) with the open ball, for each centre (default: every sample)."""
        if centers is None:
            key = ("mass", float(r))
            if key not in self._cache:
                I, J = self.near_pairs(r)
                self._cache[key] = np.bincount(I, weights=self.weights[J], minlength=len(self))
            return self._cache[key]
        centers = np.atleast_2d(centers)
        out = np.empty(len(centers))
        for s in range(0, len(centers), BLOCK):
            d2 = _sqdist(centers[s:s + BLOCK], self.points)
            out[s:s + BLOCK] = (d2 < r * r) @ self.weights
        return out

    def near_pairs(self, r: float):
        """Ordered sample pairs with |x - y| < r (diagonal included), cached per radius."""
        key = ("pairs", float(r))
        if key not in self._cache:
            self._cache[key] = _near_pairs(self.points, r)
        return self._cache[key]

    def max_level(self) -> int:
        """Deepest nu with 2^-nu >= 4 * spacing."""
        return max(int(math.floor(-math.log2(4.0 * self.spacing))), 0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "weight"])
            for (x, y), m in zip(self.points, self.weights):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(m))])

    @classmethod
    def from_csv(cls, path, d: float, spacing: float) -> "RegularMeasure":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        mu = cls(rows[:, :2], rows[:, 2], d, spacing)
        mu.reg_constants = regularity_band(mu)
        return mu

    def to_dict(self) -> dict:
        c, C = self.reg_constants
        return {"d": self.d, "n_points": len(self), "total_mass": self.total, "spacing": self.spacing,
                "reg_c": c, "reg_C": C, **self.info}


def _sqdist(a, b):
    return cdist(a, b, "sqeuclidean")


def _near_pairs(points, r):
    """All ordered pairs (x, y) with |x - y| < r, diagonal included, in row-major order."""
    I, J = [], []
    for s in range(0, len(points), BLOCK):
        i, j = np.nonzero(_sqdist(points[s:s + BLOCK], points) < r * r)
        I.append((i + s).astype(np.int32))
        J.append(j.astype(np.int32))
    return np.concatenate(I), np.concatenate(J)


def regularity_band(mu: RegularMeasure, n_centers: int = 200, n_radii: int = 10) -> tuple:
    """(c, C) with c r^d <= mu(B(x, r)) <= C r^d over probed centres and r in [4 spacing, diam]."""
    pts = mu.points
    diam = float(np.hypot(*np.ptp(pts, axis=0)))
    r_lo = 4.0 * mu.spacing
    if diam <= r_lo:
        radii = np.array([r_lo])
    else:
        radii = np.geomspace(r_lo, diam, n_radii)
    centers = pts[np.linspace(0, len(pts) - 1, min(n_centers, len(pts))).astype(int)]
    ratios = np.concatenate([mu.ball_mass(r, centers) / r**mu.d for r in radii])
    return float(ratios.min()), float(ratios.max())


def _split(n_points, sizes):
    sizes = np.asarray(sizes, dtype=float)
    return np.maximum(np.rint(n_points * sizes / sizes.sum()).astype(int), 1)


def _polyline_samples(poly: Polyline, n: int, d: float):
    s = (np.arange(n) + 0.5) / n * poly.length
    x = np.interp(s, poly._cum, poly.vertices[:, 0])
    y = np.interp(s, poly._cum, poly.vertices[:, 1])
    if d == 1:
        total = poly.length
    else:
        # self-similar curves: mass of the whole curve is its chord to the power d
        total = float(np.hypot(*(poly.vertices[-1] - poly.vertices[0]))) ** d
    return np.column_stack([x, y]), np.full(n, total / n), poly.length / n


def _disk_samples(disk: Disk, n: int, d: float):
    cx, cy = disk.center
    r = disk.radius
    if d == 1:
        t = 2 * np.pi * (np.arange(n) + 0.5) / n
        pts = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        return pts, np.full(n, 2 * np.pi * r / n), 2 * np.pi * r / n
    if d == 2:
        step = math.sqrt(np.pi * r * r / n)
        ax = np.arange(-r + step / 2, r, step)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        keep = X**2 + Y**2 <= r * r
        pts = np.column_stack([cx + X[keep], cy + Y[keep]])
        return pts, np.full(len(pts), step * step), step
    raise ValueError(f"a disk carries no {d}-regular measure; use d = 1 (circle) or d = 2 (area)")


def sample_measure(K: CompactSet, d: float, n_points: int = 1500) -> RegularMeasure:
    """Discretize H^d on K from its primitives.

    Points carry unit atoms (d = 0); polylines get constant-speed samples with
    equal weights (total arc length for d = 1, chord^d otherwise); disks get
    the boundary circle (d = 1) or an area lattice (d = 2).
    """
    if K.empty or not K.primitives:
        raise ValueError("sample_measure needs a non-empty set built from primitives")
    if n_points < 1:
        raise ValueError("n_points must be positive")
    prims = K.primitives
    if d == 0:
        if not all(isinstance(q, Point) for q in prims):
            raise ValueError("d = 0 is only supported for finite sets of points")
        pts = np.array([q.xy for q in prims], dtype=float)
        mu = RegularMeasure(pts, np.ones(len(pts)), 0.0, K.grid.h)
    else:
        if any(isinstance(q, Point) for q in prims):
            raise ValueError(f"isolated points are not {d}-regular")
        sizes = [q.length if isinstance(q, Polyline) else np.pi * q.radius**2 for q in prims]
        P, W, steps = [], [], [K.grid.h]
        for q, n in zip(prims, _split(n_points, sizes)):
            pts, w, step = _polyline_samples(q, n, d) if isinstance(q, Polyline) else _disk_samples(q, n, d)
            P.append(pts)
            W.append(w)
            steps.append(step)
        mu = RegularMeasure(np.concatenate(P), np.concatenate(W), float(d), max(steps))
    c, C = regularity_band(mu)
    mu.reg_constants = (c, C)
    if c <= 0 or C / c > 1e3:
        warnings.warn(f"measure is not numerically d-regular (c = {c:.3g}, C = {C:.3g})", stacklevel=2)
    return mu


# ------------------------------------------------------------ sequences

def _split_beta(beta: float):
    """(k, [beta]) with k < beta <= k + 1."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    k = int(math.ceil(beta)) - 1
    return k, int(math.floor(beta))


@dataclass
class BesovSequence:
    """Approximating jets f_nu (order [beta]) on the measure's samples with scalars a_nu."""

    jets_nu: list
    a_nu: np.ndarray
    beta: float
    p: float
    q: float | None = None
    D: float | None = None
    target: Jet | None = None
    measure: RegularMeasure | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.a_nu = np.asarray(self.a_nu, dtype=float)
        self.q = self.p if self.q is None else float(self.q)
        if self.D is None and self.measure is not None:
            self.D = self.measure.d
        if len(self.jets_nu) != len(self.a_nu):
            raise ValueError("one a_nu per level is required")
        if np.any(self.a_nu < 0):
            raise ValueError("a_nu must be non-negative")
        _, top = _split_beta(self.beta)
        for jet in self.jets_nu:
            if jet.order != top:
                raise ValueError(f"level jets must have order [beta] = {top}, got {jet.order}")

    @property
    def levels(self) -> list:
        return list(range(len(self.a_nu)))

    @property
    def norm(self) -> float:
        return float(np.sum(self.a_nu**self.q) ** (1.0 / self.q))

    def reduced(self) -> bool:
        return all(j.zero_higher() for j in self.jets_nu)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "p": self.p, "q": self.q, "D": self.D, "levels": len(self.a_nu),
                "a_nu": self.a_nu.tolist(), "norm": self.norm, **self.info}


@dataclass
class ConditionReport:
    entries: list
    D: float
    beta: float
    p: float

    @property
    def worst(self) -> float:
        return max((e["ratio"] for e in self.entries), default=0.0)

    @property
    def valid(self) -> bool:
        return self.worst <= 1.0 + RATIO_TOL

    def violations(self) -> list:
        return [e for e in self.entries if e["ratio"] > 1.0 + RATIO_TOL]

    def required(self, n_levels: int) -> np.ndarray:
        """Smallest a_nu each level could carry: max over its conditions of lhs / scale."""
        need = np.zeros(n_levels)
        for e in self.entries:
            if e["scale"] > 0:
                need[e["level"]] = max(need[e["level"]], e["lhs"] / e["scale"])
        return need

    def to_dict(self) -> dict:
        return {"valid": self.valid, "worst_ratio": self.worst, "D": self.D, "beta": self.beta, "p": self.p,
                "entries": self.entries}


def _check_samples(jet: Jet, mu: RegularMeasure):
    if jet.points.shape != mu.points.shape or not np.array_equal(jet.points, mu.points):
        raise ValueError("jet/measure sample mismatch")


def _ratio(lhs, rhs):
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def _condition_terms(f: Jet, jets_nu, mu: RegularMeasure, beta: float, p: float, D: float):
    """(level, condition, j, lhs, scale) for every check; the right-hand side is scale * a_nu."""
    k, top = _split_beta(beta)
    if f.order < k:
        raise ValueError(f"target jet order {f.order} is below k = {k} for beta = {beta}")
    _check_samples(f, mu)
    for jet in jets_nu:
        _check_samples(jet, mu)
    w = mu.weights
    out = []
    idx = multi_indices(top)
    for nu, fn in enumerate(jets_nu):
        for j in multi_indices(k):
            lhs = mu.lp(f.component(j) - fn.component(j), p)
            out.append((nu, "a", j, lhs, 2.0 ** (-nu * (beta - sum(j)))))
        if beta == k + 1 and nu + 1 < len(jets_nu):
            for j in multi_indices(k + 1, exact=True):
                lhs = mu.lp(fn.component(j) - jets_nu[nu + 1].component(j), p)
                out.append((nu, "b", j, lhs, 1.0))
        I, J = mu.near_pairs(2.0**-nu)
        R = _remainders(fn, I, J, top)
        pw = w[I] * w[J]
        for c, j in enumerate(idx):
            lhs = (2.0 ** (D * nu) * np.sum(np.abs(R[:, c]) ** p * pw)) ** (1.0 / p)
            out.append((nu, "c", j, float(lhs), 2.0 ** (-nu * (beta - sum(j)))))
    for j in idx:
        out.append((0, "d", j, mu.lp(jets_nu[0].component(j), p), 1.0))
    return out


def besov_conditions(f: Jet, seq: BesovSequence, mu: RegularMeasure) -> ConditionReport:
    """Ratios lhs / rhs of conditions a)-d) at every level; valid iff all are <= 1 + 1e-9."""
    D = mu.d if seq.D is None else seq.D
    entries = []
    for nu, cond, j, lhs, scale in _condition_terms(f, seq.jets_nu, mu, seq.beta, seq.p, D):
        rhs = scale * seq.a_nu[nu]
        entries.append({"level": nu, "condition": cond, "j": list(j), "lhs": lhs, "scale": scale,
                        "rhs": rhs, "ratio": _ratio(lhs, rhs)})
    return ConditionReport(entries, D, seq.beta, seq.p)


def _lift(f: Jet, order: int) -> Jet:
    """f padded with zero entries up to ``order`` (or truncated down to it)."""
    if order <= f.order:
        return f.truncated(order)
    vals = np.zeros((len(f), len(multi_indices(order))))
    vals[:, : f.values.shape[1]] = f.values
    return Jet(order, f.points, vals)


def canonical_sequence(f: Jet, mu: RegularMeasure, beta: float, p: float, q: float | None = None,
                       n_levels: int | None = None, D: float | None = None) -> BesovSequence:
    """f_nu = f at every level, with a_nu the smallest values the conditions allow."""
    _, top = _split_beta(beta)
    n_levels = mu.max_level() + 1 if n_levels is None else n_levels
    D = mu.d if D is None else D
    jets = [_lift(f, top)] * n_levels
    seq = BesovSequence(jets, np.zeros(n_levels), beta, p, q, D, f, mu)
    seq.a_nu = besov_conditions(f, seq, mu).required(n_levels)
    seq.info["witness"] = "canonical"
    return seq


def level_constants(mu: RegularMeasure, n_levels: int, D: float, p: float) -> dict:
    """Ball-mass constants per level.

    ``ball``: max_y (2^(D nu) mu(B(y, 2^-nu)))^(1/p); ``pair``: 2 (2^(D nu) sum_y w_y mu(B(y, 2^-nu)))^(1/p).
    """
    ball, pair = [], []
    for nu in range(n_levels):
        m = mu.ball_mass(2.0**-nu)
        ball.append((2.0 ** (D * nu) * m.max()) ** (1.0 / p))
        pair.append(2.0 * (2.0 ** (D * nu) * float(m @ mu.weights)) ** (1.0 / p))
    return {"ball": np.array(ball), "pair": np.array(pair)}


def zero_derivative_reduce(seq: BesovSequence, f: Jet | None = None, mu: RegularMeasure | None = None,
                           tol: float = 0.0) -> BesovSequence:
    """Drop all derivative entries of the level jets, keeping f_nu^(0).

    Condition c) for j = 0 is restored by the triangle inequality:
        a~_nu = a_nu + 2^(nu beta) sum_{1<=|l|<=beta} 2^(-nu |l|) / l!
                       * (2^(D nu) sum_y |f_nu^(l)(y)|^p mu(B(y, 2^-nu)) w_y)^(1/p).
    The majorant obtained from ||f_nu^(l)||_p <= 2 sum_{i<=nu} a_i,
        a_nu + C sum_l 2^(-nu |l|) / l! * 2 sum_{i<=nu} a_i,
    with C = max_nu max_y (2^(D nu) mu(B(y, 2^-nu)))^(1/p), is reported next to it.
    """
    f = seq.target if f is None else f
    mu = seq.measure if mu is None else mu
    if f is None or mu is None:
        raise ValueError("reduction needs the target jet and the measure")
    if not f.zero_higher(tol):
        raise ValueError("target jet has nonzero higher derivatives")
    n = len(seq.a_nu)
    D = mu.d if seq.D is None else seq.D
    _, top = _split_beta(seq.beta)
    higher = [l for l in multi_indices(top) if sum(l) >= 1]
    consts = level_constants(mu, n, D, seq.p)
    C = float(consts["ball"].max())
    a = seq.a_nu
    cum = np.cumsum(a)
    bound = a.copy()
    a_new = a.copy()
    for nu in range(n):
        r = 2.0**-nu
        m = mu.ball_mass(r)
        for l in higher:
            bound[nu] += C * r ** sum(l) / mfact(l) * 2.0 * cum[nu]
            g = seq.jets_nu[nu].component(l)
            term = (2.0 ** (D * nu) * np.sum(np.abs(g) ** seq.p * m * mu.weights)) ** (1.0 / seq.p)
            a_new[nu] += 2.0 ** (nu * seq.beta) * r ** sum(l) / mfact(l) * term
    jets = []
    for jet in seq.jets_nu:
        vals = np.zeros_like(jet.values)
        vals[:, 0] = jet.values[:, 0]
        jets.append(jet.with_values(vals))
    total = np.sum(a**seq.q)
    ratio = float(np.sum(a_new**seq.q) / total) if total > 0 else 0.0
    majorant = float(np.sum(bound**seq.q) / total) if total > 0 else 0.0
    info = {"witness": "reduced", "C_ball": C, "hardy_ratio": ratio, "hardy_majorant": majorant,
            "majorant_sufficient": bool(np.all(a_new <= bound * (1 + RATIO_TOL))),
            "a_majorant": bound.tolist()}
    return BesovSequence(jets, a_new, seq.beta, seq.p, seq.q, D, f, mu, info)


def _compose(eta, jet: Jet) -> Jet:
    vals = np.zeros_like(jet.values)
    vals[:, 0] = eta(jet.values[:, 0])
    return jet.with_values(vals)


def besov_compress(f: Jet, seq: BesovSequence, eta, mu: RegularMeasure | None = None):
    """f_eps = eta o f^(0) with sequence eta o f_nu and the compressed bounds a_{eps, nu}.

    With beta in place of the exponent 2:
        a_{eps,0}  = max of min{a_0, eps mu(K)^(1/p)} and the nu = 0 value below,
        a_{eps,nu} = max{min{a_nu, C 2^(beta nu) eps}, min{2^(beta nu + 1) eps mu(K)^(1/p), a_nu}},
    where eps = sup |eta| and C = max_nu 2 (2^(D nu) sum_y w_y mu(B(y, 2^-nu)))^(1/p).
    """
    mu = seq.measure if mu is None else mu
    if not f.zero_higher():
        raise ValueError("compression needs a target with vanishing derivatives")
    if not seq.reduced():
        raise ValueError("unreduced sequence; run zero_derivative_reduce first")
    n = len(seq.a_nu)
    D = mu.d if seq.D is None else seq.D
    eps = float(getattr(eta, "total_length", 0.0))
    fe = _compose(eta, f)
    jets = [_compose(eta, jet) for jet in seq.jets_nu]
    consts = level_constants(mu, n, D, seq.p)
    C = float(consts["pair"].max())
    mass = mu.total ** (1.0 / seq.p)
    a = seq.a_nu
    two = 2.0 ** (seq.beta * np.arange(n))
    a_eps = np.maximum(np.minimum(a, C * two * eps), np.minimum(2.0 * two * eps * mass, a))
    a_eps[0] = max(min(a[0], eps * mass), a_eps[0])
    info = {"witness": "compressed", "eps": eps, "C_pair": C, "mu_K": mu.total}
    return fe, BesovSequence(jets, a_eps, seq.beta, seq.p, seq.q, D, fe, mu, info)


def geometric_sequence(mu: RegularMeasure, values, beta: float, p: float, rho: float = 0.6,
                       amplitude: float = 0.5, seed: int = 0, n_levels: int | None = None) -> BesovSequence:
    """A non-reduced witness for a locally constant target with geometric a_nu = A rho^nu.

    ``values`` holds f^(0) per sample. Level jets add a smooth random perturbation
    of size amplitude * rho^nu 2^(-nu beta) together with its gradient, so the
    derivative entries are nonzero while the target's vanish. A is the smallest
    constant making every condition hold.
    """
    k, top = _split_beta(beta)
    if top < 1:
        raise ValueError("geometric witnesses need beta >= 1 so that gradients are carried")
    rng = np.random.default_rng(seed)
    n_levels = mu.max_level() + 1 if n_levels is None else n_levels
    x, y = mu.points.T
    f = Jet.constant_values(mu.points, values, k)
    idx = multi_indices(top)
    jets = []
    for nu in range(n_levels):
        b = rng.normal(size=2)
        om = rng.uniform(1.0, 3.0, size=2)
        ph = rng.uniform(0, 2 * np.pi)
        t = amplitude * rho**nu * 2.0 ** (-nu * beta)
        arg = om[0] * x + om[1] * y + ph
        vals = np.zeros((len(x), len(idx)))
        vals[:, 0] = np.asarray(values, dtype=float) + t * (b[0] * x + b[1] * y + np.sin(arg))
        vals[:, idx.index((1, 0))] = t * (b[0] + om[0] * np.cos(arg))
        vals[:, idx.index((0, 1))] = t * (b[1] + om[1] * np.cos(arg))
        if top >= 2:
            for c, l in enumerate(idx):
                if sum(l) >= 2:
                    vals[:, c] = -t * om[0] ** l[0] * om[1] ** l[1] * np.sin(arg + (sum(l) - 2) * np.pi / 2)
        jets.append(Jet(top, mu.points, vals))
    seq = BesovSequence(jets, np.zeros(n_levels), beta, p, None, mu.d, f, mu)
    need = besov_conditions(f, seq, mu).required(n_levels)
    geo = rho ** np.arange(n_levels)
    A = float(np.max(need / geo))
    seq.a_nu = A * geo
    seq.info.update({"witness": "geometric", "A": A, "rho": rho, "seed": seed})
    return seq
