"""Approximation of divergence-free fields vanishing on K by fields supported
away from K: stream potentials, interval covers of the potential's values on
K, monotone compression, mollified cutoffs, the auxiliary function, the full
pipeline, gluing of two approximations and the sharpness certificate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .fields import Grid, ScalarField, VectorField2
from .geometry import CompactSet, KochCurve, distance_field, make_compact_set, neighborhood, separated_preimage_cover
from .jets import Jet, jet_norm, maximal_lp, restrict, whitney_extend
from .norms import (
    divergence, fd_derivative, holder_seminorm_grid, multi_indices, sup_norm, vector_cm_norm, vector_wmp_norm,
)
from .whitney import _smooth_step, partition_of_unity, whitney_decompose

QUANT_BITS = 44


class StageError(RuntimeError):
    """A pipeline stage precondition failed; ``stage`` names the step."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------- potentials


def _quantize(a: np.ndarray) -> np.ndarray:
    """Round to a power-of-two grid so that the difference stencils below are exact."""
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if amax == 0.0 or not np.isfinite(amax):
        return a.copy()
    # the floor keeps quotients by h clear of subnormals, where they stop being exact
    q = np.ldexp(1.0, max(int(np.ceil(np.log2(amax))) - QUANT_BITS, -1000))
    return np.round(a / q) * q


def perp_gradient(psi: ScalarField) -> VectorField2:
    """u = (d2 psi, -d1 psi) on the staggered grid.

    psi is first rounded to multiples of max(2^(e - 44), 2^-1000) with
    2^e >= max|psi| (a relative change below 1e-13 above the floor); every
    difference in u and in its divergence is then exact, and for power-of-two h the discrete
    divergence vanishes identically.
    """
    v = psi.values
    if not np.all(np.isfinite(v)):
        raise ValueError("under-resolved potential: non-finite values")
    v = _quantize(v)
    h = psi.grid.h
    u1 = (v[:, 1:] - v[:, :-1]) / h
    u2 = -(v[1:, :] - v[:-1, :]) / h
    return VectorField2(psi.grid, u1, u2)


def stream_potential(u: VectorField2, corner=None, tol: float = 1e-9) -> ScalarField:
    """Discrete potential with perp_gradient(psi) = u, normalized to vanish at a corner.

    Integrates -u2 along the first row and then u1 up every column.  The
    additive constant is fixed at ``corner`` (node index pair), by default
    the grid corner farthest from the support of u.
    """
    div = divergence(u).values
    md = float(np.max(np.abs(div))) if div.size else 0.0
    if md > tol:
        raise ValueError(f"field is not divergence-free: max|div u| = {md:.3e}")
    h = u.grid.h
    nx, ny = u.grid.dims
    base = np.concatenate([[0.0], -h * np.cumsum(u.u2[:, 0])])
    psi = base[:, None] + np.concatenate([np.zeros((nx, 1)), h * np.cumsum(u.u1, axis=1)], axis=1)
    if corner is None:
        corner = farthest_corner(u.grid, u.support_nodes())
    psi = psi - psi[corner]
    return ScalarField(u.grid, psi, {"corner": tuple(int(c) for c in corner)})


def farthest_corner(grid: Grid, support: np.ndarray) -> tuple:
    nx, ny = grid.dims
    corners = [(0, 0), (nx - 1, 0), (0, ny - 1), (nx - 1, ny - 1)]
    if not support.any():
        return corners[0]
    d = ndimage.distance_transform_edt(~support)
    return max(corners, key=lambda c: d[c])


# ---------------------------------------------------------------- compression


def image_cover(psi: ScalarField, K: CompactSet, eps: float, budget_fraction: float = 0.25) -> list:
    """Disjoint open intervals covering psi's values on K with total length < eps.

    Sorted values are grouped by merging the smallest gaps first while each
    gap is at most ``budget_fraction`` of the budget left; each group is then
    padded by R / (4n), where R is the unused budget and n the number of groups.
    """
    if eps <= 0:
        raise ValueError("cover budget must be positive")
    vals = np.unique(psi.values[K.mask])
    if vals.size == 0:
        return []
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential is not resolved on K")
    gaps = np.diff(vals)
    merged = np.zeros(len(gaps), dtype=bool)
    spread = 0.0
    for g in np.argsort(gaps, kind="stable"):
        if gaps[g] <= budget_fraction * (eps - spread):
            merged[g] = True
            spread += gaps[g]
        else:
            break
    starts = np.concatenate([[0], np.nonzero(~merged)[0] + 1])
    ends = np.concatenate([np.nonzero(~merged)[0], [len(vals) - 1]])
    lo, hi = vals[starts], vals[ends]
    spread = float(np.sum(hi - lo))
    rest = eps - spread
    pad = rest / (4.0 * len(lo))
    scale = max(1.0, float(np.max(np.abs(vals))))
    if rest <= 0 or pad <= 1e-12 * scale:
        raise ValueError(
            f"budget {eps} cannot cover the sampled values: {len(lo)} clusters need total length "
            f"at least {spread:.6g} plus resolvable padding"
        )
    return [(float(a - pad), float(b + pad)) for a, b in zip(lo, hi)]


@dataclass
class CompressionMap:
    """eta(t) = measure of [0, t] inside the union of the intervals (signed for t < 0)."""

    intervals: list
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        iv = [(float(l), float(r)) for l, r in self.intervals]
        if any(r <= l for l, r in iv):
            raise ValueError("intervals must have positive length")
        if iv != sorted(iv):
            raise ValueError("intervals must be sorted")
        for (l0, r0), (l1, r1) in zip(iv, iv[1:]):
            if r0 >= l1:
                raise ValueError(f"intervals ({l0}, {r0}) and ({l1}, {r1}) overlap or touch")
        self.intervals = iv
        self._l = np.array([l for l, _ in iv])
        self._r = np.array([r for _, r in iv])
        self.offsets = self._l - self(self._l) if iv else np.zeros(0)

    @property
    def total_length(self) -> float:
        return float(np.sum(self._r - self._l))

    def _F(self, t):
        t = np.asarray(t, dtype=float)
        if not self.intervals:
            return np.zeros_like(t)
        return np.sum(np.clip(t[..., None], self._l, self._r) - self._l, axis=-1)

    def __call__(self, t):
        return self._F(t) - self._F(0.0)

    def to_dict(self) -> dict:
        return {"intervals": [list(i) for i in self.intervals], "offsets": self.offsets.tolist(),
                "total_length": self.total_length}


def compression_map(intervals) -> CompressionMap:
    return CompressionMap(sorted(intervals))


def compress_jet(jet: Jet, eta: CompressionMap) -> Jet:
    """eta applied to f^(0); requires and keeps f^(j) = 0 for |j| >= 1."""
    if not jet.zero_higher():
        raise ValueError("compression needs a jet with vanishing higher entries")
    vals = np.zeros_like(jet.values)
    vals[:, 0] = eta(jet.values[:, 0])
    return jet.with_values(vals)


def compression_diagnostics(jet_eps: Jet, m: int, gamma: float, p: float, grid: Grid) -> dict:
    """Both smallness measures of a compressed jet: its C^{m,gamma} jet norm and ||M^(m) f||_p."""
    return {"jet_norm": jet_norm(jet_eps, m, gamma).jet_norm, "maximal_lp": maximal_lp(jet_eps, m, p, grid)}


# ---------------------------------------------------------------- cutoffs


def radial_mollifier(radius: float, h: float) -> np.ndarray:
    """Normalized exp-bump kernel of the given radius sampled on the node lattice."""
    n = int(np.ceil(radius / h))
    t = np.arange(-n, n + 1) * h
    X, Y = np.meshgrid(t, t, indexing="ij")
    r2 = (X**2 + Y**2) / radius**2
    k = np.where(r2 < 1, np.exp(-1.0 / np.where(r2 < 1, 1.0 - r2, 1.0)), 0.0)
    if k.sum() == 0:
        k[n, n] = 1.0
    return k / k.sum()


def mollified_indicator(mask: np.ndarray, radius: float, h: float) -> np.ndarray:
    out = fftconvolve(mask.astype(float), radial_mollifier(radius, h), mode="same")
    return np.clip(out, 0.0, 1.0)


def smooth_cutoff(K: CompactSet, eps: float, dist: np.ndarray | None = None) -> ScalarField:
    """rho = indicator of K_{eps/2} mollified at radius eps/10.

    rho = 1 where dist < 0.4 eps and 0 where dist >= 0.6 eps (exactly, the
    plateau is enforced after the FFT convolution); in particular rho = 1
    on K_{eps/4} and rho = 0 off K_eps.
    """
    h = K.grid.h
    if eps < 8 * h:
        raise ValueError(f"cutoff width {eps} is below 8h = {8 * h}; the mollifier is not resolvable")
    d = distance_field(K).values if dist is None else dist
    rho = mollified_indicator(d < eps / 2, eps / 10, h)
    rho[d < 0.4 * eps] = 1.0
    rho[d >= 0.6 * eps] = 0.0
    return ScalarField(K.grid, rho, {"eps": eps})


def cutoff_constants(rho: ScalarField, eps: float, kmax: int = 3) -> dict:
    """Measured C(k) = sup |nabla^k rho| eps^k for k <= kmax."""
    out = {}
    for k in range(kmax + 1):
        best = 0.0
        for j in multi_indices(k, exact=True):
            d = fd_derivative(rho.values, rho.grid.h, j)
            best = max(best, float(np.nanmax(np.abs(d))))
        out[str(k)] = best * eps**k
    return out


def holder_modulus(F: ScalarField, region: np.ndarray, m: int, gamma: float, seed: int = 0) -> float:
    """omega = max_{|j| = m} |D^j F|_{C^{0,gamma}(region)} (lattice-offset estimate)."""
    return max(
        float(holder_seminorm_grid(ScalarField(F.grid, fd_derivative(F.values, F.grid.h, j)), gamma, region))
        for j in multi_indices(m, exact=True)
    )


def hedberg_truncate(F: ScalarField, K: CompactSet, eps: float, m: int, gamma: float = 0.0,
                     decay: float = 0.75, seed: int = 0):
    """F (1 - rho_eps) with the four estimate quantities of the truncation argument.

    Preconditions: the jet of F vanishes to order m on K (difference tolerance
    10 h^2 max|F|), and for gamma > 0 the modulus omega(s) of D^m F on K_s
    decays: omega(s) <= decay^(log_8(eps / s)) omega(eps) at s = max(eps/8, 4h).  Report entries are the
    measured quantities divided by their power laws:
      (i)   sup_{K_eps} |D^t F| / (omega(eps) eps^(m - |t| + gamma))
      (ii)  |D^t F|_{C^{0,gamma}(K_eps)} / (omega(2 eps) eps^(m - |t|))
      (iii) sup |D^k rho| eps^k
      (iv)  |D^k rho|_{C^{0,gamma}} eps^(k + gamma)
    """
    h = F.grid.h
    scale = max(float(np.max(np.abs(F.values))), 1e-300)
    jet = restrict(F, K, m)
    tol = 10 * h * h * scale
    if np.max(np.abs(jet.values)) > tol:
        raise ValueError(f"jet of F does not vanish to order {m} on K (max entry {np.max(np.abs(jet.values)):.3e})")
    dist = distance_field(K).values
    Ke = dist < eps
    report = {"eps": eps, "m": m, "gamma": gamma}
    if gamma > 0:
        w1 = holder_modulus(F, Ke, m, gamma, seed)
        w2 = holder_modulus(F, dist < 2 * eps, m, gamma, seed)
        # vanishing modulus: omega must drop by ``decay`` per factor 8 of scale
        s_lo = max(eps / 8.0, 4.0 * h)
        w_lo = holder_modulus(F, dist < s_lo, m, gamma, seed)
        need = decay ** (np.log(eps / s_lo) / np.log(8.0)) if s_lo < eps else 1.0
        report.update(omega=w1, omega_2eps=w2, omega_small=w_lo, small_scale=s_lo, decay_required=need)
        if w1 > 0 and w_lo > need * w1:
            raise ValueError(
                f"D^{m}F is not Hoelder-vanishing on K: omega({s_lo:.4g})/omega({eps:.4g}) = "
                f"{w_lo / w1:.3f} > {need:.3f}"
            )
    else:
        w1 = w2 = max(float(np.max(np.abs(fd_derivative(F.values, h, j)[Ke]))) for j in multi_indices(m, exact=True))
        report.update(omega=w1, omega_2eps=w2)
    rho = smooth_cutoff(K, eps, dist)
    q1, q2, q3, q4 = {}, {}, {}, {}
    for t in multi_indices(m):
        D = fd_derivative(F.values, h, t)
        k = sum(t)
        sup = float(np.nanmax(np.abs(D[Ke])))
        q1[str(t)] = sup / (w1 * eps ** (m - k + gamma)) if w1 > 0 else 0.0
        if gamma > 0:
            semi = float(holder_seminorm_grid(ScalarField(F.grid, D), gamma, Ke))
            q2[str(t)] = semi / (w2 * eps ** (m - k)) if w2 > 0 else 0.0
        Dr = fd_derivative(rho.values, h, t)
        q3[str(t)] = float(np.nanmax(np.abs(Dr))) * eps**k
        if gamma > 0:
            # rho's seminorm is attained within the transition annulus
            band = (dist < 0.7 * eps) & (dist > 0.3 * eps)
            q4[str(t)] = float(holder_seminorm_grid(ScalarField(F.grid, Dr), gamma, band)) * eps ** (k + gamma)
    report.update(i=q1, ii=q2, iii=q3, iv=q4, product={str(j): w2 * eps ** (m - sum(j)) for j in multi_indices(m)})
    out = ScalarField(F.grid, F.values * (1.0 - rho.values), {"report": report})
    return out


# ---------------------------------------------------------------- auxiliary function


def auxiliary_function(covers, constants, K: CompactSet, grid: Grid | None = None) -> ScalarField:
    """Smooth h with h = c_i near K cap U_i.

    With sep the smallest distance between the parts K cap U_i, the part P_i
    gets the indicator of its 0.35 sep neighbourhood mollified at radius
    0.05 sep: exactly 1 on the 0.3 sep neighbourhood and 0 beyond 0.4 sep.
    ``info["rho"]`` = sep / 4 is the radius on which h is certified constant.
    """
    grid = K.grid if grid is None else grid
    covers = list(covers)
    constants = list(constants)
    if len(covers) != len(constants):
        raise ValueError("one constant per cover is required")
    h = grid.h
    for a in range(len(covers)):
        for b in range(a + 1, len(covers)):
            if not covers[a].mask.any() or not covers[b].mask.any():
                continue
            d = ndimage.distance_transform_edt(~covers[b].mask, sampling=h)
            if np.min(d[covers[a].mask]) < 2 * h - 1e-12:
                raise ValueError(f"covers {a} and {b} are closer than 2h")
    parts = [K.mask & U.mask for U in covers]
    dists = [ndimage.distance_transform_edt(~P, sampling=h) if P.any() else None for P in parts]
    sep = np.inf
    for a, P in enumerate(parts):
        for b in range(len(parts)):
            if b != a and P.any() and dists[b] is not None:
                sep = min(sep, float(np.min(dists[b][P])))
    # keep every bump inside the grid
    xmin, xmax, ymin, ymax = grid.extent
    pts = grid.points(K.mask)
    margin = float(np.min(np.r_[pts[:, 0] - xmin, xmax - pts[:, 0], pts[:, 1] - ymin, ymax - pts[:, 1]]))
    sep = min(sep, 2.0 * margin)
    out = np.zeros(grid.dims)
    for P, dP, c in zip(parts, dists, constants):
        if dP is None or c == 0:
            continue
        hi = mollified_indicator(dP < 0.35 * sep, 0.05 * sep, h)
        hi[dP <= 0.3 * sep] = 1.0
        hi[dP >= 0.4 * sep] = 0.0
        out += c * hi
    return ScalarField(grid, out, {"sep": sep, "rho": sep / 4.0})


# ---------------------------------------------------------------- pipeline


@dataclass
class PipelineReport:
    eps_schedule: list
    cutoff_schedule: list
    stages: list
    errors: list
    config: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict, repr=False)

    def matrix(self, key: str) -> np.ndarray:
        n, k = len(self.eps_schedule), len(self.cutoff_schedule)
        M = np.full((n, k), np.nan)
        for e in self.errors:
            M[e["i"], e["k"]] = e[key]
        return M

    def diagonal(self, key: str = "err_C1") -> list:
        M = self.matrix(key)
        return [float(M[i, i]) for i in range(min(M.shape))]

    def best_per_eps(self, key: str = "err_C1") -> list:
        return [float(np.nanmin(r)) for r in self.matrix(key)]

    def rows(self) -> list:
        out = []
        for e in self.errors:
            out.append({
                "eps": self.eps_schedule[e["i"]], "k": e["k"], "err_C1": e["err_C1"], "err_Wmp": e["err_Wmp"],
                "max_div": e["max_div"], "support_gap": e["support_gap"],
                "delta_eps": self.stages[e["i"]]["delta_jet"],
            })
        return out

    def to_dict(self) -> dict:
        return {"eps_schedule": self.eps_schedule, "cutoff_schedule": self.cutoff_schedule,
                "stages": self.stages, "errors": self.errors, "diagonal_err_C1": self.diagonal(),
                "best_err_C1": self.best_per_eps(), "config": self.config}


def support_gap(u: VectorField2, dist: np.ndarray) -> float:
    s = u.support_nodes()
    return float(np.min(dist[s])) if s.any() else float("inf")


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (ValueError, RuntimeError) as exc:
        raise StageError(name, str(exc)) from exc


def approximate_divfree(u: VectorField2, K: CompactSet, eps_schedule, cutoff_schedule, m: int = 2,
                        gamma: float = 0.0, p: float = 4.0, jet_tol: float = 1e-9, seed: int = 0,
                        dec=None, keep_diagonal: bool = False) -> PipelineReport:
    """Approximants u_eps^k = perp_gradient(g_eps (1 - rho_k) + h_eps) of a field vanishing on K.

    For each eps: potential, jet on K, interval cover of its values,
    separated preimages, compression, Whitney extension phi_eps of the
    compressed jet, auxiliary h_eps and g_eps = psi - phi_eps - h_eps; then
    every cutoff width of ``cutoff_schedule`` truncates g_eps.  With
    ``keep_diagonal`` the approximants u_eps_i^i are kept in ``fields``.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    cutoff_schedule = [float(e) for e in cutoff_schedule]
    grid = u.grid
    psi = _stage("S1-potential", stream_potential, u)
    jet = _stage("S2-jet", restrict, psi, K, m)
    if np.max(np.abs(jet.values[:, 1:]), initial=0.0) > jet_tol:
        raise StageError("S2-jet", f"potential's jet has nonzero derivatives on K "
                                   f"(max {np.max(np.abs(jet.values[:, 1:])):.3e}); u must vanish to order {m - 1}")
    jet = jet.with_values(np.where(np.arange(jet.values.shape[1]) == 0, jet.values, 0.0))
    if dec is None:
        dec = _stage("S6-whitney", whitney_decompose, K)
    pou = partition_of_unity(dec)
    dist = distance_field(K).values
    cutoffs = [_stage("S8-cutoff", smooth_cutoff, K, e, dist) for e in cutoff_schedule]
    stages, errors, fields = [], [], {}
    for i, eps in enumerate(eps_schedule):
        iv = _stage("S3-cover", image_cover, psi, K, eps)
        covers = _stage("S3-preimage", separated_preimage_cover, psi, K, iv, eps)
        eta = _stage("S4-compress", compression_map, iv)
        jet_e = _stage("S4-compress", compress_jet, jet, eta)
        diag = compression_diagnostics(jet_e, m, gamma, p, grid)
        phi = _stage("S6-extend", whitney_extend, jet_e, dec, m, grid, pou)
        haux = _stage("S7-auxiliary", auxiliary_function, covers, eta.offsets, K, grid)
        g = ScalarField(grid, psi.values - phi.values - haux.values)
        gj = restrict(g, K, m)
        gmax = float(np.max(np.abs(gj.values)))
        if gmax > jet_tol:
            raise StageError("S7-auxiliary", f"g_eps does not vanish on K to order {m} (max jet entry {gmax:.3e})")
        stages.append({
            "eps": eps, "intervals": eta.to_dict()["intervals"], "offsets": eta.offsets.tolist(),
            "total_length": eta.total_length, "delta_jet": diag["jet_norm"], "delta_sobolev": diag["maximal_lp"],
            "g_jet_max": gmax, "aux_rho": haux.info["rho"], "unresolved_nodes": phi.info["unresolved_nodes"],
        })
        for k, rho in enumerate(cutoffs):
            w = ScalarField(grid, g.values * (1.0 - rho.values) + haux.values)
            uk = perp_gradient(w)
            if keep_diagonal and k == i:
                fields[i] = uk
            diff = uk - u
            errors.append({
                "i": i, "k": k, "eps": eps, "cutoff": cutoff_schedule[k],
                "err_C1": vector_cm_norm(diff, 1), "err_Wmp": vector_wmp_norm(diff, 1, p),
                "max_div": float(np.max(np.abs(divergence(uk).values))),
                "support_gap": support_gap(uk, dist),
            })
    return PipelineReport(eps_schedule, cutoff_schedule, stages, errors,
                          {"m": m, "gamma": gamma, "p": p, "grid": grid.to_dict(), "cubes": len(dec)}, fields)


# ---------------------------------------------------------------- gluing


def glue_approximations(u1: VectorField2, u2: VectorField2, K1: CompactSet, K2: CompactSet, chi: ScalarField,
                        u: VectorField2 | None = None, margin: float | None = None) -> VectorField2:
    """perp_gradient(chi psi_1 + (1 - chi) psi_2) with psi_i potentials of u_i at a common corner.

    chi must be 1 on the ``margin``-neighbourhood of K1 and 0 on that of K2
    (default margin 2h).  When the target ``u`` is given, ``info`` holds
    the measured C^1 error and the bound C(chi) (||u - u1|| + ||u - u2||)
    with C(chi) = 1 + 2 ||chi||_{C^1} + P ||chi||_{C^2}, P = W + H.
    """
    grid = u1.grid
    h = grid.h
    margin = 2 * h if margin is None else margin
    n1 = neighborhood(K1, margin).mask
    n2 = neighborhood(K2, margin).mask
    if np.any(chi.values[n1] != 1.0):
        raise ValueError("chi must equal 1 on a neighbourhood of K1")
    if np.any(chi.values[n2] != 0.0):
        raise ValueError("chi must vanish on a neighbourhood of K2")
    corner = farthest_corner(grid, u1.support_nodes() | u2.support_nodes())
    p1 = stream_potential(u1, corner)
    p2 = stream_potential(u2, corner)
    v = perp_gradient(ScalarField(grid, chi.values * p1.values + (1.0 - chi.values) * p2.values))
    d1 = distance_field(K1).values
    d2 = distance_field(K2).values
    info = {"support_gap_K1": support_gap(v, d1), "support_gap_K2": support_gap(v, d2),
            "max_div": float(np.max(np.abs(divergence(v).values)))}
    if u is not None:
        from .norms import cm_norm

        xmin, xmax, ymin, ymax = grid.extent
        P = (xmax - xmin) + (ymax - ymin)
        c1, c2 = cm_norm(chi, 1), cm_norm(chi, 2)
        C = 1.0 + 2.0 * c1 + P * c2
        e1, e2 = vector_cm_norm(u - u1, 1), vector_cm_norm(u - u2, 1)
        err = vector_cm_norm(u - v, 1)
        info.update(C_chi=C, chi_C1=c1, chi_C2=c2, P=P, err_u1=e1, err_u2=e2, err=err, bound=C * (e1 + e2))
    v.info = info
    return v


# ---------------------------------------------------------------- sharpness


def koch_target(koch: KochCurve, grid: Grid, dec=None):
    """The curve as a compact set, the jet f = arc parameter (zero gradient), its extension F and u."""
    K = make_compact_set([koch.polyline()], grid)
    pts = K.points()
    _, s = koch.polyline().project(pts)
    jet = Jet.constant_values(pts, s, 1)
    dec = whitney_decompose(K) if dec is None else dec
    F = whitney_extend(jet, dec, 1, grid)
    return K, jet, F, perp_gradient(F), dec


def sharpness_certificate(gamma: float, candidates, koch: KochCurve, K: CompactSet, F: ScalarField,
                          jet: Jet | None = None, const_tol: float = 1e-9, n_pairs: int = 20000,
                          seed: int = 0) -> dict:
    """Lower bounds on ||v - u||_{C^0} for candidates v vanishing near the curve, u = perp_gradient(F).

    For each candidate the potential Phi is constant on K, so F - Phi
    oscillates on K by osc_K F; a segment between its extreme points z0, z1
    gives ||v - u||_{C^0} >= osc_K(F - Phi) / |z1 - z0| and no constant is
    closer than gap = osc_K(F - Phi) / 2 to F - Phi on K.
    """
    dist = distance_field(K).values
    pts = K.points()
    u = perp_gradient(F)
    out = {"gamma": gamma, "theta": koch.theta, "a": koch.a, "candidates": []}
    for n, v in enumerate(candidates):
        gap_supp = support_gap(v, dist)
        if not gap_supp > 0:
            raise ValueError(f"candidate {n} is supported on the curve")
        phi = stream_potential(v, corner=farthest_corner(v.grid, v.support_nodes() | u.support_nodes()))
        on_k = phi.values[K.mask]
        osc_phi = float(on_k.max() - on_k.min())
        if osc_phi > const_tol * max(1.0, float(np.max(np.abs(on_k)))):
            raise ValueError(f"candidate {n} potential is not constant on the curve (osc {osc_phi:.3e})")
        diff = F.values[K.mask] - on_k
        a, b = int(np.argmin(diff)), int(np.argmax(diff))
        osc = float(diff[b] - diff[a])
        length = float(np.hypot(*(pts[b] - pts[a])))
        out["candidates"].append({
            "index": n, "support_gap": gap_supp, "potential_osc_on_K": osc_phi, "gap": osc / 2.0,
            "c0_lower_bound": osc / length, "c0_distance": float(max(np.max(np.abs((v - u).u1)), np.max(np.abs((v - u).u2)))),
        })
    if jet is not None:
        rng = np.random.default_rng(seed)
        I = rng.integers(0, len(jet), n_pairs)
        J = rng.integers(0, len(jet), n_pairs)
        keep = I != J
        d = np.hypot(*(jet.points[I[keep]] - jet.points[J[keep]]).T)
        df = np.abs(jet.values[I[keep], 0] - jet.values[J[keep], 0])
        # pairs closer than a few cells compare tube nodes of the same segment
        far = d > 4 * K.grid.h
        out["jet_holder_constant"] = float(np.max(df[far] / d[far] ** (1.0 + gamma))) if far.any() else 0.0
    out["min_gap"] = min(c["gap"] for c in out["candidates"]) if out["candidates"] else float("nan")
    return out


def truncation_candidates(F: ScalarField, K: CompactSet, widths) -> list:
    """The zero field and perp_gradient(F (1 - rho_w)) for each width w."""
    dist = distance_field(K).values
    out = [VectorField2.zeros(F.grid)]
    for w in widths:
        rho = smooth_cutoff(K, w, dist)
        out.append(perp_gradient(ScalarField(F.grid, F.values * (1.0 - rho.values))))
    return out


# ---------------------------------------------------------------- fixtures


def plateau_step(d, t0: float, w: float):
    """S((d - t0) / w): 0 for d <= t0, 1 for d >= t0 + w, C^infinity in between."""
    return _smooth_step((np.asarray(d) - t0) / w)


def two_disk_fixture(n: int = 512, lo: float = -1.0, hi: float = 1.0, r: float = 0.25, c: float = 0.5,
                     t0: float = 0.02, w: float = 0.25):
    """Two disks at (+-c, 0); potential 1 near the right disk, 0 near the left, flat on both."""
    from .geometry import Disk

    grid = Grid.square(lo, hi, n)
    disks = [Disk((-c, 0.0), r), Disk((c, 0.0), r)]
    K = make_compact_set(disks, grid)
    X, Y = grid.mesh()
    d2 = np.hypot(X - c, Y) - r
    psi = ScalarField(grid, 1.0 - plateau_step(d2, t0, w))
    return grid, K, psi, perp_gradient(psi)
