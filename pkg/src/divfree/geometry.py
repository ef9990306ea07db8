"""Compact sets on grids: rasterized primitives, distances, neighbourhoods,
preimage covers, and the Koch-type curve used for the sharpness example."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage, optimize
from scipy.spatial import cKDTree

from .fields import Grid, ScalarField

FOUR = ndimage.generate_binary_structure(2, 1)
TUBE = 0.75  # polyline rasterization radius in units of h


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cx + r, cy - r, cy + r

    def rasterize(self, grid: Grid) -> np.ndarray:
        X, Y = grid.mesh()
        cx, cy = self.center
        return (X - cx) ** 2 + (Y - cy) ** 2 <= self.radius**2

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.maximum(np.hypot(pts[:, 0] - self.center[0], pts[:, 1] - self.center[1]) - self.radius, 0.0)


@dataclass(frozen=True)
class Point:
    xy: tuple

    def bbox(self):
        return self.xy[0], self.xy[0], self.xy[1], self.xy[1]

    def rasterize(self, grid: Grid) -> np.ndarray:
        # a point rarely hits a node exactly, so it claims the nearest node
        mask = np.zeros(grid.dims, dtype=bool)
        i, j = grid.nearest_index([self.xy])
        mask[i[0], j[0]] = True
        return mask

    def distance(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.hypot(pts[:, 0] - self.xy[0], pts[:, 1] - self.xy[1])


@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ValueError("polyline needs at least two 2D vertices")
        object.__setattr__(self, "vertices", v)

    def bbox(self):
        v = self.vertices
        return v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max()

    @cached_property
    def _cum(self):
        seg = np.hypot(*np.diff(self.vertices, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def project(self, pts, chunk: int = 4096):
        """Distance to the polyline and arc-length parameter (in [0, 1]) of the nearest point."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        a = self.vertices[:-1]
        d = self.vertices[1:] - a
        dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
        seglen = np.sqrt(dd)
        best = np.full(len(pts), np.inf)
        par = np.zeros(len(pts))
        for s in range(0, len(a), chunk):
            A, D, L = a[s:s + chunk], d[s:s + chunk], dd[s:s + chunk]
            for b in range(0, len(pts), max(1, 2_000_000 // len(A))):
                P = pts[b:b + max(1, 2_000_000 // len(A))]
                rel = P[:, None, :] - A[None, :, :]
                t = np.clip(np.einsum("pik,ik->pi", rel, D) / L, 0.0, 1.0)
                diff = rel - t[..., None] * D[None, :, :]
                dist = np.hypot(diff[..., 0], diff[..., 1])
                k = np.argmin(dist, axis=1)
                dk = dist[np.arange(len(P)), k]
                upd = dk < best[b:b + len(P)]
                idx = np.nonzero(upd)[0] + b
                best[idx] = dk[upd]
                seg = k[upd] + s
                par[idx] = (self._cum[seg] + t[upd, k[upd]] * seglen[seg]) / self.length
        return best, par

    def rasterize(self, grid: Grid) -> np.ndarray:
        mask = np.zeros(grid.dims, dtype=bool)
        r = TUBE * grid.h
        x0, x1, y0, y1 = self.bbox()
        i0 = max(int(np.floor((x0 - r - grid.origin[0]) / grid.h)), 0)
        i1 = min(int(np.ceil((x1 + r - grid.origin[0]) / grid.h)) + 1, grid.dims[0])
        j0 = max(int(np.floor((y0 - r - grid.origin[1]) / grid.h)), 0)
        j1 = min(int(np.ceil((y1 + r - grid.origin[1]) / grid.h)) + 1, grid.dims[1])
        if i0 >= i1 or j0 >= j1:
            return mask
        I, J = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
        dist, _ = self.project(grid.points((I.ravel(), J.ravel())))
        mask[i0:i1, j0:j1] = (dist <= r).reshape(I.shape)
        return mask

    def distance(self, pts) -> np.ndarray:
        return self.project(pts)[0]


@dataclass
class CompactSet:
    grid: Grid
    mask: np.ndarray
    primitives: tuple = ()
    components: np.ndarray = field(default=None, repr=False)
    n_components: int = 0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.shape != self.grid.dims:
            raise ValueError("mask shape does not match grid")
        self.components, self.n_components = ndimage.label(self.mask, structure=FOUR)

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def points(self) -> np.ndarray:
        return self.grid.points(self.mask)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Masked nodes with a 4-neighbour outside the mask."""
        inner = ndimage.binary_erosion(self.mask, structure=FOUR, border_value=0)
        return self.mask & ~inner

    @cached_property
    def diam(self) -> float:
        pts = self.grid.points(self.boundary)
        if len(pts) < 2:
            return 0.0
        if len(pts) > 3000:
            try:
                from scipy.spatial import ConvexHull

                pts = pts[ConvexHull(pts).vertices]
            except Exception:
                pts = pts[np.linspace(0, len(pts) - 1, 3000).astype(int)]
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(-1)).max())

    def component_masks(self):
        return [self.components == c for c in range(1, self.n_components + 1)]


def make_compact_set(primitives, grid: Grid) -> CompactSet:
    """Union of rasterized primitives; a node belongs to a shape iff it lies in the closed shape."""
    prims = tuple(primitives)
    mask = np.zeros(grid.dims, dtype=bool)
    xmin, xmax, ymin, ymax = grid.extent
    for k, prim in enumerate(prims):
        bx0, bx1, by0, by1 = prim.bbox()
        if not (bx0 > xmin and bx1 < xmax and by0 > ymin and by1 < ymax):
            raise ValueError(f"primitive {k} ({prim!r}) is not inside the grid interior {grid.extent}")
        mask |= prim.rasterize(grid)
    return CompactSet(grid, mask, prims)


def distance_field(K: CompactSet, grid: Grid | None = None) -> ScalarField:
    """Exact Euclidean distance from every node to the nearest masked node."""
    if grid is not None and grid != K.grid:
        raise ValueError("distance_field grid must match the set's grid")
    if K.empty:
        raise ValueError("distance to empty set undefined")
    d = ndimage.distance_transform_edt(~K.mask, sampling=K.grid.h)
    return ScalarField(K.grid, d)


def neighborhood(K: CompactSet, delta: float) -> CompactSet:
    """Open delta-neighbourhood {x : dist(x, K) < delta}, always containing K."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return CompactSet(K.grid, K.mask.copy(), K.primitives)
    d = distance_field(K).values
    return CompactSet(K.grid, K.mask | (d < delta), K.primitives)


@dataclass(eq=False)
class KochCurve:
    a: float
    order: int
    alpha: float
    vertices: np.ndarray

    @property
    def theta(self) -> float:
        return abs(np.log(self.a) / np.log(4.0))

    @property
    def gamma(self) -> float:
        """Exponent 1/theta - 1 of the associated sharpness example."""
        return 1.0 / self.theta - 1.0

    def polyline(self) -> Polyline:
        return Polyline(self.vertices)

    def param(self, s) -> np.ndarray:
        """Constant-speed parametrization g_k: [0, 1] -> R^2."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        n = len(self.vertices) - 1
        t = s * n
        k = np.minimum(np.floor(t).astype(int), n - 1)
        frac = (t - k)[..., None]
        return self.vertices[k] * (1 - frac) + self.vertices[k + 1] * frac

    def holder_band(self, n_pairs: int = 10_000, seed: int = 0) -> dict:
        """Range of |g(s) - g(t)| / |s - t|^theta over random parameter pairs."""
        rng = np.random.default_rng(seed)
        s = rng.uniform(0, 1, n_pairs)
        # log-uniform separations so that every scale down to one segment is probed
        gap = 10.0 ** rng.uniform(np.log10(max(4.0**-self.order, 1e-6)), 0, n_pairs)
        t = np.clip(s + gap * rng.choice([-1, 1], n_pairs), 0, 1)
        keep = np.abs(s - t) > 0
        s, t = s[keep], t[keep]
        r = np.hypot(*(self.param(s) - self.param(t)).T) / np.abs(s - t) ** self.theta
        lo, hi = float(r.min()), float(r.max())
        return {"min_ratio": lo, "max_ratio": hi, "C": max(hi, 1.0 / lo)}


def koch_angle(a: float) -> float:
    """Turning angle alpha with a * (2 + 2 cos alpha) = 1, solved by bisection."""
    if not 0.25 <= a < 0.5:
        raise ValueError(f"segment ratio a must lie in [1/4, 1/2), got {a}")
    if a == 0.25:
        return 0.0
    return optimize.bisect(lambda t: a * (2 + 2 * np.cos(t)) - 1.0, 0.0, np.pi / 2, xtol=1e-12)


def koch_curve(a: float, order: int) -> KochCurve:
    """Order-k Koch-type polyline from (0, 0) to (1, 0) with 4^k segments of length a^k.

    Each segment is replaced by four copies scaled by a, turning by
    +alpha, -2 alpha, +alpha between consecutive copies.
    """
    if order < 0:
        raise ValueError("order must be non-negative")
    alpha = koch_angle(a)
    gen = a * np.array([1.0, np.exp(1j * alpha), np.exp(-1j * alpha), 1.0])
    seg = np.array([1.0 + 0j])
    for _ in range(order):
        seg = (seg[:, None] * gen[None, :]).ravel()
    z = np.concatenate([[0j], np.cumsum(seg)])
    return KochCurve(a, order, alpha, np.column_stack([z.real, z.imag]))


def separated_preimage_cover(psi: ScalarField, K: CompactSet, intervals, eps: float | None = None) -> list:
    """Grid-disjoint open sets U_i around K with psi(U_i) inside interval i.

    U_i is the union of the connected pieces of {psi in I_i} (intersected with
    the eps-neighbourhood of K when eps is given) that meet K, with nodes closer
    than 2h to another piece removed so that the pieces keep a gap of 2h.
    """
    iv = sorted((float(l), float(r)) for l, r in intervals)
    for (l0, r0), (l1, r1) in zip(iv, iv[1:]):
        if r0 >= l1:
            raise ValueError(f"intervals ({l0}, {r0}) and ({l1}, {r1}) must have disjoint closures")
    vals = psi.values[K.mask]
    hit = np.zeros(vals.shape, dtype=bool)
    for l, r in iv:
        hit |= (vals > l) & (vals < r)
    if not hit.all():
        raise ValueError(f"value {vals[~hit][0]!r} of psi on K lies in no interval")
    allowed = np.ones(K.grid.dims, dtype=bool) if eps is None else neighborhood(K, eps).mask
    raw = []
    for l, r in iv:
        pre = (psi.values > l) & (psi.values < r) & allowed
        lab, _ = ndimage.label(pre, structure=FOUR)
        keep = np.unique(lab[K.mask & pre])
        raw.append(np.isin(lab, keep[keep > 0]))
    h = K.grid.h
    out = []
    for i, U in enumerate(raw):
        others = np.zeros_like(U)
        for k, V in enumerate(raw):
            if k != i:
                others |= V
        if others.any():
            d = ndimage.distance_transform_edt(~others, sampling=h)
            U = U & (d >= 2 * h - 1e-12 * h)
        if (K.mask & raw[i] & ~U).any():
            raise ValueError("preimage pieces of different intervals are closer than 2h on K")
        out.append(CompactSet(K.grid, U))
    return out
