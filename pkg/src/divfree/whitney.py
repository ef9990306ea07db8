"""Whitney decomposition of the complement of a compact set, with its
partition of unity, nearest points and touching-cube neighbours.

Cubes are dyadic squares of a root box (x0, y0, side); a cube at level L has
side side * 2^-L and integer position (ix, iy).  K is the node set of a
CompactSet; distances from cubes to K are exact for that node set.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .geometry import CompactSet, Disk

SQ2 = np.sqrt(2.0)
DILATE = 9.0 / 8.0
LO, HI = SQ2, 4.0 * SQ2


def _smooth_step(u, deriv: int = 0):
    """C^infinity step S, 0 for u <= 0 and 1 for u >= 1, or its first/second derivative.

    S = sigma(-rho) with sigma the logistic function and rho(u) = 1/u - 1/(1 - u).
    """
    u = np.asarray(u, dtype=float)
    inner = (u > 0) & (u < 1)
    v = np.where(inner, u, 0.5)
    rho = 1.0 / v - 1.0 / (1.0 - v)
    with np.errstate(over="ignore"):
        sig = np.where(inner, 1.0 / (1.0 + np.exp(rho)), 0.0)
    if deriv == 0:
        return np.where(u >= 1, 1.0, sig)
    ds = sig * (1.0 - sig)
    r1 = -1.0 / v**2 - 1.0 / (1.0 - v) ** 2
    if deriv == 1:
        return np.where(inner, -ds * r1, 0.0)
    r2 = 2.0 / v**3 - 2.0 / (1.0 - v) ** 3
    return np.where(inner, ds * (1.0 - 2.0 * sig) * r1 * r1 - ds * r2, 0.0)


def bump(t, deriv: int = 0):
    """Plateau profile in cube-normalized offset t: 1 for |t| <= 7/16, 0 for |t| >= 9/16."""
    t = np.asarray(t, dtype=float)
    u = (DILATE / 2 - np.abs(t)) * 8.0
    if deriv == 0:
        return _smooth_step(u)
    if deriv == 1:
        return -8.0 * np.sign(t) * _smooth_step(u, 1)
    return 64.0 * _smooth_step(u, 2)


def _morton(x, y, bits):
    code = np.zeros(len(x), dtype=np.uint64)
    x = x.astype(np.uint64)
    y = y.astype(np.uint64)
    for b in range(bits):
        code |= ((x >> np.uint64(b)) & np.uint64(1)) << np.uint64(2 * b)
        code |= ((y >> np.uint64(b)) & np.uint64(1)) << np.uint64(2 * b + 1)
    return code


def _cube_distance(tree, pts, lo, s):
    """Exact distance from each square [lo, lo + s]^2 to the point set, and the nearest point."""
    n = len(lo)
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    c = lo + s / 2.0
    dc, _ = tree.query(c)
    lists = tree.query_ball_point(c, dc + s / SQ2 * (1 + 1e-12) + 1e-15)
    lens = np.fromiter((len(l) for l in lists), dtype=int, count=n)
    cand = np.concatenate([np.asarray(l, dtype=int) for l in lists]) if lens.sum() else np.zeros(0, dtype=int)
    owner = np.repeat(np.arange(n), lens)
    p = pts[cand]
    l0 = lo[owner]
    dx = np.maximum(np.maximum(l0[:, 0] - p[:, 0], p[:, 0] - (l0[:, 0] + s)), 0.0)
    dy = np.maximum(np.maximum(l0[:, 1] - p[:, 1], p[:, 1] - (l0[:, 1] + s)), 0.0)
    d = np.hypot(dx, dy)
    order = np.lexsort((cand, d, owner))
    first = np.searchsorted(owner[order], np.arange(n))
    return d[order][first], cand[order][first]


def _disk_cube_distance(disks, lo, s):
    """Exact distance from each square [lo, lo + s]^2 to a union of disks."""
    best = np.full(len(lo), np.inf)
    for q in disks:
        c = np.asarray(q.center, dtype=float)
        dx = np.maximum(np.maximum(lo[:, 0] - c[0], c[0] - (lo[:, 0] + s)), 0.0)
        dy = np.maximum(np.maximum(lo[:, 1] - c[1], c[1] - (lo[:, 1] + s)), 0.0)
        best = np.minimum(best, np.maximum(np.hypot(dx, dy) - q.radius, 0.0))
    return best


class _CellCounter:
    """Counts masked grid cells (cell = closed h-square around a node) meeting a rectangle."""

    def __init__(self, K: CompactSet):
        self.grid = K.grid
        m = K.mask.astype(np.int64)
        self.S = np.zeros((m.shape[0] + 1, m.shape[1] + 1), dtype=np.int64)
        self.S[1:, 1:] = m.cumsum(0).cumsum(1)

    def _count(self, i0, i1, j0, j1):
        nx, ny = self.grid.dims
        a0, a1 = np.clip(i0, 0, nx), np.clip(i1 + 1, 0, nx)
        b0, b1 = np.clip(j0, 0, ny), np.clip(j1 + 1, 0, ny)
        a1 = np.maximum(a1, a0)
        b1 = np.maximum(b1, b0)
        return self.S[a1, b1] - self.S[a0, b1] - self.S[a1, b0] + self.S[a0, b0]

    def classify(self, lo, s):
        g = self.grid
        h = g.h
        ox, oy = g.origin
        tol = 1e-9
        # cells meeting the closed cube
        ti0 = np.ceil((lo[:, 0] - h / 2 - ox) / h - tol).astype(int)
        ti1 = np.floor((lo[:, 0] + s + h / 2 - ox) / h + tol).astype(int)
        tj0 = np.ceil((lo[:, 1] - h / 2 - oy) / h - tol).astype(int)
        tj1 = np.floor((lo[:, 1] + s + h / 2 - oy) / h + tol).astype(int)
        touch = self._count(ti0, ti1, tj0, tj1) > 0
        # cells meeting the open cube; the cube is inside K when all of them are masked
        ii0 = np.floor((lo[:, 0] - h / 2 - ox) / h + tol).astype(int) + 1
        ii1 = np.ceil((lo[:, 0] + s + h / 2 - ox) / h - tol).astype(int) - 1
        ij0 = np.floor((lo[:, 1] - h / 2 - oy) / h + tol).astype(int) + 1
        ij1 = np.ceil((lo[:, 1] + s + h / 2 - oy) / h - tol).astype(int) - 1
        nx, ny = g.dims
        full = (ii1 - ii0 + 1) * (ij1 - ij0 + 1)
        in_grid = (ii0 >= 0) & (ij0 >= 0) & (ii1 < nx) & (ij1 < ny)
        inside = in_grid & (self._count(ii0, ii1, ij0, ij1) == full)
        return touch, inside


@dataclass
class WhitneyDecomposition:
    K: CompactSet
    box: tuple
    max_level: int
    level: np.ndarray
    ix: np.ndarray
    iy: np.ndarray
    dist: np.ndarray
    nearest: np.ndarray
    k_points: np.ndarray
    unresolved: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.level)

    @property
    def side(self) -> np.ndarray:
        return self.box[2] * 2.0 ** (-self.level.astype(float))

    @property
    def corner(self) -> np.ndarray:
        s = self.side
        return np.column_stack([self.box[0] + self.ix * s, self.box[1] + self.iy * s])

    @property
    def center(self) -> np.ndarray:
        return self.corner + self.side[:, None] / 2.0

    @property
    def nearest_xy(self) -> np.ndarray:
        return self.k_points[self.nearest]

    @cached_property
    def _neighbors(self):
        n = len(self)
        if n == 0:
            return []
        shift = (self.max_level - self.level).astype(np.int64)
        x0 = self.ix.astype(np.int64) << shift
        y0 = self.iy.astype(np.int64) << shift
        S = np.int64(1) << shift
        cen = np.column_stack([x0 + S / 2.0, y0 + S / 2.0])
        tree = cKDTree(cen)
        lists = tree.query_ball_point(cen, S.astype(float) * (1 + 1e-12), p=np.inf)
        lens = np.fromiter((len(l) for l in lists), dtype=int, count=n)
        I = np.repeat(np.arange(n), lens)
        J = np.concatenate([np.asarray(l, dtype=int) for l in lists])
        ok = (
            (I != J)
            & (x0[I] <= x0[J] + S[J])
            & (x0[J] <= x0[I] + S[I])
            & (y0[I] <= y0[J] + S[J])
            & (y0[J] <= y0[I] + S[I])
        )
        I, J = I[ok], J[ok]
        key = np.unique(np.concatenate([I * n + J, J * n + I]).astype(np.int64))
        I, J = key // n, key % n
        split = np.searchsorted(I, np.arange(n + 1))
        return [J[split[k]:split[k + 1]] for k in range(n)]

    def to_csv(self, path) -> None:
        c = self.center
        y = self.nearest_xy
        nb = [len(v) for v in self._neighbors]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "center_x", "center_y", "side", "level", "y_k_x", "y_k_y", "n_neighbors"])
            for k in range(len(self)):
                w.writerow([k, repr(float(c[k, 0])), repr(float(c[k, 1])), repr(float(self.side[k])), int(self.level[k]),
                            repr(float(y[k, 0])), repr(float(y[k, 1])), nb[k]])


def neighbors(dec: WhitneyDecomposition, k: int) -> np.ndarray:
    """Indices of cubes whose closed boundary meets cube k (k excluded)."""
    if not 0 <= k < len(dec):
        raise IndexError(f"cube index {k} out of range for {len(dec)} cubes")
    return dec._neighbors[k]


def default_box(K: CompactSet, margin: float = 1.0) -> tuple:
    """Power-of-two multiple of h square containing the grid domain and K_margin.

    K's extent comes from its primitives' exact bounding boxes (joined with its
    nodes) and the corner is snapped to a lattice of step side/64 anchored at the
    grid origin, so grids of the same domain with power-of-two spacings get the
    same dyadic cubes.
    """
    g = K.grid
    pts = K.points()
    k_lo, k_hi = pts.min(axis=0), pts.max(axis=0)
    for q in K.primitives:
        x0, x1, y0, y1 = q.bbox()
        k_lo = np.minimum(k_lo, [x0, y0])
        k_hi = np.maximum(k_hi, [x1, y1])
    origin = np.asarray(g.origin)
    lo = np.minimum(origin, k_lo - margin)
    hi = np.maximum(origin + g.h * np.asarray(g.dims), k_hi + margin)
    side = g.h * 2.0 ** np.ceil(np.log2(float(np.max(hi - lo)) / g.h))
    while True:
        # cube corners stay on nodes while the step is a multiple of h
        step = max(g.h, side / 64.0)
        corner = origin + step * np.floor(((lo + hi) / 2.0 - side / 2.0 - origin) / step)
        if np.all(corner <= lo) and np.all(corner + side >= hi):
            return float(corner[0]), float(corner[1]), float(side)
        side *= 2.0


def whitney_decompose(K: CompactSet, box=None, max_level=None, margin: float = 1.0) -> WhitneyDecomposition:
    """Quadtree Whitney covering of the complement of K inside ``box``.

    A cube is split while dist(Q, K) < sqrt(2) l(Q) and accepted otherwise;
    children of split cubes then satisfy dist <= 4 sqrt(2) l automatically.
    Cubes still too close at ``max_level`` (the depth cap) are returned in
    ``unresolved`` and are not part of the covering.  By default the cap is
    the first level with side <= h/4, which resolves every node off K.
    """
    if K.empty:
        raise ValueError("cannot decompose the complement of an empty set")
    g = K.grid
    if box is None:
        box = default_box(K, margin)
    bx, by, side = (float(v) for v in box)
    pts_all = K.points()
    need_lo = pts_all.min(axis=0) - margin
    need_hi = pts_all.max(axis=0) + margin
    if bx > need_lo[0] or by > need_lo[1] or bx + side < need_hi[0] or by + side < need_hi[1]:
        raise ValueError(
            f"box too small: it must contain [{need_lo[0]:.6g}, {need_hi[0]:.6g}] x "
            f"[{need_lo[1]:.6g}, {need_hi[1]:.6g}]"
        )
    if max_level is None:
        max_level = int(np.ceil(np.log2(side / (g.h / 4.0))))
    bpts = g.points(K.boundary)
    btree = cKDTree(bpts)
    atree = cKDTree(pts_all)
    counter = _CellCounter(K)
    # boundary index for nearest points found in the all-node tree
    bidx = -np.ones(g.dims, dtype=int)
    bidx[K.boundary] = np.arange(len(bpts))
    all_i, all_j = np.nonzero(K.mask)
    # on disk sets, cubes of side >= 2h also test against the exact disks, so the
    # coarse covering does not depend on where the raster boundary falls; the
    # raster differs from the disks by < h, which keeps children within 4 sqrt(2)
    disks = K.primitives if K.primitives and all(isinstance(q, Disk) for q in K.primitives) else ()

    acc = {"level": [], "ix": [], "iy": [], "dist": [], "nearest": []}
    unres = {"level": [], "ix": [], "iy": []}
    ix = np.zeros(1, dtype=np.int64)
    iy = np.zeros(1, dtype=np.int64)
    for L in range(max_level + 1):
        if len(ix) == 0:
            break
        s = side * 2.0**-L
        lo = np.column_stack([bx + ix * s, by + iy * s])
        touch, inside = counter.classify(lo, s)
        keep = ~inside
        ix, iy, lo, touch = ix[keep], iy[keep], lo[keep], touch[keep]
        dist = np.zeros(len(ix))
        near = -np.ones(len(ix), dtype=int)
        free = ~touch
        dist[free], near[free] = _cube_distance(btree, bpts, lo[free], s)
        if s <= g.h / 2:
            sel = touch
            d_t, n_t = _cube_distance(atree, pts_all, lo[sel], s)
            dist[sel] = d_t
            # nearest mask node of a cube outside the cell union is a boundary node
            near[sel] = bidx[all_i[n_t], all_j[n_t]]
        else:
            dist[touch] = 0.0
        test = dist if not disks or s < 2 * g.h else np.minimum(dist, _disk_cube_distance(disks, lo, s))
        ok = test >= LO * s
        if L == 0 and ok.any() and (dist[ok] > HI * s).any():
            raise ValueError("box too small: root cube is farther than the Whitney bound from K")
        ok &= near >= 0
        acc["level"].append(np.full(ok.sum(), L))
        acc["ix"].append(ix[ok])
        acc["iy"].append(iy[ok])
        acc["dist"].append(dist[ok])
        acc["nearest"].append(near[ok])
        rest = ~ok
        if L == max_level:
            unres["level"].append(np.full(rest.sum(), L))
            unres["ix"].append(ix[rest])
            unres["iy"].append(iy[rest])
            break
        cx, cy = ix[rest], iy[rest]
        ix = np.concatenate([2 * cx, 2 * cx + 1, 2 * cx, 2 * cx + 1])
        iy = np.concatenate([2 * cy, 2 * cy, 2 * cy + 1, 2 * cy + 1])

    cat = {k: np.concatenate(v) if v else np.zeros(0) for k, v in acc.items()}
    level = cat["level"].astype(int)
    cix = cat["ix"].astype(np.int64)
    ciy = cat["iy"].astype(np.int64)
    shift = (max_level - level).astype(np.int64)
    order = np.argsort(_morton(cix << shift, ciy << shift, max_level + 1), kind="stable")
    return WhitneyDecomposition(
        K=K,
        box=(bx, by, side),
        max_level=max_level,
        level=level[order],
        ix=cix[order],
        iy=ciy[order],
        dist=cat["dist"][order].astype(float),
        nearest=cat["nearest"][order].astype(int),
        k_points=bpts,
        unresolved={k: np.concatenate(v).astype(int) if v else np.zeros(0, dtype=int) for k, v in unres.items()},
    )


D_INDEX = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


class PartitionOfUnity:
    """phi_k = psi_k / sum_j psi_j with psi_k a product plateau bump on the 9/8-dilate of Q_k.

    Derivatives up to order 2 are analytic (chain rule on the exp-based step,
    quotient rule for the normalization), so they do not depend on any grid.
    """

    def __init__(self, dec: WhitneyDecomposition):
        self.dec = dec
        self.levels = {}
        for L in np.unique(dec.level):
            idx = np.nonzero(dec.level == L)[0]
            key = dec.ix[idx] * (np.int64(1) << np.int64(L + 1)) + dec.iy[idx]
            o = np.argsort(key)
            self.levels[int(L)] = (key[o], idx[o])
        self._ktree = cKDTree(dec.K.points())

    def _locate(self, pts, dK=None):
        """(point index, cube index, normalized offset t) for every dilate containing a point."""
        dec = self.dec
        if dK is None:
            dK, _ = self._ktree.query(pts)
        out_p, out_k, out_t = [], [], []
        bx, by, side = dec.box
        for L, (keys, idx) in self.levels.items():
            s = side * 2.0**-L
            lo = (15.0 / 16.0) * LO * s * (1 - 1e-9)
            hi = (HI + DILATE * SQ2) * s * (1 + 1e-9)
            sel = np.nonzero((dK >= lo) & (dK <= hi))[0]
            if len(sel) == 0:
                continue
            q = (pts[sel] - [bx, by]) / s
            base = np.floor(q).astype(np.int64)
            frac = q - base
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    m = np.ones(len(sel), dtype=bool)
                    if dx == -1:
                        m &= frac[:, 0] < 1.0 / 16
                    elif dx == 1:
                        m &= frac[:, 0] > 15.0 / 16
                    if dy == -1:
                        m &= frac[:, 1] < 1.0 / 16
                    elif dy == 1:
                        m &= frac[:, 1] > 15.0 / 16
                    if not m.any():
                        continue
                    cx = base[m, 0] + dx
                    cy = base[m, 1] + dy
                    key = cx * (np.int64(1) << np.int64(L + 1)) + cy
                    pos = np.clip(np.searchsorted(keys, key), 0, len(keys) - 1)
                    hit = (keys[pos] == key) & (cx >= 0) & (cy >= 0)
                    if not hit.any():
                        continue
                    t = q[m][hit] - np.column_stack([cx[hit], cy[hit]]) - 0.5
                    inside = np.max(np.abs(t), axis=1) < DILATE / 2
                    out_p.append(sel[m][hit][inside])
                    out_k.append(idx[pos[hit]][inside])
                    out_t.append(t[inside])
        if not out_p:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros((0, 2))
        return np.concatenate(out_p), np.concatenate(out_k), np.concatenate(out_t)

    def contributions(self, points, order: int = 0, dK=None):
        """Sparse partition values at ``points``.

        Returns (P, Kc, phi, covered): contribution j is cube Kc[j] at point
        P[j]; ``phi`` maps each multi-index of order <= ``order`` (see
        D_INDEX) to D^l phi_k at those contributions, or is the plain value
        array when order = 0.  ``covered`` flags points lying in a closed cube.
        ``dK`` optionally supplies the distances from the points to K.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        P, Kc, t = self._locate(pts, dK)
        s = self.dec.side[Kc]
        covered = np.zeros(n, dtype=bool)
        covered[P[np.max(np.abs(t), axis=1) <= 0.5 + 1e-12]] = True
        b0 = [bump(t[:, 0]), bump(t[:, 1])]
        psi = {(0, 0): b0[0] * b0[1]}
        if order >= 1:
            b1 = [bump(t[:, 0], 1) / s, bump(t[:, 1], 1) / s]
            psi[(1, 0)] = b1[0] * b0[1]
            psi[(0, 1)] = b0[0] * b1[1]
        if order >= 2:
            b2 = [bump(t[:, 0], 2) / s**2, bump(t[:, 1], 2) / s**2]
            psi[(2, 0)] = b2[0] * b0[1]
            psi[(1, 1)] = b1[0] * b1[1]
            psi[(0, 2)] = b0[0] * b2[1]
        tot = {k: np.bincount(P, weights=v, minlength=n)[P] for k, v in psi.items()}
        S = tot[(0, 0)]
        phi = {(0, 0): psi[(0, 0)] / S}
        if order >= 1:
            for a in ((1, 0), (0, 1)):
                phi[a] = psi[a] / S - psi[(0, 0)] * tot[a] / S**2
        if order >= 2:
            for a, (i, j) in (((2, 0), ((1, 0), (1, 0))), ((1, 1), ((1, 0), (0, 1))), ((0, 2), ((0, 1), (0, 1)))):
                phi[a] = (
                    psi[a] / S
                    - (psi[i] * tot[j] + psi[j] * tot[i]) / S**2
                    - psi[(0, 0)] * tot[a] / S**2
                    + 2.0 * psi[(0, 0)] * tot[i] * tot[j] / S**3
                )
        return P, Kc, (phi if order > 0 else phi[(0, 0)]), covered

    def evaluate(self, k: int, points, l=(0, 0)) -> np.ndarray:
        """D^l phi_k at ``points`` for |l| <= 2."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        l = tuple(l)
        P, Kc, phi, _ = self.contributions(pts, order=sum(l))
        vals = phi if sum(l) == 0 else phi[l]
        out = np.zeros(len(pts))
        sel = Kc == k
        np.add.at(out, P[sel], vals[sel])
        return out

    def sum(self, points, dK=None) -> tuple:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        P, _, phi, covered = self.contributions(pts, dK=dK)
        return np.bincount(P, weights=phi, minlength=len(pts)), covered

    def derivative_constants(self, n_cubes: int = 48, n: int = 65) -> dict:
        """C(|l|) = max_k sup |D^l phi_k| l(Q_k)^|l| for |l| <= 2, sampled on the covered part of each dilate."""
        dec = self.dec
        if len(dec) == 0:
            return {"0": 0.0, "1": 0.0, "2": 0.0}
        ks = np.unique(np.linspace(0, len(dec) - 1, min(n_cubes, len(dec))).astype(int))
        C = np.zeros(3)
        for k in ks:
            s = dec.side[k]
            t = np.linspace(-DILATE / 2, DILATE / 2, n) * s
            X, Y = np.meshgrid(dec.center[k][0] + t, dec.center[k][1] + t, indexing="ij")
            pts = np.column_stack([X.ravel(), Y.ravel()])
            P, Kc, phi, covered = self.contributions(pts, order=2)
            # points outside every closed cube (inside K's cells or past the cap) are not covered
            sel = (Kc == k) & covered[P]
            C[0] = max(C[0], np.abs(phi[(0, 0)][sel]).max(initial=0.0))
            g = np.hypot(phi[(1, 0)][sel], phi[(0, 1)][sel])
            C[1] = max(C[1], g.max(initial=0.0) * s)
            hess = np.sqrt(phi[(2, 0)][sel] ** 2 + 2 * phi[(1, 1)][sel] ** 2 + phi[(0, 2)][sel] ** 2)
            C[2] = max(C[2], hess.max(initial=0.0) * s * s)
        return {str(i): float(C[i]) for i in range(3)}


def partition_of_unity(dec: WhitneyDecomposition) -> PartitionOfUnity:
    return PartitionOfUnity(dec)
