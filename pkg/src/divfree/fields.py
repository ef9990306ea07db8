"""Uniform grids and the scalar and staggered vector fields that live on them.

Arrays are indexed ``[i, j]`` with ``i`` running along x1 and ``j`` along x2,
so node ``(i, j)`` sits at ``origin + h * (i, j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    origin: tuple
    spacing: float
    dims: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        dims = tuple(int(v) for v in self.dims)
        if len(origin) != 2 or len(dims) != 2:
            raise ValueError("grid origin and dims must have two entries")
        if not self.spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if min(dims) < 2:
            raise ValueError(f"grid needs at least 2 nodes per axis, got {dims}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", float(self.spacing))

    @classmethod
    def square(cls, lo: float, hi: float, n: int) -> "Grid":
        """n x n nodes spanning [lo, hi) with spacing (hi - lo) / n."""
        return cls((lo, lo), (hi - lo) / n, (n, n))

    @property
    def h(self) -> float:
        return self.spacing

    @property
    def shape(self) -> tuple:
        return self.dims

    @property
    def extent(self) -> tuple:
        """(xmin, xmax, ymin, ymax) of the node set."""
        x0, y0 = self.origin
        return (x0, x0 + (self.dims[0] - 1) * self.h, y0, y0 + (self.dims[1] - 1) * self.h)

    def axes(self):
        x0, y0 = self.origin
        return x0 + self.h * np.arange(self.dims[0]), y0 + self.h * np.arange(self.dims[1])

    def mesh(self):
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def points(self, index=None) -> np.ndarray:
        """Coordinates of nodes; ``index`` is a boolean mask or a pair of index arrays."""
        if index is None:
            index = np.ones(self.dims, dtype=bool)
        if isinstance(index, np.ndarray) and index.dtype == bool:
            index = np.nonzero(index)
        i, j = index
        return np.column_stack([self.origin[0] + self.h * np.asarray(i), self.origin[1] + self.h * np.asarray(j)])

    def nearest_index(self, pts) -> tuple:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        i = np.rint((pts[:, 0] - self.origin[0]) / self.h).astype(int)
        j = np.rint((pts[:, 1] - self.origin[1]) / self.h).astype(int)
        return i, j

    def inside(self, pts, margin: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        xmin, xmax, ymin, ymax = self.extent
        return (
            (pts[:, 0] > xmin + margin)
            & (pts[:, 0] < xmax - margin)
            & (pts[:, 1] > ymin + margin)
            & (pts[:, 1] < ymax - margin)
        )

    def offset(self, dx: float, dy: float, dims) -> "Grid":
        """Sub-grid with the same spacing shifted by (dx, dy) in units of h."""
        return Grid((self.origin[0] + dx * self.h, self.origin[1] + dy * self.h), self.h, dims)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "spacing": self.h, "dims": list(self.dims)}


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.dims:
            raise ValueError(f"values shape {self.values.shape} does not match grid dims {self.grid.dims}")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(fn(X, Y), grid.dims).astype(float))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.dims))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


def _vals(other):
    return other.values if isinstance(other, ScalarField) else other


@dataclass
class VectorField2:
    """Staggered (MAC) vector field attached to the node grid ``grid``.

    ``u1`` lives on vertical edges at ``(x_i, y_j + h/2)``, shape (nx, ny - 1);
    ``u2`` lives on horizontal edges at ``(x_i + h/2, y_j)``, shape (nx - 1, ny).
    """

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        nx, ny = self.grid.dims
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.shape != (nx, ny - 1) or self.u2.shape != (nx - 1, ny):
            raise ValueError(
                f"staggered shapes must be {(nx, ny - 1)} and {(nx - 1, ny)}, "
                f"got {self.u1.shape} and {self.u2.shape}"
            )

    @property
    def grid1(self) -> Grid:
        nx, ny = self.grid.dims
        return self.grid.offset(0.0, 0.5, (nx, ny - 1))

    @property
    def grid2(self) -> Grid:
        nx, ny = self.grid.dims
        return self.grid.offset(0.5, 0.0, (nx - 1, ny))

    @classmethod
    def from_functions(cls, grid: Grid, f1, f2) -> "VectorField2":
        nx, ny = grid.dims
        tmp = cls(grid, np.zeros((nx, ny - 1)), np.zeros((nx - 1, ny)))
        X1, Y1 = tmp.grid1.mesh()
        X2, Y2 = tmp.grid2.mesh()
        tmp.u1 = np.broadcast_to(f1(X1, Y1), X1.shape).astype(float)
        tmp.u2 = np.broadcast_to(f2(X2, Y2), X2.shape).astype(float)
        return tmp

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField2":
        nx, ny = grid.dims
        return cls(grid, np.zeros((nx, ny - 1)), np.zeros((nx - 1, ny)))

    def components(self):
        return ScalarField(self.grid1, self.u1), ScalarField(self.grid2, self.u2)

    def __add__(self, other):
        return VectorField2(self.grid, self.u1 + other.u1, self.u2 + other.u2)

    def __sub__(self, other):
        return VectorField2(self.grid, self.u1 - other.u1, self.u2 - other.u2)

    def __mul__(self, c):
        return VectorField2(self.grid, self.u1 * c, self.u2 * c)

    __rmul__ = __mul__

    def support_nodes(self, tol: float = 0.0) -> np.ndarray:
        """Boolean node mask of endpoints of edges carrying |u| > tol."""
        mask = np.zeros(self.grid.dims, dtype=bool)
        e1 = np.abs(self.u1) > tol
        e2 = np.abs(self.u2) > tol
        mask[:, :-1] |= e1
        mask[:, 1:] |= e1
        mask[:-1, :] |= e2
        mask[1:, :] |= e2
        return mask
