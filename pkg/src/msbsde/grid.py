"""Uniform time and space discretizations.

The space grid is a tensor product of identical 1-D grids. Knots are
``x_min + i * dx`` for ``i = 0 .. M-1``; ``x_max`` is the last knot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError, ResourceLimitError

#: Default cap on the total number of space grid points (M ** d).
MAX_GRID_POINTS = 1 << 24


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    N: int

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.N

    def time(self, n):
        """Time of layer ``n`` (also accepts fractional layer indices)."""
        return self.t0 + n * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.N + 1) * self.dt


def build_time_grid(t0: float, T: float, N: int) -> TimeGrid:
    if not N >= 1 or int(N) != N:
        raise InvalidArgumentError(f"need at least one time step, got N={N}")
    if not T > t0:
        raise InvalidArgumentError(f"horizon must be positive, got [{t0}, {T}]")
    return TimeGrid(float(t0), float(T), int(N))


@dataclass(frozen=True)
class SpaceGrid:
    """Uniform tensor grid with ``M`` knots and spacing ``dx`` per dimension."""

    x_min: tuple
    dx: float
    M: int

    def __post_init__(self):
        if self.M < 2:
            raise InvalidArgumentError(f"a grid needs at least 2 knots, got M={self.M}")
        if not self.dx > 0:
            raise InvalidArgumentError(f"grid spacing must be positive, got {self.dx}")
        object.__setattr__(self, "x_min", tuple(float(v) for v in np.atleast_1d(self.x_min)))

    @classmethod
    def from_bounds(cls, lo, hi, M: int) -> "SpaceGrid":
        """Grid whose first and last knots are ``lo`` and ``hi``."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape)
        widths = hi - lo
        if np.any(widths <= 0):
            raise InvalidArgumentError("need x_min < x_max in every dimension")
        if not np.allclose(widths, widths[0], rtol=1e-12, atol=0):
            raise InvalidArgumentError("all dimensions must share the same width")
        return cls(tuple(lo), float(widths[0]) / (M - 1), int(M))

    @property
    def d(self) -> int:
        return len(self.x_min)

    @property
    def x_max(self) -> tuple:
        return tuple(lo + (self.M - 1) * self.dx for lo in self.x_min)

    @property
    def shape(self) -> tuple:
        return (self.M,) * self.d

    @property
    def size(self) -> int:
        return self.M ** self.d

    def axis(self, k: int = 0) -> np.ndarray:
        return self.x_min[k] + np.arange(self.M) * self.dx

    def points(self) -> np.ndarray:
        """All knots, shape ``(M**d, d)`` in C order of the multi-index."""
        axes = np.meshgrid(*(self.axis(k) for k in range(self.d)), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def knot(self, index) -> np.ndarray:
        index = np.atleast_1d(index)
        return np.asarray(self.x_min) + index * self.dx

    def nearest_index(self, x) -> tuple:
        """Multi-index of the knot nearest to ``x`` (clipped into the grid)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        s = (x - np.asarray(self.x_min)) / self.dx
        return tuple(int(v) for v in np.clip(np.rint(s), 0, self.M - 1))


@dataclass(frozen=True)
class CellLocation:
    """Left-boundary cell index per dimension plus the local coordinate.

    ``fraction`` is the position inside the cell in units of ``dx`` (0 at
    the left knot, 1 at the right knot). Clamped coordinates sit on the
    nearest boundary knot.
    """

    index: np.ndarray
    fraction: np.ndarray
    clamped: np.ndarray


def balance_space_grid(dt: float, ky: int, kz: int, r: int = 4, domain=(-16.0, 16.0),
                       d: int | None = None, max_points: int = MAX_GRID_POINTS) -> SpaceGrid:
    """Pick the space step so that ``dx**r == dt**(q+1)``, ``q = min(ky+1, kz)``.

    ``domain`` is ``(lo, hi)`` with scalars or length-``d`` sequences. The
    number of knots is the smallest even integer with ``M * dx_target >=
    width``; the grid spacing becomes ``width / M`` and the knots run from
    ``lo`` to ``hi - dx``, so the box centre is always a knot.
    """
    if r < 1:
        raise InvalidArgumentError(f"interpolation order must be >= 1, got {r}")
    if not dt > 0:
        raise InvalidArgumentError(f"time step must be positive, got {dt}")
    lo, hi = domain
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    if d is not None and lo.size == 1:
        lo = np.repeat(lo, d)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape)
    widths = hi - lo
    if np.any(widths <= 0):
        raise InvalidArgumentError("need x_min < x_max in every dimension")
    if not np.allclose(widths, widths[0], rtol=1e-12, atol=0):
        raise InvalidArgumentError("all dimensions must share the same width")
    width = float(widths[0])

    q = min(ky + 1, kz)
    dx_target = dt ** ((q + 1) / r)
    # guard against ceil(4096.0000000001) from the power above
    ratio = width / dx_target
    M = math.ceil(ratio - 1e-9 * ratio)
    M += M % 2
    M = max(M, 4)
    total = M ** lo.size
    if total > max_points:
        raise ResourceLimitError(
            f"balanced grid needs M={M} points per dimension ({total} in total), "
            f"cap is {max_points}")
    return SpaceGrid(tuple(lo), width / M, M)


def locate_cell(grid: SpaceGrid, X) -> CellLocation:
    """Locate points by direct truncation of ``(X - x_min) / dx``.

    ``X`` has shape ``(..., d)``; for ``d == 1`` a scalar or a plain array of
    coordinates is accepted too. Coordinates outside the knot range are
    clamped to the boundary knot.
    """
    X = np.asarray(X, dtype=float)
    if grid.d == 1 and (X.ndim == 0 or X.shape[-1] != 1):
        X = X[..., None]
    s = (X - np.asarray(grid.x_min)) / grid.dx
    # a knot rebuilt as x_min + i*dx can land an ulp below i; snap it back
    near = np.rint(s)
    s = np.where(np.abs(s - near) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(s)), near, s)
    top = grid.M - 1
    low = s < 0
    high = s > top
    s = np.clip(s, 0, top)
    index = np.minimum(np.floor(s), top - 1).astype(np.int64)
    return CellLocation(index, s - index, low | high)
