"""Spline interpolation on uniform grids.

1-D fields use not-a-knot cubic splines, 2-D fields bicubic Hermite patches
whose corner derivatives come from fourth-order finite differences. Several
fields sharing one grid are stacked along a trailing field axis so a whole
time layer (all ``y`` or all ``z`` components) is one coefficient set.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .exceptions import InvalidArgumentError, SingularSystemError
from .grid import SpaceGrid, locate_cell


@dataclass(frozen=True)
class TridiagonalSystem:
    """``sub[i] x[i-1] + main[i] x[i] + sup[i] x[i+1] = rhs[i]``.

    ``sub[0]`` and ``sup[-1]`` are ignored.
    """

    sub: np.ndarray
    main: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        n = len(self.main)
        if not (len(self.sub) == len(self.sup) == n == len(self.rhs)):
            raise InvalidArgumentError("diagonals and right-hand side must have equal length")

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        out = self.main.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        sub = self.sub.reshape(out.shape[:1] + (1,) * (x.ndim - 1))
        sup = self.sup.reshape(sub.shape)
        out[1:] += sub[1:] * x[:-1]
        out[:-1] += sup[:-1] * x[1:]
        return out


def solve_tridiagonal(system: TridiagonalSystem) -> np.ndarray:
    """Direct (Thomas) solve; ``rhs`` may carry extra trailing columns."""
    rhs = np.asarray(system.rhs, dtype=float)
    cols = rhs.reshape(rhs.shape[0], -1)
    x, ok = _kernels.thomas(np.asarray(system.sub, dtype=float),
                            np.asarray(system.main, dtype=float),
                            np.asarray(system.sup, dtype=float),
                            np.ascontiguousarray(cols))
    if not ok:
        raise SingularSystemError("zero pivot in tridiagonal elimination")
    return x.reshape(rhs.shape)


# ---------------------------------------------------------------- 1-D splines

@dataclass(frozen=True)
class CubicSplineCoeffs:
    """Per-interval ``a + b h + c h**2 + d h**3`` with ``h = x - x_j``.

    ``coefs`` has shape ``(F, M-1, 4)``; ``vector`` records whether the
    samples carried a field axis (and evaluation should keep it).
    """

    coefs: np.ndarray
    x_min: float
    dx: float
    vector: bool = False

    @property
    def M(self) -> int:
        return self.coefs.shape[1] + 1

    @property
    def nfields(self) -> int:
        return self.coefs.shape[0]

    def __call__(self, X):
        return eval_cubic_spline(self, X)

    def stencil(self, base, table, out=None):
        n = base.shape[0]
        if out is None:
            out = np.empty((self.nfields, n, table.size))
        _kernels.cubic_stencil(self.coefs, self.dx, base[:, 0], table.off[:, 0],
                               table.frac[:, 0], out)
        return out


def _not_a_knot_system(samples: np.ndarray, dx: float) -> TridiagonalSystem:
    # unknowns are the second derivatives at knots 1..M-2; the not-a-knot
    # conditions eliminate knots 0 and M-1, leaving 6 on the first/last rows
    n = samples.shape[0] - 2
    main = np.full(n, 4.0)
    main[0] = main[-1] = 6.0
    sub = np.ones(n)
    sup = np.ones(n)
    sub[-1] = 0.0
    sup[0] = 0.0
    rhs = 6.0 * (samples[2:] - 2.0 * samples[1:-1] + samples[:-2]) / dx ** 2
    return TridiagonalSystem(sub, main, sup, rhs)


def build_cubic_spline(samples, grid: SpaceGrid) -> CubicSplineCoeffs:
    """Not-a-knot cubic spline through ``samples`` (shape ``(M,)`` or ``(M, F)``)."""
    if grid.d != 1:
        raise InvalidArgumentError("cubic splines need a 1-D grid")
    samples = np.asarray(samples, dtype=float)
    vector = samples.ndim == 2
    y = samples if vector else samples[:, None]
    M = y.shape[0]
    if M != grid.M:
        raise InvalidArgumentError(f"got {M} samples for a grid of {grid.M} knots")
    if M < 4:
        raise InvalidArgumentError(f"not-a-knot splines need at least 4 knots, got {M}")
    h = grid.dx
    inner = solve_tridiagonal(_not_a_knot_system(y, h))
    sig = np.empty_like(y)
    sig[1:-1] = inner
    sig[0] = 2.0 * sig[1] - sig[2]
    sig[-1] = 2.0 * sig[-2] - sig[-3]
    coefs = np.empty((y.shape[1], M - 1, 4))
    coefs[..., 0] = y[:-1].T
    coefs[..., 1] = ((y[1:] - y[:-1]) / h - h * (2.0 * sig[:-1] + sig[1:]) / 6.0).T
    coefs[..., 2] = (sig[:-1] / 2.0).T
    coefs[..., 3] = ((sig[1:] - sig[:-1]) / (6.0 * h)).T
    return CubicSplineCoeffs(coefs, grid.x_min[0], h, vector)


def eval_cubic_spline(coeffs: CubicSplineCoeffs, X):
    """Evaluate at arbitrary coordinates; outside the knots the boundary value is used."""
    X = np.asarray(X, dtype=float)
    grid = SpaceGrid((coeffs.x_min,), coeffs.dx, coeffs.M)
    loc = locate_cell(grid, X[..., None])
    j = loc.index[..., 0]
    h = loc.fraction[..., 0] * coeffs.dx
    c = coeffs.coefs[:, j]  # (F, ..., 4)
    out = c[..., 0] + h * (c[..., 1] + h * (c[..., 2] + h * c[..., 3]))
    return np.moveaxis(out, 0, -1) if coeffs.vector else out[0]


# ---------------------------------------------------------------- 2-D patches

def _d4(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order first derivative along ``axis``; one-sided near the ends."""
    f = np.moveaxis(f, axis, 0)
    g = np.empty_like(f)
    g[2:-2] = f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]
    g[0] = -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
    g[1] = -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
    g[-2] = 3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]
    g[-1] = 25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]
    return np.moveaxis(g / (12.0 * h), 0, axis)


def fd_derivatives_2d(field, grid: SpaceGrid):
    """``(f_x, f_y, f_xy)`` of an ``(M, M[, F])`` field; ``f_xy`` is x then y."""
    field = np.asarray(field, dtype=float)
    if grid.d != 2:
        raise InvalidArgumentError("finite-difference derivatives need a 2-D grid")
    if field.shape[0] < 6 or field.shape[1] < 6:
        raise InvalidArgumentError(f"need at least 6 knots per dimension, got {field.shape[:2]}")
    fx = _d4(field, grid.dx, 0)
    fy = _d4(field, grid.dx, 1)
    fxy = _d4(fx, grid.dx, 1)
    return fx, fy, fxy


def _hermite_inverse() -> np.ndarray:
    # rows: value, d/du, d/dv, d2/dudv at the corners (0,0), (1,0), (0,1), (1,1)
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]
    B = np.zeros((16, 16))
    for kind in range(4):
        for c, (u, v) in enumerate(corners):
            row = 4 * kind + c
            for p in range(4):
                for q in range(4):
                    du = kind in (1, 3)
                    dv = kind in (2, 3)
                    cu = (p * u ** (p - 1) if p else 0.0) if du else u ** p
                    cv = (q * v ** (q - 1) if q else 0.0) if dv else v ** q
                    B[row, 4 * p + q] = cu * cv
    return np.rint(np.linalg.inv(B))


_HERMITE_INV = _hermite_inverse()


@dataclass(frozen=True)
class BicubicCoeffs:
    """``(F, M-1, M-1, 16)`` patch coefficients; entry ``4p+q`` multiplies ``u**p v**q``."""

    coefs: np.ndarray
    x_min: tuple
    dx: float
    vector: bool = False

    @property
    def M(self) -> int:
        return self.coefs.shape[1] + 1

    @property
    def nfields(self) -> int:
        return self.coefs.shape[0]

    def __call__(self, X):
        return eval_bicubic(self, X)

    def stencil(self, base, table, out=None):
        n = base.shape[0]
        if out is None:
            out = np.empty((self.nfields, n, table.size))
        _kernels.bicubic_stencil(self.coefs, base[:, 0], base[:, 1],
                                 table.off[:, 0], table.off[:, 1],
                                 table.frac[:, 0], table.frac[:, 1], out)
        return out


def build_bicubic(field, derivatives, grid: SpaceGrid) -> BicubicCoeffs:
    """Bicubic Hermite patches from samples and ``(f_x, f_y, f_xy)``."""
    field = np.asarray(field, dtype=float)
    vector = field.ndim == 3
    fx, fy, fxy = (np.asarray(a, dtype=float) for a in derivatives)
    if not vector:
        field, fx, fy, fxy = (a[..., None] for a in (field, fx, fy, fxy))
    coefs = np.stack([
        _kernels.bicubic_coefficients(
            np.ascontiguousarray(field[..., k]), np.ascontiguousarray(fx[..., k]),
            np.ascontiguousarray(fy[..., k]), np.ascontiguousarray(fxy[..., k]),
            grid.dx, _HERMITE_INV)
        for k in range(field.shape[-1])])
    return BicubicCoeffs(coefs, grid.x_min, grid.dx, vector)


def eval_bicubic(coeffs: BicubicCoeffs, X):
    """Evaluate at points of shape ``(..., 2)`` with per-dimension clamping."""
    X = np.asarray(X, dtype=float)
    grid = SpaceGrid(coeffs.x_min, coeffs.dx, coeffs.M)
    loc = locate_cell(grid, X)
    u = loc.fraction[..., 0]
    v = loc.fraction[..., 1]
    c = coeffs.coefs[:, loc.index[..., 0], loc.index[..., 1]]  # (F, ..., 16)
    acc = 0.0
    for p in range(3, -1, -1):
        row = c[..., 4 * p] + v * (c[..., 4 * p + 1] + v * (c[..., 4 * p + 2] + v * c[..., 4 * p + 3]))
        acc = acc * u + row
    return np.moveaxis(acc, 0, -1) if coeffs.vector else acc[0]


def build_interpolant(values, grid: SpaceGrid):
    """Coefficient set for a stacked field of shape ``grid.shape + (F,)``."""
    values = np.asarray(values, dtype=float)
    if grid.d == 1:
        return build_cubic_spline(values, grid)
    if grid.d == 2:
        return build_bicubic(values, fd_derivatives_2d(values, grid), grid)
    raise InvalidArgumentError(f"interpolation is implemented for d <= 2, got d={grid.d}")


# ---------------------------------------------------------------- history

class SplineHistory:
    """Coefficient sets of the last ``capacity`` layers, newest first."""

    def __init__(self, capacity: int, items=()):
        if capacity < 1:
            raise InvalidArgumentError(f"history capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._ring = deque(items, maxlen=self.capacity)

    def push(self, newest) -> "SplineHistory":
        self._ring.appendleft(newest)
        return self

    @property
    def full(self) -> bool:
        return len(self._ring) == self.capacity

    def __getitem__(self, j):
        return self._ring[j]

    def __len__(self):
        return len(self._ring)

    def __iter__(self):
        return iter(self._ring)


def shift_history(history: SplineHistory, newest) -> SplineHistory:
    """Drop the oldest set and insert ``newest`` at position 0."""
    return history.push(newest)
