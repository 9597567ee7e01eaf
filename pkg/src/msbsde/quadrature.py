"""Gauss-Hermite rules and shifted quadrature stencils.

Conditional expectations of a function of ``W_{t+k dt} - W_t`` are computed
as ``pi**(-d/2) * sum_L w_L v(x + sqrt(2 k dt) a_L)`` with the physicists'
Hermite nodes ``a_L`` and weights ``w_L``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .exceptions import InvalidArgumentError

MAX_NODES = 64


@dataclass(frozen=True)
class HermiteRule:
    L: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class TensorRule:
    d: int
    L: int
    points: np.ndarray  # (L**d, d)
    weights: np.ndarray  # (L**d,)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def normalized_weights(self) -> np.ndarray:
        """Weights divided by ``pi**(d/2)``, with unit sum in stencil order."""
        return _unit_weights(self.L, self.d)


@lru_cache(maxsize=None)
def _unit_weights(L: int, d: int) -> np.ndarray:
    # A sum of 1 + eps would bias every expectation the same way and the
    # bias compounds over hundreds of layers, so the largest weights absorb
    # the rounding until the left-to-right sum is exactly one.
    w = tensor_rule(L, d).weights / math.pi ** (d / 2)
    w = w / math.fsum(w)
    order = np.argsort(-w, kind="stable")
    w[order[0]] += 1.0 - _running_sum(w)
    for i in order[:16]:
        side = None
        for _ in range(256):
            acc = _running_sum(w)
            if acc == 1.0:
                w.setflags(write=False)
                return w
            if side is not None and side != (acc > 1.0):
                break  # the sum jumps over one; try a smaller weight
            side = acc > 1.0
            w[i] = np.nextafter(w[i], -np.inf if side else np.inf)
    w.setflags(write=False)
    return w


def _running_sum(w) -> float:
    acc = 0.0
    for v in w.tolist():
        acc += v
    return acc


def _newton_nodes(L: int, tol: float = 1e-15, max_iter: int = 100):
    # Newton on the orthonormal Hermite recurrence; only the non-negative
    # half is iterated, the rest follows by symmetry.
    nodes = np.zeros(L)
    weights = np.zeros(L)
    pim4 = math.pi ** -0.25
    z = 0.0
    for i in range((L + 1) // 2):
        if i == 0:
            z = math.sqrt(2 * L + 1) - 1.85575 * (2 * L + 1) ** (-0.16667)
        elif i == 1:
            z -= 1.14 * L ** 0.426 / z
        elif i == 2:
            z = 1.86 * z - 0.86 * nodes[0]
        elif i == 3:
            z = 1.91 * z - 0.91 * nodes[1]
        else:
            z = 2.0 * z - nodes[i - 2]
        for _ in range(max_iter):
            p1, p2 = pim4, 0.0
            for j in range(1, L + 1):
                p3, p2 = p2, p1
                p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1) / j) * p3
            pp = math.sqrt(2.0 * L) * p2
            step = p1 / pp
            z -= step
            if abs(step) <= tol * max(1.0, abs(z)):
                break
        else:
            raise ArithmeticError(f"Hermite node {i} of L={L} did not converge")
        # derivative at the converged root for the weight
        p1, p2 = pim4, 0.0
        for j in range(1, L + 1):
            p3, p2 = p2, p1
            p1 = z * math.sqrt(2.0 / j) * p2 - math.sqrt((j - 1) / j) * p3
        pp = math.sqrt(2.0 * L) * p2
        nodes[i] = z
        nodes[L - 1 - i] = -z
        weights[i] = weights[L - 1 - i] = 2.0 / (pp * pp)
    if L % 2:
        nodes[L // 2] = 0.0
    return nodes[::-1].copy(), weights[::-1].copy()


@lru_cache(maxsize=None)
def hermite_rule(L: int) -> HermiteRule:
    """Gauss-Hermite rule with ``L`` nodes for the weight ``exp(-x**2)``."""
    if int(L) != L or not 1 <= L <= MAX_NODES:
        raise InvalidArgumentError(f"number of Hermite nodes must be in 1..{MAX_NODES}, got {L}")
    nodes, weights = _newton_nodes(int(L))
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return HermiteRule(int(L), nodes, weights)


@lru_cache(maxsize=None)
def tensor_rule(L: int, d: int) -> TensorRule:
    """Tensor product of ``d`` copies of the ``L``-node Hermite rule.

    The multi-index is enumerated in C order (last dimension fastest).
    """
    if d < 1:
        raise InvalidArgumentError(f"dimension must be >= 1, got {d}")
    rule = hermite_rule(L)
    grids = np.meshgrid(*([rule.nodes] * d), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([rule.weights] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return TensorRule(d, rule.L, points, weights)


@dataclass(frozen=True)
class ShiftedStencil:
    """Quadrature points around a base point for layer offset ``k``.

    ``offsets`` are added to the base coordinates; ``increments`` are the
    matching Brownian increments ``sqrt(2 k dt) a_L``. With a forward
    transform ``X = x + drift t + vol W`` the offsets become
    ``drift k dt + vol @ increment``.
    """

    k: int
    dt: float
    offsets: np.ndarray  # (S, d)
    increments: np.ndarray  # (S, d)
    base: tuple = ()
    origin: np.ndarray | None = field(default=None, compare=False)

    @property
    def size(self) -> int:
        return self.offsets.shape[0]

    @property
    def scale(self) -> float:
        return math.sqrt(2.0 * self.k * self.dt)

    @property
    def points(self) -> np.ndarray:
        if self.origin is None:
            raise InvalidArgumentError("stencil has no base point; use at()")
        return self.origin + self.offsets

    def at(self, grid, index) -> "ShiftedStencil":
        index = tuple(int(v) for v in np.atleast_1d(index))
        return replace(self, base=index, origin=grid.knot(index))


def make_stencil(k: int, dt: float, rule: TensorRule, drift=None, vol=None) -> ShiftedStencil:
    """Offsets for layer offset ``k``; independent of the base point."""
    if k < 1:
        raise InvalidArgumentError(f"layer offset must be >= 1, got {k}")
    increments = math.sqrt(2.0 * k * dt) * rule.points
    offsets = increments if vol is None else increments @ np.asarray(vol, dtype=float).T
    if drift is not None:
        offsets = offsets + np.asarray(drift, dtype=float) * (k * dt)
    return ShiftedStencil(int(k), float(dt), offsets, increments)


def shifted_points(grid, i, k: int, dt: float, rule: TensorRule, drift=None, vol=None) -> ShiftedStencil:
    """Stencil of ``L**d`` quadrature points around knot ``i``."""
    return make_stencil(k, dt, rule, drift, vol).at(grid, i)


def expectation(values, rule: TensorRule):
    """Weighted quadrature sum over the last axis of ``values``.

    The sum runs sequentially over the stencil so the result does not depend
    on how the leading axes are batched.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 0 or values.shape[-1] != rule.size:
        raise InvalidArgumentError(
            f"expected {rule.size} values per stencil, got shape {values.shape}")
    w = rule.normalized_weights
    acc = w[0] * values[..., 0]
    for s in range(1, rule.size):
        acc = acc + w[s] * values[..., s]
    return acc


@dataclass(frozen=True)
class GridOffsets:
    """A stencil expressed in grid units: integer cell shift plus fraction.

    Adding ``off`` to a knot's multi-index gives the cell holding the shifted
    point, ``frac`` its position in that cell, for every base knot at once.
    """

    off: np.ndarray  # (S, d) int64
    frac: np.ndarray  # (S, d) in [0, 1)

    @property
    def size(self) -> int:
        return self.off.shape[0]


def grid_offsets(stencil: ShiftedStencil, grid) -> GridOffsets:
    s = stencil.offsets / grid.dx
    off = np.floor(s)
    return GridOffsets(np.ascontiguousarray(off, dtype=np.int64), np.ascontiguousarray(s - off))
