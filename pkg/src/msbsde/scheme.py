"""Multistep backward sweep on a space grid.

Each layer ``n`` needs spline interpolants of the ``K = max(ky, kz)`` layers
after it. Per grid point we evaluate all conditional expectations with one
stencil pass per layer offset, solve the explicit ``z`` equation and then
the implicit ``y`` equation by Picard iteration.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _kernels
from .exceptions import InvalidArgumentError, NumericalDomainError, ResourceLimitError
from .grid import MAX_GRID_POINTS, SpaceGrid, TimeGrid, balance_space_grid, build_time_grid
from .interp import SplineHistory, build_interpolant, fd_derivatives_2d
from .quadrature import grid_offsets, make_stencil, tensor_rule

_TABLE_Y = {
    1: "1/2 1/2",
    2: "1/6 2/3 1/6",
    3: "1/8 3/8 3/8 1/8",
    4: "1/12 1/3 1/6 1/3 1/12",
    5: "41/600 19/75 107/600 107/600 19/75 41/600",
    6: "19/336 3/14 15/112 4/21 15/112 3/14 19/336",
}
_TABLE_Z = {
    1: "1/2 1/2",
    2: "5/12 2/3 -1/12",
    3: "3/8 19/24 -5/24 1/24",
    4: "35/96 5/6 -13/48 1/12 -1/96",
    5: "131/360 151/180 -103/360 37/360 -1/45 1/360",
    6: "163/448 47/56 -129/448 3/28 -37/1344 1/168 -1/1344",
}

#: Points per work unit. Fixed, so that batching never depends on threads.
CHUNK_POINTS = 1024
#: Cap on the number of fine bootstrap steps.
MAX_FINE_STEPS = 1 << 20
NONCONVERGED_CHANGE = 1e-6


@dataclass(frozen=True)
class SchemeWeights:
    ky: int
    kz: int
    gamma_y: tuple
    gamma_z: tuple

    @property
    def K(self) -> int:
        return max(self.ky, self.kz)

    @property
    def gy(self) -> np.ndarray:
        return np.array([float(g) for g in self.gamma_y])

    @property
    def gz(self) -> np.ndarray:
        return np.array([float(g) for g in self.gamma_z])


def scheme_weights(ky: int, kz: int) -> SchemeWeights:
    """Exact rational weight rows for ``ky`` y-layers and ``kz`` z-layers."""
    for name, k in (("ky", ky), ("kz", kz)):
        if int(k) != k or not 1 <= k <= 6:
            raise InvalidArgumentError(f"{name} must be in 1..6, got {k}")
    gy = tuple(Fraction(s) for s in _TABLE_Y[int(ky)].split())
    gz = tuple(Fraction(s) for s in _TABLE_Z[int(kz)].split())
    return SchemeWeights(int(ky), int(kz), gy, gz)


@dataclass
class LayerValues:
    """Solution on every knot of layer ``n``: ``y`` (P, m) and ``z`` (P, m, d)."""

    n: int
    t: float
    y: np.ndarray
    z: np.ndarray


@dataclass
class CondExpBundle:
    """Conditional expectations for a batch of ``n`` base points.

    ey_far (n, m); ez (kz, n, m, d); ef (ky, n, m); efdw (kz, n, m, d).
    """

    ey_far: np.ndarray
    ez: np.ndarray
    ef: np.ndarray
    efdw: np.ndarray




@dataclass(frozen=True)
class BootstrapOptions:
    """How the starting layers of the multistep sweep are produced.

    ``method="fine"`` marches the one-step scheme with the uniform step
    ``min(dt**2, dt**((ky+1)/2))`` (or ``dt / substeps`` when given).

    ``method="extrapolated"`` marches it with ``substeps`` steps per coarse
    interval (default 4 in 1-D, 2 in 2-D), then with twice and four times as
    many, and combines the three runs by Richardson extrapolation so the
    first- and second-order terms of the step error cancel. When the
    terminal condition has a kink, the interval next to maturity gets
    ``4 * substeps`` steps graded quadratically towards maturity, which
    keeps the error expansion valid while the solution is still rough.

    ``refine`` divides the space step of the bootstrap grid; results are
    restricted to the coarse knots.
    """

    method: str = "extrapolated"
    substeps: int | None = None
    refine: int | None = None
    max_fine_steps: int = MAX_FINE_STEPS

    def __post_init__(self):
        if self.method not in ("fine", "extrapolated"):
            raise InvalidArgumentError(f"unknown bootstrap method {self.method!r}")
        for name in ("substeps", "refine"):
            v = getattr(self, name)
            if v is not None and (isinstance(v, bool) or int(v) != v or v < 1):
                raise InvalidArgumentError(f"bootstrap {name} must be a positive integer, got {v}")

    def resolved_refine(self, d: int) -> int:
        if self.refine is not None:
            return int(self.refine)
        return 2 if (d == 1 and self.method == "extrapolated") else 1

    def levels(self, dt: float, ky: int, d: int = 1) -> tuple:
        """Base fine steps per coarse interval for each run."""
        if self.method == "fine":
            if self.substeps is not None:
                return (int(self.substeps),)
            fine = min(dt * dt, dt ** ((ky + 1) / 2))
            return (max(1, math.ceil(dt / fine * (1 - 1e-12))),)
        if self.substeps is not None:
            s = int(self.substeps)
        else:
            s = 4 if d == 1 else 2
        return (s, 2 * s, 4 * s)


def fine_mesh(dt: float, intervals: int, steps: int, graded: bool):
    """Fine steps over ``intervals`` coarse intervals going back from maturity.

    Returns ``(tau, marks)``: time to maturity after each fine step and the
    step indices (1-based) that land on coarse layers.
    """
    if graded:
        n1 = 4 * steps
        tau = [dt * (k / n1) ** 2 for k in range(1, n1 + 1)]
    else:
        tau = [dt * k / steps for k in range(1, steps + 1)]
    marks = [len(tau)]
    for c in range(1, intervals):
        tau += [dt * (c + k / steps) for k in range(1, steps + 1)]
        marks.append(len(tau))
    return np.array(tau), marks


@dataclass
class SolverConfig:
    ky: int = 3
    kz: int = 3
    N: int = 128
    L: int = 32
    picard_max: int = 30
    picard_tol: float = 1e-14
    r: int = 4
    threads: int = 1
    domain: tuple | None = None
    smoothing: bool | None = None
    M: int | None = None
    eval_point: tuple | None = None
    max_points: int = MAX_GRID_POINTS
    bootstrap: BootstrapOptions = field(default_factory=BootstrapOptions)

    def validate(self):
        scheme_weights(self.ky, self.kz)
        for name in ("N", "L", "picard_max", "r", "threads"):
            v = getattr(self, name)
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {v}")
        if self.N < max(self.ky, self.kz):
            raise InvalidArgumentError(
                f"N={self.N} is smaller than the number of scheme layers {max(self.ky, self.kz)}")
        if not self.picard_tol >= 0:
            raise InvalidArgumentError(f"picard_tol must be >= 0, got {self.picard_tol}")
        if self.M is not None and (int(self.M) != self.M or self.M < 4):
            raise InvalidArgumentError(f"M must be an integer >= 4, got {self.M}")
        return self


@dataclass
class SolveResult:
    """Layer-0 solution plus diagnostics.

    ``w_eval`` is the evaluation knot in Brownian coordinates and ``x_eval``
    the corresponding state at ``t0``.
    """

    y0: np.ndarray
    z0: np.ndarray
    w_eval: np.ndarray
    x_eval: np.ndarray
    layer0: LayerValues
    grid: SpaceGrid
    time_grid: TimeGrid
    timings: dict
    picard: list = field(default_factory=list)
    nonconverged: list = field(default_factory=list)
    spline_builds: int = 0
    bootstrap_steps: int = 0
    start_layer: int = 0
    interpolants: tuple = ()

    @property
    def picard_avg(self) -> float:
        """Mean Picard iterations per point over the main sweep."""
        return float(np.mean([p["mean"] for p in self.picard])) if self.picard else 0.0


# ------------------------------------------------------------------ pieces

@dataclass(frozen=True)
class _Offset:
    table: object  # GridOffsets
    dw: np.ndarray  # (S, d) Brownian increments


class _Context:
    """Read-only state shared by the point sweep of one time step size."""

    def __init__(self, problem, grid, dt, weights, L):
        self.problem = problem
        self.grid = grid
        self.dt = dt
        self.weights = weights
        rule = tensor_rule(L, grid.d)
        self.w = np.ascontiguousarray(rule.normalized_weights)
        self.offsets = []
        for j in range(1, weights.K + 1):
            st = make_stencil(j, dt, rule)
            self.offsets.append(_Offset(grid_offsets(st, grid), st.increments))


def _check_finite(F, t, X, Y, Z):
    bad = ~np.isfinite(F)
    if bad.any():
        p, s = np.argwhere(bad.reshape(F.shape[0], F.shape[1], -1).any(-1))[0]
        raise NumericalDomainError(
            f"driver returned a non-finite value at t={t!r}, x={X[p, s].tolist()}, "
            f"y={Y[p, s].tolist()}, z={Z[p, s].tolist()}")


def _mean(values, w):
    """Stencil mean over axis 1 of ``values`` (n, S, ...) -> (n, ...)."""
    n, S = values.shape[:2]
    tail = values.shape[2:]
    flat = np.ascontiguousarray(np.moveaxis(values.reshape(n, S, -1), 2, 0))
    out = np.empty((flat.shape[0], n))
    for c in range(flat.shape[0]):
        out[c] = _kernels.stencil_mean(flat[c], w)
    return out.T.reshape((n,) + tail)


def conditional_expectations(hist_y, hist_z, ctx: _Context, base, t_n: float) -> CondExpBundle:
    """All expectations needed at knots ``base`` (n, d) of layer ``n``.

    ``hist_y[j-1]`` and ``hist_z[j-1]`` interpolate layer ``n + j``. For each
    offset ``j`` the stencil is evaluated once and reused for ``E[y]``,
    ``E[z]``, ``E[f]`` and ``E[f dW]``.
    """
    p = ctx.problem
    m, d = p.m, p.d
    wts = ctx.weights
    ky, kz = wts.ky, wts.kz
    n = base.shape[0]
    w_base = np.asarray(ctx.grid.x_min) + base * ctx.grid.dx
    ey_far = None
    ez = np.empty((kz, n, m, d))
    ef = np.empty((ky, n, m))
    efdw = np.empty((kz, n, m, d))
    for j in range(1, wts.K + 1):
        off = ctx.offsets[j - 1]
        Y = np.moveaxis(hist_y[j - 1].stencil(base, off.table), 0, -1)  # (n, S, m)
        Z = np.moveaxis(hist_z[j - 1].stencil(base, off.table), 0, -1).reshape(n, -1, m, d)
        if j == ky:
            ey_far = _mean(Y, ctx.w)
        if j <= kz:
            ez[j - 1] = _mean(Z, ctx.w)
        t_j = t_n + j * ctx.dt
        X = p.state(t_j, w_base[:, None, :] + off.dw[None])
        F = np.asarray(p.driver(t_j, X, Y, Z), dtype=float)
        _check_finite(F, t_j, X, Y, Z)
        if j <= ky:
            ef[j - 1] = _mean(F, ctx.w)
        if j <= kz:
            efdw[j - 1] = _mean(F[..., :, None] * off.dw[None, :, None, :], ctx.w)
    return CondExpBundle(ey_far, ez, ef, efdw)


def step_z(bundle: CondExpBundle, weights: SchemeWeights) -> np.ndarray:
    """Explicit z update, componentwise."""
    g = weights.gz
    acc = bundle.ez[0].copy()
    for j in range(1, weights.kz + 1):
        acc += g[j] * (bundle.efdw[j - 1] - bundle.ez[j - 1])
    return acc / g[0]


def step_y_picard(bundle: CondExpBundle, weights: SchemeWeights, z, driver, t_n, x, dt,
                  p_max: int = 30, tol: float = 1e-14):
    """Picard iteration for the implicit y update.

    ``x`` holds the states of the base points. Each point stops as soon as
    its own successive change is at most ``tol``. Returns
    ``(y, iterations, final_change)`` with per-point arrays.
    """
    g = weights.gy
    ky = weights.ky
    rhs = bundle.ey_far.copy()
    for j in range(1, ky + 1):
        rhs += ky * dt * g[j] * bundle.ef[j - 1]
    coef = ky * dt * g[0]
    y = bundle.ey_far.copy()
    n = y.shape[0]
    iters = np.zeros(n, dtype=np.int64)
    change = np.full(n, np.inf)
    active = np.arange(n)
    for _ in range(p_max):
        xa, ya, za = x[active], y[active], z[active]
        fy = np.asarray(driver(t_n, xa, ya, za), dtype=float)
        _check_finite(fy[:, None], t_n, xa[:, None], ya[:, None], za[:, None])
        new = rhs[active] + coef * fy
        delta = np.max(np.abs(new - ya), axis=-1)
        y[active] = new
        iters[active] += 1
        change[active] = delta
        active = active[delta > tol]
        if active.size == 0:
            break
    return y, iters, change


def _sweep(ctx: _Context, hist_y, hist_z, t_n, picard_max, picard_tol, executor, timers):
    """Solve one layer at every knot, chunk by chunk."""
    grid = ctx.grid
    P = grid.size
    index = np.indices(grid.shape).reshape(grid.d, -1).T.astype(np.int64)
    x_all = ctx.problem.state(t_n, grid.points())
    starts = range(0, P, CHUNK_POINTS)

    def work(start):
        sl = slice(start, min(start + CHUNK_POINTS, P))
        t0 = time.perf_counter()
        bundle = conditional_expectations(hist_y, hist_z, ctx, index[sl], t_n)
        t1 = time.perf_counter()
        z = step_z(bundle, ctx.weights)
        y, it, ch = step_y_picard(bundle, ctx.weights, z, ctx.problem.driver, t_n, x_all[sl],
                                  ctx.dt, picard_max, picard_tol)
        t2 = time.perf_counter()
        return y, z, it, ch, t1 - t0, t2 - t1

    parts = list(executor.map(work, starts)) if executor else [work(s) for s in starts]
    y = np.concatenate([p[0] for p in parts])
    z = np.concatenate([p[1] for p in parts])
    it = np.concatenate([p[2] for p in parts])
    ch = np.concatenate([p[3] for p in parts])
    timers["expect"] += sum(p[4] for p in parts)
    timers["update"] += sum(p[5] for p in parts)
    return y, z, it, ch


def _build(layer: LayerValues, grid: SpaceGrid, counter: list):
    m, d = layer.y.shape[1], grid.d
    ys = build_interpolant(layer.y.reshape(grid.shape + (m,)), grid)
    zs = build_interpolant(layer.z.reshape(grid.shape + (m * d,)), grid)
    counter[0] += 2
    return ys, zs


def terminal_layer(problem, grid: SpaceGrid, time_grid: TimeGrid, smoothing: bool | None = None) -> LayerValues:
    """``y = g`` and ``z = d g / d w`` on the knots, mollified near a kink if enabled."""
    from .problems import smooth_terminal

    smooth = (problem.smoothing if smoothing is None else smoothing) and problem.kink is not None
    T = time_grid.T
    m, d = problem.m, problem.d
    w = grid.points()

    def gflat(v):
        return np.asarray(problem.terminal(problem.state(T, v)), dtype=float).reshape(v.shape[:-1] + (m,))

    def kink(v):
        return problem.kink(problem.state(T, v))

    y = gflat(w)
    if smooth:
        y = smooth_terminal(y, grid, kink, gflat)
    if problem.terminal_z is not None:
        def zflat(v):
            return np.asarray(problem.terminal_z(problem.state(T, v)),
                              dtype=float).reshape(v.shape[:-1] + (m * d,))

        z = zflat(w)
        if smooth:
            z = smooth_terminal(z, grid, kink, zflat)
        z = z.reshape(-1, m, d)
    else:
        z = _grid_gradient(y, grid)
    for name, v in (("y", y), ("z", z)):
        if not np.all(np.isfinite(v)):
            raise NumericalDomainError(f"terminal {name} is not finite on the grid")
    return LayerValues(time_grid.N, T, y, z)


def _grid_gradient(y, grid):
    """Gradient of interpolated terminal values at the knots, (P, m, d)."""
    m = y.shape[1]
    if grid.d == 1:
        sp = build_interpolant(y.reshape(grid.shape + (m,)), grid)
        b = sp.coefs[:, :, 1]  # (m, M-1)
        last = b[:, -1] + grid.dx * (2 * sp.coefs[:, -1, 2] + 3 * grid.dx * sp.coefs[:, -1, 3])
        return np.concatenate([b, last[:, None]], axis=1).T[:, :, None]
    if grid.d == 2:
        fx, fy, _ = fd_derivatives_2d(y.reshape(grid.shape + (m,)), grid)
        return np.stack([fx.reshape(-1, m), fy.reshape(-1, m)], axis=-1)
    raise InvalidArgumentError(f"gradients are implemented for d <= 2, got d={grid.d}")


class _Stepper:
    def __init__(self, problem, grid, dt, weights, L, picard_max, picard_tol, executor, timers):
        self.ctx = _Context(problem, grid, dt, weights, L)
        self.picard_max = picard_max
        self.picard_tol = picard_tol
        self.executor = executor
        self.timers = timers

    def __call__(self, n, t_n, hist_y, hist_z):
        y, z, it, ch = _sweep(self.ctx, hist_y, hist_z, t_n, self.picard_max, self.picard_tol,
                              self.executor, self.timers)
        bad = int(np.count_nonzero(ch > NONCONVERGED_CHANGE))
        stats = {"n": n, "mean": float(it.mean()), "max": int(it.max()), "nonconverged": bad}
        return LayerValues(n, t_n, y, z), stats


def skips_terminal(problem) -> bool:
    """Whether the multistep sweep starts below the terminal layer.

    A kinked terminal condition is only ever integrated by the narrow
    stencils of the fine one-step bootstrap; wide multistep stencils cannot
    resolve it.
    """
    return problem.kink is not None


def _refined(grid: SpaceGrid, rho: int) -> SpaceGrid:
    return grid if rho == 1 else SpaceGrid(grid.x_min, grid.dx / rho, (grid.M - 1) * rho + 1)


def _restrict(layer: LayerValues, fine: SpaceGrid, rho: int) -> LayerValues:
    if rho == 1:
        return layer
    sl = (slice(None, None, rho),) * fine.d
    y = layer.y.reshape(fine.shape + layer.y.shape[1:])[sl]
    z = layer.z.reshape(fine.shape + layer.z.shape[1:])[sl]
    return LayerValues(layer.n, layer.t, y.reshape((-1,) + layer.y.shape[1:]),
                       z.reshape((-1,) + layer.z.shape[1:]))


def _one_step_march(problem, time_grid, grid, terminal, intervals, steps, graded, L,
                    picard_max, picard_tol, executor, timers):
    """One-step scheme on :func:`fine_mesh`; returns coarse layers, latest time first."""
    tau, marks = fine_mesh(time_grid.dt, intervals, steps, graded)
    steppers = {}
    out = []
    cur = terminal
    counter = [0]
    N, T = time_grid.N, time_grid.T
    prev = 0.0
    for k, tk in enumerate(tau, start=1):
        h = tk - prev
        prev = tk
        if h not in steppers:
            steppers[h] = _Stepper(problem, grid, h, scheme_weights(1, 1), L, picard_max,
                                   picard_tol, executor, timers)
        ys, zs = _build(cur, grid, counter)
        cur, _ = steppers[h](N, T - tk, SplineHistory(1, [ys]), SplineHistory(1, [zs]))
        if k in marks:
            c = marks.index(k) + 1
            cur = LayerValues(N - c, time_grid.time(N - c), cur.y, cur.z)
            out.append(cur)
    return out, len(tau)


def bootstrap_initial_layers(problem, time_grid: TimeGrid, grid: SpaceGrid, ky: int, kz: int,
                             L: int = 32, picard_max: int = 30, picard_tol: float = 1e-14,
                             smoothing=None, options: BootstrapOptions | None = None,
                             executor=None, timers=None):
    """Starting layers of the multistep sweep, earliest time first.

    With ``K = max(ky, kz)`` these are layers ``N-K+1 .. N`` (layer ``N``
    being the terminal condition) or, when the terminal condition has a
    kink, layers ``N-K .. N-1``. Layers below ``N`` come from the one-step
    scheme with sub-steps (see :class:`BootstrapOptions`).
    Returns ``(layers, fine_steps)``.
    """
    options = options or BootstrapOptions()
    timers = timers if timers is not None else _new_timers()
    K = max(ky, kz)
    skip = skips_terminal(problem)
    intervals = K if skip else K - 1
    if skip and time_grid.N < K + 1:
        raise InvalidArgumentError(
            f"a kinked terminal condition needs N >= K+1 = {K + 1}, got N={time_grid.N}")
    coarse_terminal = None if skip else terminal_layer(problem, grid, time_grid, smoothing)
    if intervals == 0:
        return [coarse_terminal], 0

    levels = options.levels(time_grid.dt, ky, grid.d)
    graded = skip and options.method == "extrapolated"
    total = sum(len(fine_mesh(time_grid.dt, intervals, s, graded)[0]) for s in levels)
    if total > options.max_fine_steps:
        raise ResourceLimitError(
            f"bootstrap needs {total} fine steps ({levels[0]} per coarse step), "
            f"cap is {options.max_fine_steps}")
    rho = options.resolved_refine(grid.d)
    fine = _refined(grid, rho)
    if fine.size > MAX_GRID_POINTS:
        raise ResourceLimitError(f"refined bootstrap grid has {fine.size} points")
    terminal = terminal_layer(problem, fine, time_grid, smoothing)
    runs = [_one_step_march(problem, time_grid, fine, terminal, intervals, s, graded, L,
                            picard_max, picard_tol, executor, timers)[0] for s in levels]
    if len(runs) == 1:
        layers = runs[0]
    else:
        # errors c1 h + c2 h^2 cancel for h, h/2, h/4
        layers = [LayerValues(a.n, a.t, (8 * c.y - 6 * b.y + a.y) / 3, (8 * c.z - 6 * b.z + a.z) / 3)
                  for a, b, c in zip(*runs)]
    layers = [_restrict(layer, fine, rho) for layer in layers]
    if coarse_terminal is not None:
        layers = [coarse_terminal] + layers
    return layers[::-1], total


def _new_timers():
    return {"points": 0.0, "interp": 0.0, "expect": 0.0, "update": 0.0, "bootstrap": 0.0}


def evaluation_index(grid: SpaceGrid, eval_point=None) -> tuple:
    """Knot nearest ``eval_point`` (Brownian coordinates; origin by default)."""
    w = np.zeros(grid.d) if eval_point is None else eval_point
    return grid.nearest_index(w)


def make_grids(problem, config: SolverConfig):
    """Time grid and balanced (or explicitly sized) space grid for a run."""
    tg = build_time_grid(problem.t0, problem.T, config.N)
    domain = problem.domain if config.domain is None else config.domain
    if config.M is None:
        grid = balance_space_grid(tg.dt, config.ky, config.kz, config.r, domain, problem.d,
                                  config.max_points)
    else:
        lo, hi = domain
        lo = np.broadcast_to(np.asarray(lo, dtype=float), (problem.d,))
        hi = np.broadcast_to(np.asarray(hi, dtype=float), (problem.d,))
        grid = SpaceGrid(tuple(lo), float(hi[0] - lo[0]) / config.M, int(config.M))
    return tg, grid


def solve_backward(problem, config: SolverConfig) -> SolveResult:
    """Run the full sweep and return the solution at the evaluation knot of layer 0."""
    config.validate()
    t_start = time.perf_counter()
    timers = _new_timers()
    weights = scheme_weights(config.ky, config.kz)
    K = weights.K
    tg, grid = make_grids(problem, config)

    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        t0 = time.perf_counter()
        layers, fine_steps = bootstrap_initial_layers(
            problem, tg, grid, config.ky, config.kz, config.L, config.picard_max,
            config.picard_tol, config.smoothing, config.bootstrap, executor, _new_timers())
        timers["bootstrap"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        step = _Stepper(problem, grid, tg.dt, weights, config.L, config.picard_max,
                        config.picard_tol, executor, timers)
        timers["points"] += time.perf_counter() - t0

        counter = [0]
        hist_y, hist_z = SplineHistory(K), SplineHistory(K)
        t0 = time.perf_counter()
        for layer in layers[::-1]:  # latest time first; the earliest ends up in front
            ys, zs = _build(layer, grid, counter)
            hist_y.push(ys)
            hist_z.push(zs)
        timers["interp"] += time.perf_counter() - t0

        picard, nonconv = [], []
        layer = layers[0]
        start = layers[0].n - 1
        for n in range(start, -1, -1):
            try:
                layer, stats = step(n, tg.time(n), hist_y, hist_z)
            except NumericalDomainError as exc:
                raise NumericalDomainError(f"layer {n}: {exc}") from exc
            picard.append(stats)
            if stats["nonconverged"]:
                nonconv.append(n)
            t0 = time.perf_counter()
            ys, zs = _build(layer, grid, counter)
            hist_y.push(ys)
            hist_z.push(zs)
            timers["interp"] += time.perf_counter() - t0
    finally:
        if executor is not None:
            executor.shutdown()

    if nonconv:
        warnings.warn(f"Picard iteration did not converge to {NONCONVERGED_CHANGE:g} "
                      f"on layers {nonconv[:5]}{'...' if len(nonconv) > 5 else ''}",
                      RuntimeWarning, stacklevel=2)
    idx = evaluation_index(grid, config.eval_point)
    flat = int(np.ravel_multi_index(idx, grid.shape))
    w_eval = grid.knot(idx)
    timers["total"] = time.perf_counter() - t_start
    return SolveResult(
        y0=layer.y[flat].copy(), z0=layer.z[flat].copy(), w_eval=w_eval,
        x_eval=np.asarray(problem.state(tg.t0, w_eval), dtype=float), layer0=layer, grid=grid,
        time_grid=tg, timings=timers, picard=picard, nonconverged=nonconv,
        spline_builds=counter[0], bootstrap_steps=fine_steps, start_layer=start,
        interpolants=(hist_y[0], hist_z[0]))
