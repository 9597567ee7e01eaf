"""Benchmark BSDEs with closed-form references.

Array conventions shared by every callable here: ``x`` has shape ``(..., d)``,
``y`` ``(..., m)`` and ``z`` ``(..., m, d)``; drivers return ``(..., m)``.
The solver grid lives in the Brownian coordinate ``w``. Drivers, terminal
functions and references take the state ``X = X_0 + drift t + vol @ w``,
which is ``w`` itself for the pure Brownian examples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, ndtr

from .exceptions import InvalidArgumentError
from .grid import SpaceGrid


@dataclass(frozen=True)
class Forward:
    """Affine forward state ``X_t = origin + drift * t + vol @ W_t``."""

    origin: np.ndarray
    drift: np.ndarray
    vol: np.ndarray
    kind: str = "identity"

    @classmethod
    def identity(cls, d: int) -> "Forward":
        return cls(np.zeros(d), np.zeros(d), np.eye(d))

    @classmethod
    def log_price(cls, spot, mu, vol) -> "Forward":
        vol = np.atleast_2d(np.asarray(vol, dtype=float))
        variance = np.sum(vol ** 2, axis=1)
        origin = np.log(np.asarray(spot, dtype=float).reshape(-1))
        return cls(origin, np.asarray(mu, dtype=float).reshape(-1) - variance / 2, vol, "log-price")

    @property
    def is_identity(self) -> bool:
        d = len(self.drift)
        return (not np.any(self.origin) and not np.any(self.drift)
                and np.array_equal(self.vol, np.eye(d)))

    def state(self, t, w):
        """State at time ``t`` for Brownian coordinates ``w`` (..., d)."""
        w = np.asarray(w, dtype=float)
        if self.is_identity:
            return w
        return self.origin + self.drift * t + w @ self.vol.T

    def brownian(self, t, x):
        """Inverse of :meth:`state`."""
        x = np.asarray(x, dtype=float)
        if self.is_identity:
            return x
        shifted = x - self.origin - self.drift * t
        return np.linalg.solve(self.vol, shifted.reshape(-1, len(self.drift)).T).T.reshape(x.shape)


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    m: int
    d: int
    T: float
    driver: Callable
    terminal: Callable
    domain: tuple
    terminal_z: Optional[Callable] = None
    analytic: Optional[Callable] = None
    forward: Forward = None
    smoothing: bool = False
    kink: Optional[Callable] = None
    t0: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.forward is None:
            object.__setattr__(self, "forward", Forward.identity(self.d))

    def with_options(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    @property
    def x0(self) -> np.ndarray:
        """State at ``t0`` on the Brownian origin."""
        return self.forward.state(self.t0, np.zeros(self.d))

    def state(self, t, w):
        return self.forward.state(t, w)


# ------------------------------------------------------------------ smoothing

def _bspline4(x):
    ax = np.abs(x)
    inner = (4.0 - 6.0 * ax ** 2 + 3.0 * ax ** 3) / 6.0
    outer = (2.0 - ax) ** 3 / 6.0
    return np.where(ax < 1.0, inner, np.where(ax < 2.0, outer, 0.0))


def smoothing_kernel(s):
    """Fourth-order mollifier on [-3, 3] whose Fourier symbol is
    ``sinc(w/2)**4 * (1 + 2/3 sin(w/2)**2)``; piecewise cubic between integers."""
    return 4.0 / 3.0 * _bspline4(s) - (_bspline4(s - 1.0) + _bspline4(s + 1.0)) / 6.0


_PIECES = np.arange(-3.0, 3.0)
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def _split_pieces(h_of_s, lead_shape):
    """Sub-intervals of the six unit pieces, split at a sign change of ``h``.

    Returns ``(a, b)`` of shape ``lead_shape + (6, 2)``.
    """
    left = np.broadcast_to(_PIECES, lead_shape + (6,)).copy()
    right = left + 1.0
    hl, hr = h_of_s(left), h_of_s(right)
    lo, hi = left.copy(), right.copy()
    cross = np.sign(hl) * np.sign(hr) < 0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        hm = h_of_s(mid)
        go_right = np.sign(hm) == np.sign(hl)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
    root = np.where(cross, 0.5 * (lo + hi), right)
    a = np.stack([left, root], axis=-1)
    b = np.stack([root, right], axis=-1)
    return a, b


def _gauss_nodes(a, b):
    half = 0.5 * (b - a)
    s = (a + b)[..., None] * 0.5 + half[..., None] * _GL_NODES
    w = half[..., None] * _GL_WEIGHTS
    return s, w


def _mollify(func, kink, x, dx):
    """``int phi(s) func(x + s dx) ds`` (tensor kernel) at points ``x`` (n, d)."""
    n, d = x.shape
    if d == 1:
        xs = x[:, 0]
        a, b = _split_pieces(lambda s: kink((xs[:, None] + s * dx)[..., None]), (n,))
        s, w = _gauss_nodes(a, b)  # (n, 6, 2, G)
        vals = func((xs[:, None, None, None] + s * dx)[..., None])
        wk = (w * smoothing_kernel(s))[..., None]
        return np.sum((wk * vals).reshape(n, -1, vals.shape[-1]), axis=1)
    if d == 2:
        # outer dimension 1 on fixed Gauss nodes, inner dimension 0 split at the kink
        so, wo = _gauss_nodes(_PIECES, _PIECES + 1.0)
        so, wo = so.ravel(), (wo * smoothing_kernel(so)).ravel()
        x2 = x[:, 1, None] + so * dx  # (n, O)
        x1 = x[:, 0, None]

        def h_inner(s):
            pts = np.stack(np.broadcast_arrays(x1[..., None] + s * dx, x2[..., None]), axis=-1)
            return kink(pts)

        a, b = _split_pieces(h_inner, (n, so.size))
        s, w = _gauss_nodes(a, b)  # (n, O, 6, 2, G)
        p1 = x[:, 0, None, None, None, None] + s * dx
        p2 = np.broadcast_to(x2[:, :, None, None, None], p1.shape)
        vals = func(np.stack([p1, p2], axis=-1))
        wk = w * smoothing_kernel(s) * wo[None, :, None, None, None]
        return np.sum((wk[..., None] * vals).reshape(n, -1, vals.shape[-1]), axis=1)
    raise InvalidArgumentError(f"smoothing is implemented for d <= 2, got d={d}")


def smoothing_mask(grid: SpaceGrid, kink, radius: int = 4) -> np.ndarray:
    """Knots whose ``radius``-neighbourhood (in grid steps) meets the kink set."""
    sign = np.sign(kink(grid.points())).reshape(grid.shape)
    near = sign == 0
    pad = np.pad(sign, radius, mode="edge")
    for offs in np.ndindex(*(2 * radius + 1,) * grid.d):
        window = pad[tuple(slice(o, o + grid.M) for o in offs)]
        near |= window != sign
    return near.ravel()


def smooth_terminal(samples, grid: SpaceGrid, kink, func, enabled: bool = True,
                    radius: int = 4, chunk: int = 256) -> np.ndarray:
    """Replace samples near the kink by a local mollification of ``func``.

    ``samples`` has shape ``(M**d, k)`` (flattened grid); ``kink(x)`` is a
    smooth function vanishing exactly on the non-smooth set of ``func``.
    Knots farther than ``radius`` grid steps from the kink keep their values.
    """
    samples = np.array(samples, dtype=float)
    if not enabled or kink is None:
        return samples
    idx = np.flatnonzero(smoothing_mask(grid, kink, radius))
    if idx.size == 0:
        return samples
    pts = grid.points()[idx]
    squeeze = samples.ndim == 1

    def vfunc(x):
        v = np.asarray(func(x), dtype=float)
        return v[..., None] if squeeze else v

    out = samples[:, None] if squeeze else samples
    for start in range(0, idx.size, chunk):
        sl = slice(start, start + chunk)
        out[idx[sl]] = _mollify(vfunc, kink, pts[sl], grid.dx)
    return out[:, 0] if squeeze else out


# ------------------------------------------------------------------- examples

def example1() -> ProblemSpec:
    """Cubic driver independent of ``z``; logistic solution, (1/2, 1/4) at the origin."""
    T = 1.0

    def driver(t, x, y, z):
        return -y ** 3 + 2.5 * y ** 2 - 1.5 * y

    def terminal(x):
        return expit(x + T)

    def terminal_z(x):
        s = expit(x + T)
        return (s * (1.0 - s))[..., None]

    def analytic(t, x):
        s = expit(np.asarray(x, dtype=float) + t)
        return s, (s * (1.0 - s))[..., None]

    return ProblemSpec("ex1", 1, 1, T, driver, terminal, (-16.0, 16.0),
                       terminal_z=terminal_z, analytic=analytic)


def example2() -> ProblemSpec:
    """Nonlinear driver quadratic in ``z``; (ln 3, 1/3) at the origin."""
    T = 1.0

    def driver(t, x, y, z):
        e = math.exp(t * t)
        zz = z[..., 0]
        return 0.5 * (e - 4.0 * t * y - 3.0 * np.exp(t * t - y / e) + zz * zz / e)

    def terminal(x):
        return np.log(np.sin(x) + 3.0) * math.exp(T * T)

    def analytic(t, x):
        x = np.asarray(x, dtype=float)
        e = np.exp(np.square(t))
        y = np.log(np.sin(x) + 3.0) * e
        z = e * np.cos(x) / (np.sin(x) + 3.0)
        return y, z[..., None]

    def terminal_z(x):
        return analytic(T, x)[1]

    return ProblemSpec("ex2", 1, 1, T, driver, terminal, (-16.0, 16.0),
                       terminal_z=terminal_z, analytic=analytic)


def black_scholes_call(t, S, T, K, r, sigma, div):
    """Call price with continuous dividend yield and ``z = sigma S dV/dS``."""
    S = np.asarray(S, dtype=float)
    tau = np.asarray(T - t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        vol = sigma * np.sqrt(tau)
        d1 = (np.log(S / K) + (r - div + 0.5 * sigma ** 2) * tau) / vol
        d2 = d1 - vol
        y = S * np.exp(-div * tau) * ndtr(d1) - K * np.exp(-r * tau) * ndtr(d2)
        z = S * np.exp(-div * tau) * ndtr(d1) * sigma
    expired = tau <= 0
    if np.any(expired):
        y = np.where(expired, np.maximum(S - K, 0.0), y)
        z = np.where(expired, sigma * S * np.heaviside(S - K, 0.5), z)
    return y, z


def example_black_scholes(T=0.33, strike=100.0, spot=100.0, r=0.03, mu=0.05, div=0.04,
                          sigma=0.2) -> ProblemSpec:
    """European call in the log-price variable, with dividend yield ``div``.

    Driver ``-(r y + (mu - r + div) z / sigma)``; the reference uses
    ``d1,2 = (ln(S/K) + (r - div +- sigma^2/2) tau) / (sigma sqrt(tau))``.
    """
    lam = (mu - r + div) / sigma
    log_k = math.log(strike)

    def driver(t, x, y, z):
        return -(r * y + lam * z[..., 0])

    def terminal(x):
        return np.maximum(np.exp(x) - strike, 0.0)

    def terminal_z(x):
        s = np.exp(x)
        return (sigma * s * np.heaviside(x - log_k, 0.5))[..., None]

    def analytic(t, x):
        y, z = black_scholes_call(t, np.exp(np.asarray(x, dtype=float)[..., 0]), T, strike, r, sigma, div)
        return y[..., None], z[..., None, None]

    def kink(x):
        return x[..., 0] - log_k

    return ProblemSpec("bs_call", 1, 1, T, driver, terminal, (-16.0, 16.0),
                       terminal_z=terminal_z, analytic=analytic,
                       forward=Forward.log_price([spot], [mu], [[sigma]]), smoothing=True, kink=kink,
                       params=dict(strike=strike, spot=spot, r=r, mu=mu, div=div, sigma=sigma))


def example4_2d() -> ProblemSpec:
    """Two-dimensional linear BSDE with solution ``sin(W1 + W2 + t)``."""
    T = 1.0
    a = np.array([0.5, 0.5])

    def driver(t, x, y, z):
        return y - z @ a

    def terminal(x):
        return np.sin(x[..., 0] + x[..., 1] + T)[..., None]

    def analytic(t, x):
        x = np.asarray(x, dtype=float)
        arg = x[..., 0] + x[..., 1] + t
        c = np.cos(arg)
        return np.sin(arg)[..., None], np.stack([c, c], axis=-1)[..., None, :]

    def terminal_z(x):
        return analytic(T, x)[1]

    return ProblemSpec("ex4_2d", 1, 2, T, driver, terminal, (-8.0, 8.0),
                       terminal_z=terminal_z, analytic=analytic)


def margrabe(t, S1, S2, T, sigma1, sigma2, rho):
    """Exchange option ``(S1 - S2)^+`` price and the log-price gradient ``(S1 V_1, S2 V_2)``."""
    tau = T - t
    sig = math.sqrt(sigma1 ** 2 + sigma2 ** 2 - 2.0 * sigma1 * sigma2 * rho)
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if tau <= 0:
        up = np.heaviside(S1 - S2, 0.5)
        return np.maximum(S1 - S2, 0.0), np.stack([S1 * up, -S2 * up], axis=-1)
    d1 = (np.log(S1 / S2) + 0.5 * sig ** 2 * tau) / (sig * math.sqrt(tau))
    d2 = d1 - sig * math.sqrt(tau)
    value = S1 * ndtr(d1) - S2 * ndtr(d2)
    return value, np.stack([S1 * ndtr(d1), -S2 * ndtr(d2)], axis=-1)


def example5_spread(T=1.0, spot=(100.0, 100.0), r=0.05, mu=(0.1, 0.1), sigma=(0.25, 0.3),
                    rho=0.0, smoothing=True) -> ProblemSpec:
    """Zero-strike spread (exchange) option on two correlated log-prices."""
    s1, s2 = sigma
    A = np.array([[s1, 0.0], [rho * s2, s2 * math.sqrt(1.0 - rho ** 2)]])
    excess = np.asarray(mu, dtype=float) - r
    lam = np.linalg.solve(A, excess)  # A^{-1} M^T

    def driver(t, x, y, z):
        return -(r * y + z @ lam)

    def terminal(x):
        return np.maximum(np.exp(x[..., 0]) - np.exp(x[..., 1]), 0.0)[..., None]

    def terminal_z(x):
        up = np.heaviside(x[..., 0] - x[..., 1], 0.5)
        grad = np.stack([np.exp(x[..., 0]) * up, -np.exp(x[..., 1]) * up], axis=-1)
        return (grad @ A)[..., None, :]

    def analytic(t, x):
        x = np.asarray(x, dtype=float)
        value, grad = margrabe(t, np.exp(x[..., 0]), np.exp(x[..., 1]), T, s1, s2, rho)
        return value[..., None], (grad @ A)[..., None, :]

    def kink(x):
        return x[..., 0] - x[..., 1]

    return ProblemSpec("spread", 1, 2, T, driver, terminal, (-8.0, 8.0),
                       terminal_z=terminal_z, analytic=analytic,
                       forward=Forward.log_price(spot, mu, A), smoothing=smoothing, kink=kink,
                       params=dict(spot=spot, r=r, mu=mu, sigma=sigma, rho=rho))


PROBLEMS = {
    "ex1": example1,
    "ex2": example2,
    "bs_call": example_black_scholes,
    "ex4_2d": example4_2d,
    "spread": example5_spread,
}


def get_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise InvalidArgumentError(
            f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
