"""Argument checks shared by the estimator and the command line."""
from __future__ import annotations

import numbers

import numpy as np

from .exceptions import InvalidArgumentError
from .problems import ProblemSpec, get_problem


def check_positive_int(value, name: str, upper: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    if upper is not None and value > upper:
        raise InvalidArgumentError(f"{name} must be at most {upper}, got {value}")
    return int(value)


def check_problem(problem) -> ProblemSpec:
    """Accept a registered problem name or a :class:`ProblemSpec`."""
    if isinstance(problem, ProblemSpec):
        return problem
    if isinstance(problem, str):
        return get_problem(problem)
    raise InvalidArgumentError(f"expected a problem name or ProblemSpec, got {type(problem).__name__}")


def check_domain(domain, d: int | None = None):
    """``(lo, hi)`` with scalar bounds or length-``d`` sequences; ``None`` passes."""
    if domain is None:
        return None
    try:
        lo, hi = domain
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"domain must be a (lo, hi) pair, got {domain!r}") from None
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if d is not None:
        lo = np.broadcast_to(lo, (d,))
        hi = np.broadcast_to(hi, (d,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi <= lo):
        raise InvalidArgumentError(f"domain needs finite lo < hi, got {domain!r}")
    if lo.size == 1:
        return float(lo[0]), float(hi[0])
    return tuple(lo.tolist()), tuple(hi.tolist())


def check_points(X, d: int) -> np.ndarray:
    """Coerce query points to shape ``(n, d)``.

    For ``d == 1`` a flat array of coordinates is accepted.
    """
    X = np.asarray(X, dtype=float)
    if d == 1 and X.ndim <= 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != d:
        raise InvalidArgumentError(f"expected points of shape (n, {d}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgumentError("query points must be finite")
    return X
