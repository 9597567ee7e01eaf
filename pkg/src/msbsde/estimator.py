"""Scikit-learn style front end to the backward solver."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .scheme import BootstrapOptions, SolverConfig, solve_backward
from .validation import check_domain, check_points, check_positive_int, check_problem


class MultistepBSDESolver(BaseEstimator):
    """Multistep spline solver for a decoupled BSDE.

    ``fit`` takes a problem (a registered name or a ``ProblemSpec``) in
    place of training data and runs the backward sweep. Afterwards
    ``y0_``/``z0_`` hold the solution at the evaluation knot and
    ``predict``/``predict_z`` interpolate the layer-0 solution at states
    ``X`` of shape ``(n, d)``.

    Parameters
    ----------
    ky, kz : int
        Time levels of the y and z equations, 1..6.
    n_steps : int
        Number of time steps.
    gh_points : int
        Gauss-Hermite nodes per dimension.
    picard_max, picard_tol
        Picard iteration cap and per-point stopping threshold.
    r : int
        Interpolation order used to balance the space step.
    threads : int
        Worker threads of the grid sweep. Results do not depend on it.
    domain : (lo, hi) or None
        Brownian box overriding the problem's default.
    smooth : bool or None
        Mollify a kinked terminal condition; ``None`` keeps the problem's
        setting.
    n_space : int or None
        Fixed number of knots per dimension instead of the balanced one.
    eval_point : array-like or None
        Brownian coordinates of the reporting knot (origin by default).
    bootstrap : str
        ``"extrapolated"`` or ``"fine"``.
    """

    def __init__(self, ky=3, kz=3, n_steps=128, gh_points=32, picard_max=30, picard_tol=1e-14,
                 r=4, threads=1, domain=None, smooth=None, n_space=None, eval_point=None,
                 bootstrap="extrapolated"):
        self.ky = ky
        self.kz = kz
        self.n_steps = n_steps
        self.gh_points = gh_points
        self.picard_max = picard_max
        self.picard_tol = picard_tol
        self.r = r
        self.threads = threads
        self.domain = domain
        self.smooth = smooth
        self.n_space = n_space
        self.eval_point = eval_point
        self.bootstrap = bootstrap

    def _config(self, problem) -> SolverConfig:
        return SolverConfig(
            ky=check_positive_int(self.ky, "ky", 6),
            kz=check_positive_int(self.kz, "kz", 6),
            N=check_positive_int(self.n_steps, "n_steps"),
            L=check_positive_int(self.gh_points, "gh_points", 64),
            picard_max=check_positive_int(self.picard_max, "picard_max"),
            picard_tol=float(self.picard_tol),
            r=check_positive_int(self.r, "r"),
            threads=check_positive_int(self.threads, "threads"),
            domain=check_domain(self.domain, problem.d),
            smoothing=self.smooth,
            M=None if self.n_space is None else check_positive_int(self.n_space, "n_space"),
            eval_point=self.eval_point,
            bootstrap=BootstrapOptions(method=self.bootstrap),
        ).validate()

    def fit(self, problem, y=None):
        problem = check_problem(problem)
        result = solve_backward(problem, self._config(problem))
        self.problem_ = problem
        self.result_ = result
        self.grid_ = result.grid
        self.y0_ = result.y0
        self.z0_ = result.z0
        self.x0_ = result.x_eval
        self.n_features_in_ = problem.d
        return self

    def _brownian(self, X):
        check_is_fitted(self, "result_")
        X = check_points(X, self.problem_.d)
        return self.problem_.forward.brownian(self.result_.time_grid.t0, X)

    def predict(self, X):
        """Interpolated ``y`` at layer 0, shape ``(n, m)``."""
        w = self._brownian(X)
        ys = self.result_.interpolants[0]
        return np.asarray(ys(w if w.shape[1] > 1 else w[:, 0])).reshape(len(w), self.problem_.m)

    def predict_z(self, X):
        """Interpolated ``z`` at layer 0, shape ``(n, m, d)``."""
        w = self._brownian(X)
        zs = self.result_.interpolants[1]
        m, d = self.problem_.m, self.problem_.d
        return np.asarray(zs(w if d > 1 else w[:, 0])).reshape(len(w), m, d)

    def score(self, X, y=None):
        """Negative max error of ``predict`` against the analytic reference."""
        check_is_fitted(self, "result_")
        if self.problem_.analytic is None:
            raise ValueError(f"problem {self.problem_.name!r} has no analytic reference")
        X = check_points(X, self.problem_.d)
        ref, _ = self.problem_.analytic(self.result_.time_grid.t0, X)
        return -float(np.max(np.abs(self.predict(X) - np.asarray(ref).reshape(len(X), -1))))
