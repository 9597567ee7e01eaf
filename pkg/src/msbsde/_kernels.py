"""Compiled inner loops.

Every kernel processes each output element with a fixed operation order, so
results do not depend on how callers batch the work across threads.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def thomas(sub, main, sup, rhs):
    """Thomas elimination for ``rhs`` of shape (n, k).

    Returns ``(x, ok)``; ``ok`` is False when a zero pivot was met.
    """
    n, k = rhs.shape
    cp = np.empty(n)
    dp = np.empty((n, k))
    x = np.empty((n, k))
    piv = main[0]
    if piv == 0.0:
        return x, False
    cp[0] = sup[0] / piv if n > 1 else 0.0
    for c in range(k):
        dp[0, c] = rhs[0, c] / piv
    for i in range(1, n):
        piv = main[i] - sub[i] * cp[i - 1]
        if piv == 0.0:
            return x, False
        cp[i] = sup[i] / piv if i < n - 1 else 0.0
        for c in range(k):
            dp[i, c] = (rhs[i, c] - sub[i] * dp[i - 1, c]) / piv
    for c in range(k):
        x[n - 1, c] = dp[n - 1, c]
    for i in range(n - 2, -1, -1):
        for c in range(k):
            x[i, c] = dp[i, c] - cp[i] * x[i + 1, c]
    return x, True


@njit(cache=True, nogil=True)
def cubic_stencil(coefs, dx, base, off, frac, out):
    """Evaluate F cubic splines at ``base[p] + off[s] + frac[s]`` (grid units).

    coefs: (F, C, 4) physical (a, b, c, d) per cell; out: (F, n, S).
    """
    nf, ncell, _ = coefs.shape
    n = base.shape[0]
    ns = off.shape[0]
    for p in range(n):
        for s in range(ns):
            cell = base[p] + off[s]
            u = frac[s]
            if cell < 0:
                cell = 0
                u = 0.0
            elif cell > ncell - 1:
                cell = ncell - 1
                u = 1.0
            h = u * dx
            for f in range(nf):
                out[f, p, s] = coefs[f, cell, 0] + h * (
                    coefs[f, cell, 1] + h * (coefs[f, cell, 2] + h * coefs[f, cell, 3]))


@njit(cache=True, nogil=True)
def bicubic_stencil(coefs, base1, base2, off1, off2, frac1, frac2, out):
    """Evaluate F bicubic surfaces on a stencil.

    coefs: (F, C, C, 16) with entry ``4*p + q`` multiplying ``u**p v**q``;
    out: (F, n, S).
    """
    nf, ncell, _, _ = coefs.shape
    n = base1.shape[0]
    ns = off1.shape[0]
    for p in range(n):
        for s in range(ns):
            c1 = base1[p] + off1[s]
            u = frac1[s]
            if c1 < 0:
                c1 = 0
                u = 0.0
            elif c1 > ncell - 1:
                c1 = ncell - 1
                u = 1.0
            c2 = base2[p] + off2[s]
            v = frac2[s]
            if c2 < 0:
                c2 = 0
                v = 0.0
            elif c2 > ncell - 1:
                c2 = ncell - 1
                v = 1.0
            for f in range(nf):
                acc = 0.0
                for i in range(3, -1, -1):
                    row = coefs[f, c1, c2, 4 * i] + v * (
                        coefs[f, c1, c2, 4 * i + 1] + v * (
                            coefs[f, c1, c2, 4 * i + 2] + v * coefs[f, c1, c2, 4 * i + 3]))
                    acc = acc * u + row
                out[f, p, s] = acc


@njit(cache=True, nogil=True)
def bicubic_coefficients(f, fx, fy, fxy, h, mat):
    """Per-cell coefficients from corner values and derivatives.

    Corner order is (0,0), (1,0), (0,1), (1,1) in (u, v); derivatives are
    scaled to the unit cell. ``mat`` is the 16x16 inverse Hermite matrix.
    """
    m = f.shape[0]
    out = np.empty((m - 1, m - 1, 16))
    vec = np.empty(16)
    for i in range(m - 1):
        for j in range(m - 1):
            vec[0] = f[i, j]
            vec[1] = f[i + 1, j]
            vec[2] = f[i, j + 1]
            vec[3] = f[i + 1, j + 1]
            vec[4] = fx[i, j] * h
            vec[5] = fx[i + 1, j] * h
            vec[6] = fx[i, j + 1] * h
            vec[7] = fx[i + 1, j + 1] * h
            vec[8] = fy[i, j] * h
            vec[9] = fy[i + 1, j] * h
            vec[10] = fy[i, j + 1] * h
            vec[11] = fy[i + 1, j + 1] * h
            vec[12] = fxy[i, j] * h * h
            vec[13] = fxy[i + 1, j] * h * h
            vec[14] = fxy[i, j + 1] * h * h
            vec[15] = fxy[i + 1, j + 1] * h * h
            for r in range(16):
                acc = 0.0
                for c in range(16):
                    acc += mat[r, c] * vec[c]
                out[i, j, r] = acc
    return out


@njit(cache=True, nogil=True)
def stencil_mean(values, weights):
    """Row-wise ``sum_s weights[s] * values[p, s]`` in stencil order."""
    n, ns = values.shape
    out = np.empty(n)
    for p in range(n):
        acc = 0.0
        for s in range(ns):
            acc += weights[s] * values[p, s]
        out[p] = acc
    return out
