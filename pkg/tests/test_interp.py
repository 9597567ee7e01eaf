import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from msbsde.exceptions import InvalidArgumentError, SingularSystemError
from msbsde.grid import SpaceGrid
from msbsde.interp import (SplineHistory, TridiagonalSystem, build_bicubic, build_cubic_spline,
                           build_interpolant, eval_bicubic, eval_cubic_spline,
                           fd_derivatives_2d, shift_history, solve_tridiagonal)
from msbsde.quadrature import grid_offsets, make_stencil, tensor_rule


class TestTridiagonal:
    def test_identity(self):
        n = 5
        rhs = np.arange(1.0, 6.0)
        sys_ = TridiagonalSystem(np.zeros(n), np.ones(n), np.zeros(n), rhs)
        assert np.array_equal(solve_tridiagonal(sys_), rhs)

    def test_three_by_three(self):
        rhs = np.array([1.0, 0.0, 1.0])
        sys_ = TridiagonalSystem(np.ones(3), np.full(3, 2.0), np.ones(3), rhs)
        dense = np.array([[2.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 2.0]])
        expected = np.linalg.solve(dense, rhs)
        assert np.allclose(expected, [1.0, -1.0, 1.0], rtol=0, atol=1e-14)
        assert np.allclose(solve_tridiagonal(sys_), expected, rtol=0, atol=1e-15)

    def test_random_dominant(self):
        rng = np.random.default_rng(3)
        n = 64
        sub, sup = rng.uniform(-1, 1, n), rng.uniform(-1, 1, n)
        main = np.abs(sub) + np.abs(sup) + rng.uniform(0.5, 2, n)
        rhs = rng.normal(size=n)
        sys_ = TridiagonalSystem(sub, main, sup, rhs)
        x = solve_tridiagonal(sys_)
        assert np.max(np.abs(sys_.matvec(x) - rhs)) <= 1e-12 * (1 + np.abs(rhs).max())
        ab = np.vstack([np.r_[0, sup[:-1]], main, np.r_[sub[1:], 0]])
        assert np.allclose(x, solve_banded((1, 1), ab, rhs), rtol=1e-12, atol=1e-14)

    def test_multiple_columns(self):
        rng = np.random.default_rng(4)
        n = 10
        sys_ = TridiagonalSystem(np.ones(n), np.full(n, 4.0), np.ones(n), rng.normal(size=(n, 3)))
        x = solve_tridiagonal(sys_)
        assert x.shape == (n, 3)
        assert np.allclose(sys_.matvec(x), sys_.rhs, atol=1e-13)

    def test_zero_pivot(self):
        sys_ = TridiagonalSystem(np.ones(3), np.array([0.0, 1.0, 1.0]), np.ones(3), np.ones(3))
        with pytest.raises(SingularSystemError):
            solve_tridiagonal(sys_)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            TridiagonalSystem(np.ones(3), np.ones(4), np.ones(3), np.ones(3))


def _grid(M, lo=-1.0, hi=2.0):
    return SpaceGrid.from_bounds(lo, hi, M)


class TestCubicSpline:
    def test_cubic_reproduction(self):
        g = _grid(12)
        p = np.polynomial.Polynomial([0.3, -1.2, 0.7, 0.45])
        sp = build_cubic_spline(p(g.axis()), g)
        X = np.random.default_rng(0).uniform(-1, 2, 100)
        assert np.allclose(eval_cubic_spline(sp, X), p(X), rtol=1e-9, atol=1e-12)

    def test_linear_has_no_curvature(self):
        g = _grid(8)
        sp = build_cubic_spline(2 * g.axis() + 1, g)
        assert np.max(np.abs(sp.coefs[0, :, 2:])) <= 1e-12

    def test_constant(self):
        g = _grid(6)
        sp = build_cubic_spline(np.full(6, -2.5), g)
        assert np.allclose(sp(np.linspace(-3, 4, 50)), -2.5, rtol=0, atol=1e-14)

    def test_knots_exact(self):
        g = _grid(20)
        vals = np.sin(3 * g.axis())
        sp = build_cubic_spline(vals, g)
        assert np.array_equal(sp(g.axis()[:-1]), vals[:-1])
        assert sp(g.axis()[-1]) == pytest.approx(vals[-1], abs=1e-14)

    def test_clamps_outside(self):
        g = _grid(10)
        vals = np.exp(g.axis())
        sp = build_cubic_spline(vals, g)
        assert sp(5.0) == pytest.approx(vals[-1], abs=1e-13)
        assert sp(-7.0) == vals[0]

    def test_linear_midpoint(self):
        g = SpaceGrid.from_bounds(0.0, 3.0, 4)
        sp = build_cubic_spline(np.array([0.0, 1.0, 2.0, 3.0]), g)
        assert sp(0.5) == pytest.approx(0.5, abs=1e-15)

    def test_matches_scipy_not_a_knot(self):
        g = _grid(30)
        x = g.axis()
        vals = np.cos(2 * x) + x ** 2
        ours = build_cubic_spline(vals, g)
        ref = CubicSpline(x, vals, bc_type="not-a-knot")
        X = np.linspace(-1, 2, 333)
        assert np.allclose(ours(X), ref(X), rtol=1e-11, atol=1e-12)

    def test_c2_continuity(self):
        g = _grid(25)
        sp = build_cubic_spline(np.tanh(2 * g.axis()), g)
        a, b, c, d = np.moveaxis(sp.coefs[0], -1, 0)
        h = g.dx
        left_val = a[:-1] + h * (b[:-1] + h * (c[:-1] + h * d[:-1]))
        left_d1 = b[:-1] + h * (2 * c[:-1] + 3 * h * d[:-1])
        left_d2 = 2 * c[:-1] + 6 * h * d[:-1]
        assert np.allclose(left_val, a[1:], rtol=1e-9, atol=1e-12)
        assert np.allclose(left_d1, b[1:], rtol=1e-9, atol=1e-10)
        assert np.allclose(left_d2, 2 * c[1:], rtol=1e-9, atol=1e-9)
        # not-a-knot: third derivative continuous at the second and second-to-last knots
        assert d[0] == pytest.approx(d[1], rel=1e-9)
        assert d[-1] == pytest.approx(d[-2], rel=1e-9)

    def test_vector_fields(self):
        g = _grid(9)
        vals = np.stack([g.axis(), g.axis() ** 2], axis=-1)
        sp = build_cubic_spline(vals, g)
        assert sp(np.array([0.1, 0.2])).shape == (2, 2)

    def test_too_few_knots(self):
        with pytest.raises(InvalidArgumentError):
            build_cubic_spline(np.ones(3), SpaceGrid.from_bounds(0, 1, 3))

    def test_error_order_four(self):
        errs, dxs = [], []
        for M in (33, 65, 129, 257):
            g = _grid(M, 0.0, 2.0)
            sp = build_cubic_spline(np.sin(3 * g.axis()), g)
            X = np.linspace(0, 2, 4001)
            errs.append(np.max(np.abs(sp(X) - np.sin(3 * X))))
            dxs.append(g.dx)
        slope = np.polyfit(np.log(dxs), np.log(errs), 1)[0]
        assert abs(slope - 4) <= 0.3

    def test_stencil_kernel_matches_eval(self):
        g = _grid(40)
        sp = build_cubic_spline(np.sin(g.axis())[:, None], g)
        st_ = make_stencil(2, 0.003, tensor_rule(6, 1))
        table = grid_offsets(st_, g)
        base = np.array([[3], [17], [38]], dtype=np.int64)
        out = sp.stencil(base, table)
        pts = g.knot(base[:, 0])[:, None] + st_.offsets[None, :, 0]
        assert np.allclose(out[0], eval_cubic_spline(sp, pts)[..., 0], rtol=0, atol=1e-14)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=30))
    def test_interpolates_samples(self, vals):
        vals = np.array(vals)
        g = SpaceGrid.from_bounds(0.0, 1.0, len(vals))
        sp = build_cubic_spline(vals, g)
        assert np.allclose(sp(g.axis()), vals, rtol=1e-9, atol=1e-9)


def _grid2(M, lo=-1.0, hi=1.0):
    return SpaceGrid.from_bounds([lo, lo], [hi, hi], M)


def _mesh(g):
    return np.meshgrid(g.axis(0), g.axis(1), indexing="ij")


class TestFiniteDifferences:
    def test_quadratic_exact(self):
        g = _grid2(11)
        x, y = _mesh(g)
        fx, fy, fxy = fd_derivatives_2d(x ** 2, g)
        assert np.allclose(fx, 2 * x, rtol=0, atol=1e-10)
        assert np.allclose(fy, 0, atol=1e-10) and np.allclose(fxy, 0, atol=1e-10)

    def test_constant(self):
        g = _grid2(8)
        for a in fd_derivatives_2d(np.full((8, 8), 3.0), g):
            assert np.allclose(a, 0, atol=1e-12)

    def test_bilinear(self):
        g = _grid2(9)
        x, y = _mesh(g)
        _, _, fxy = fd_derivatives_2d(x * y, g)
        assert np.allclose(fxy, 1.0, rtol=0, atol=1e-10)

    def test_quartic_exact(self):
        g = _grid2(12)
        x, y = _mesh(g)
        fx, fy, _ = fd_derivatives_2d(x ** 4 + y ** 3, g)
        assert np.allclose(fx, 4 * x ** 3, atol=1e-10)
        assert np.allclose(fy, 3 * y ** 2, atol=1e-10)

    def test_too_small(self):
        with pytest.raises(InvalidArgumentError):
            fd_derivatives_2d(np.ones((5, 5)), _grid2(5))


class TestBicubic:
    def test_constant(self):
        g = _grid2(7)
        f = np.full((7, 7), 1.75)
        bc = build_bicubic(f, fd_derivatives_2d(f, g), g)
        assert np.allclose(bc.coefs[..., 1:], 0, atol=1e-14)
        assert np.allclose(eval_bicubic(bc, np.array([[0.3, -0.2], [5, 5]])), 1.75)

    def test_bilinear_reproduction(self):
        g = _grid2(10)
        x, y = _mesh(g)
        f = x * y
        bc = build_bicubic(f, (y, x, np.ones_like(f)), g)
        P = np.random.default_rng(1).uniform(-1, 1, (100, 2))
        assert np.allclose(eval_bicubic(bc, P), P[:, 0] * P[:, 1], rtol=1e-9, atol=1e-12)

    def test_corners(self):
        g = _grid2(8)
        x, y = _mesh(g)
        f = np.sin(x) * np.cos(2 * y)
        bc = build_interpolant(f, g)
        P = np.stack([x.ravel(), y.ravel()], axis=-1)
        assert np.allclose(eval_bicubic(bc, P), f.ravel(), rtol=1e-10, atol=1e-14)

    def test_out_of_domain_corner(self):
        g = _grid2(8)
        x, y = _mesh(g)
        f = x + 2 * y
        bc = build_interpolant(f, g)
        assert eval_bicubic(bc, np.array([9.0, 9.0])) == pytest.approx(f[-1, -1], abs=1e-13)
        assert eval_bicubic(bc, np.array([-9.0, 9.0])) == pytest.approx(f[0, -1], abs=1e-13)

    def test_c1_across_edges(self):
        g = _grid2(12)
        x, y = _mesh(g)
        f = np.exp(x) * np.sin(y)
        bc = build_interpolant(f, g)
        eps = 1e-7
        xe = g.axis(0)[5]
        ys = np.linspace(-0.9, 0.9, 7)
        left = eval_bicubic(bc, np.stack([np.full(7, xe - eps), ys], -1))
        right = eval_bicubic(bc, np.stack([np.full(7, xe + eps), ys], -1))
        mid = eval_bicubic(bc, np.stack([np.full(7, xe), ys], -1))
        assert np.allclose((mid - left) / eps, (right - mid) / eps, rtol=1e-5, atol=1e-5)

    def test_error_order(self):
        errs, dxs = [], []
        for M in (17, 33, 65, 129):
            g = _grid2(M, 0.0, 2.0)
            x, y = _mesh(g)
            bc = build_interpolant(np.sin(x + y), g)
            P = np.random.default_rng(2).uniform(0, 2, (4000, 2))
            errs.append(np.max(np.abs(eval_bicubic(bc, P) - np.sin(P.sum(1)))))
            dxs.append(g.dx)
        assert np.polyfit(np.log(dxs), np.log(errs), 1)[0] >= 3 - 0.3

    def test_stencil_kernel_matches_eval(self):
        g = _grid2(20)
        x, y = _mesh(g)
        bc = build_interpolant(np.stack([np.cos(x - y), x * y * y], -1), g)
        st_ = make_stencil(3, 0.004, tensor_rule(4, 2))
        table = grid_offsets(st_, g)
        base = np.array([[2, 3], [10, 10], [19, 0]], dtype=np.int64)
        out = bc.stencil(base, table)
        pts = g.knot(base)[:, None, :] + st_.offsets[None]
        ref = np.moveaxis(eval_bicubic(bc, pts), -1, 0)
        assert np.allclose(out, ref, rtol=0, atol=1e-13)


class TestHistory:
    def test_shift(self):
        h = SplineHistory(3, ["A", "B", "C"])
        shift_history(h, "D")
        assert list(h) == ["D", "A", "B"]

    def test_capacity_one(self):
        h = SplineHistory(1, ["A"])
        shift_history(h, "B")
        assert list(h) == ["B"]

    @given(st.integers(1, 6), st.integers(0, 20))
    def test_ring_law(self, K, extra):
        h = SplineHistory(K)
        for i in range(K + extra):
            h.push(i)
        assert h.full and list(h) == list(range(K + extra - 1, extra - 1, -1))

    def test_bad_capacity(self):
        with pytest.raises(InvalidArgumentError):
            SplineHistory(0)
