import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.polynomial.hermite import hermgauss

from msbsde.exceptions import InvalidArgumentError
from msbsde.grid import SpaceGrid
from msbsde.quadrature import (expectation, grid_offsets, hermite_rule, make_stencil,
                               shifted_points, tensor_rule)

SQRT_PI = math.sqrt(math.pi)


def gaussian_moment(k):
    # int x^k exp(-x^2) dx
    return 0.0 if k % 2 else math.gamma((k + 1) / 2)


class TestHermiteRule:
    def test_one_node(self):
        r = hermite_rule(1)
        assert r.nodes.tolist() == [0.0]
        assert r.weights[0] == pytest.approx(SQRT_PI, rel=1e-15)

    def test_two_nodes(self):
        r = hermite_rule(2)
        assert np.allclose(r.nodes, [-1 / math.sqrt(2), 1 / math.sqrt(2)], rtol=0, atol=1e-15)
        assert np.allclose(r.weights, [SQRT_PI / 2] * 2, rtol=1e-14)

    def test_weight_sum_32(self):
        assert hermite_rule(32).weights.sum() == pytest.approx(SQRT_PI, rel=1e-12)

    @pytest.mark.parametrize("L", [3, 8, 16, 32, 64])
    def test_against_numpy(self, L):
        x, w = hermgauss(L)
        r = hermite_rule(L)
        assert np.allclose(r.nodes, x, rtol=0, atol=1e-12 * max(1, abs(x).max()))
        assert np.allclose(r.weights, w, rtol=1e-10, atol=1e-300)

    @given(st.integers(1, 64))
    def test_symmetry_positivity(self, L):
        r = hermite_rule(L)
        assert np.allclose(r.nodes, -r.nodes[::-1], rtol=0, atol=1e-13)
        assert np.all(r.weights > 0)
        assert np.all(np.diff(r.nodes) > 0)

    @pytest.mark.parametrize("L", range(1, 9))
    def test_polynomial_exactness(self, L):
        r = hermite_rule(L)
        for k in range(2 * L):
            got = np.sum(r.weights * r.nodes ** k)
            assert got == pytest.approx(gaussian_moment(k), rel=1e-12, abs=1e-12)

    @pytest.mark.parametrize("L", [0, 65, 2.5])
    def test_range(self, L):
        with pytest.raises(InvalidArgumentError):
            hermite_rule(L)

    def test_cached(self):
        assert hermite_rule(12) is hermite_rule(12)


class TestTensorRule:
    @pytest.mark.parametrize("d", [1, 2])
    def test_weight_sum(self, d):
        t = tensor_rule(8, d)
        assert t.weights.sum() == pytest.approx(math.pi ** (d / 2), rel=1e-10)
        assert t.size == 8 ** d

    @given(st.integers(1, 64), st.sampled_from([1, 2]))
    def test_normalized_sum_is_exactly_one(self, L, d):
        t = tensor_rule(L, d)
        w = t.normalized_weights
        acc = 0.0
        for v in w.tolist():  # left to right, as the stencil kernel sums
            acc += v
        assert acc == 1.0
        assert np.allclose(w, t.weights / math.pi ** (d / 2), rtol=1e-12, atol=0)

    def test_c_order(self):
        t = tensor_rule(3, 2)
        x = hermite_rule(3).nodes
        assert np.array_equal(t.points[1], [x[0], x[1]])
        assert np.array_equal(t.points[3], [x[1], x[0]])


class TestStencil:
    grid = SpaceGrid((-2.0,), 0.125, 33)

    def test_zero_node(self):
        st_ = shifted_points(self.grid, 5, 1, 0.01, tensor_rule(3, 1))
        assert st_.points[1, 0] == self.grid.knot(5)[0]

    def test_scale(self):
        st_ = make_stencil(4, 0.25, tensor_rule(4, 1))
        assert st_.scale == pytest.approx(math.sqrt(2))
        assert np.allclose(st_.offsets[:, 0], math.sqrt(2) * hermite_rule(4).nodes)

    def test_2d_count(self):
        g = SpaceGrid((-1.0, -1.0), 0.1, 21)
        assert shifted_points(g, (3, 4), 2, 0.01, tensor_rule(8, 2)).size == 64

    def test_symmetric_pairs(self):
        st_ = make_stencil(3, 0.02, tensor_rule(6, 2))
        assert np.allclose(np.sort(st_.offsets[:, 0]), np.sort(-st_.offsets[:, 0]))

    def test_rejects_k0(self):
        with pytest.raises(InvalidArgumentError):
            make_stencil(0, 0.1, tensor_rule(2, 1))

    def test_grid_offsets_roundtrip(self):
        st_ = make_stencil(2, 0.01, tensor_rule(8, 2))
        g = SpaceGrid((0.0, 0.0), 0.03, 10)
        go = grid_offsets(st_, g)
        assert np.allclose((go.off + go.frac) * g.dx, st_.offsets, rtol=0, atol=1e-15)
        assert np.all((go.frac >= 0) & (go.frac < 1))


class TestExpectation:
    rule = tensor_rule(10, 1)

    def test_constant(self):
        assert expectation(np.full(10, 3.5), self.rule) == pytest.approx(3.5, rel=1e-14)

    def test_linear(self):
        st_ = make_stencil(1, 0.01, self.rule)
        x0 = 0.7
        assert expectation(x0 + st_.offsets[:, 0], self.rule) == pytest.approx(x0, rel=1e-14)

    def test_quadratic(self):
        k, dt, x0 = 3, 0.02, -0.4
        st_ = make_stencil(k, dt, self.rule)
        got = expectation((x0 + st_.offsets[:, 0]) ** 2, self.rule)
        assert got == pytest.approx(x0 ** 2 + k * dt, rel=1e-13)

    @pytest.mark.parametrize("d", [1, 2])
    def test_covariance(self, d):
        k, dt = 2, 0.05
        rule = tensor_rule(6, d)
        dw = make_stencil(k, dt, rule).increments
        cov = expectation(np.einsum("si,sj->ijs", dw, dw), rule)
        assert np.allclose(cov, k * dt * np.eye(d), rtol=0, atol=1e-10)

    def test_batched_last_axis(self):
        vals = np.arange(30.0).reshape(3, 10)
        out = expectation(vals, self.rule)
        assert out.shape == (3,)

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            expectation(np.ones(9), self.rule)

    @given(st.floats(-3, 3), st.floats(1e-4, 0.5), st.integers(1, 6))
    def test_lognormal_mean(self, x0, dt, k):
        # E[exp(x + W_k dt)] = exp(x + k dt / 2), checked with 32 nodes
        rule = tensor_rule(32, 1)
        st_ = make_stencil(k, dt, rule)
        got = expectation(np.exp(x0 + st_.offsets[:, 0]), rule)
        assert got == pytest.approx(math.exp(x0 + k * dt / 2), rel=1e-12)
