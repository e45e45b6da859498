#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_autodiff
-------------

Tests for the reverse-mode engine: operator values against direct formulas
and every operator's gradient against central finite differences.
"""

import math

import numpy as np

from django.test import SimpleTestCase

from mobility_synth.autodiff import GRUWeights, GradientSet, Tensor, backward, concat, constant, cross_entropy, \
    dot, gather_rows, gru_cell, kl_div, kl_div_logits, linear, log_softmax, matmul, numerical_gradient, \
    parameter, quad_deconv, reshape, sigmoid, slice_, softmax, softmax_value, tanh
from mobility_synth.exceptions import DimensionError, GraphError

from tests.utils import naive_quad_deconv


def plain_gru(h, x, W_ih, W_hh, b_ih, b_hh):
    H = len(h)
    out = np.zeros(H)

    def pre(row):
        s = b_ih[row] + sum(W_ih[row, j] * x[j] for j in range(len(x)))
        t = b_hh[row] + sum(W_hh[row, j] * h[j] for j in range(H))
        return s, t

    for i in range(H):
        zx, zh = pre(i)
        rx, rh = pre(H + i)
        nx, nh = pre(2 * H + i)
        z = 1.0 / (1.0 + math.exp(-(zx + zh)))
        r = 1.0 / (1.0 + math.exp(-(rx + rh)))
        n = math.tanh(nx + r * nh)
        out[i] = (1.0 - z) * n + z * h[i]
    return out


def to_scalar(t, probe):
    """A fixed random linear functional of ``t``, for gradient checks of non-scalar ops."""
    flat = reshape(t, (t.value.size,))
    return dot(flat, constant(probe.reshape(-1)))


class GradientCheckMixin(object):

    def assertGradientsMatch(self, build, arrays, tolerance=1e-6):
        """
        ``build(params)`` returns a scalar Tensor from the dict of named
        parameters made from ``arrays``.
        """
        params = dict((name, parameter(value, name)) for name, value in arrays.items())
        grads = backward(build(params), params)

        for name, tensor in params.items():
            for index in np.ndindex(tensor.value.shape):
                numeric = numerical_gradient(lambda: float(build(params).value), tensor.value, index)
                analytic = grads[name][index]
                scale = max(1.0, abs(analytic), abs(numeric))
                self.assertLess(abs(analytic - numeric) / scale, tolerance,
                                "%s%s: analytic %r, numeric %r" % (name, index, analytic, numeric))


class QuadDeconvTests(SimpleTestCase):

    def test_single_channel(self):
        M = constant(np.array([[[2.0]]]))
        K = constant(np.array([[[1.0, 2.0], [3.0, 4.0]]]).reshape(1, 2, 2, 1))
        out = quad_deconv(M, K).value
        np.testing.assert_array_equal(out[:, :, 0], np.array([[2.0, 4.0], [6.0, 8.0]]))

    def test_zero_kernel(self):
        rng = np.random.default_rng(1)
        out = quad_deconv(constant(rng.normal(size=(3, 3, 2))), constant(np.zeros((2, 2, 2, 2)))).value
        self.assertEqual(out.shape, (6, 6, 2))
        self.assertFalse(out.any())

    def test_against_naive_loops(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            M = rng.normal(size=(4, 4, 3))
            K = rng.normal(size=(3, 2, 2, 3))
            out = quad_deconv(constant(M), constant(K)).value
            self.assertLess(np.max(np.abs(out - naive_quad_deconv(M, K))), 1e-12)

    def test_linear_in_map(self):
        rng = np.random.default_rng(3)
        M1, M2 = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3))
        K = constant(rng.normal(size=(3, 2, 2, 3)))
        left = quad_deconv(constant(1.5 * M1 - 0.5 * M2), K).value
        right = 1.5 * quad_deconv(constant(M1), K).value - 0.5 * quad_deconv(constant(M2), K).value
        self.assertLess(np.max(np.abs(left - right)), 1e-12)

    def test_linear_in_kernel(self):
        rng = np.random.default_rng(4)
        M = constant(rng.normal(size=(2, 2, 3)))
        K1, K2 = rng.normal(size=(3, 2, 2, 3)), rng.normal(size=(3, 2, 2, 3))
        left = quad_deconv(M, constant(2.0 * K1 + K2)).value
        right = 2.0 * quad_deconv(M, constant(K1)).value + quad_deconv(M, constant(K2)).value
        self.assertLess(np.max(np.abs(left - right)), 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            quad_deconv(constant(np.zeros((2, 2, 3))), constant(np.zeros((3, 2, 2, 4))))
        with self.assertRaises(DimensionError):
            quad_deconv(constant(np.zeros((2, 3, 3))), constant(np.zeros((3, 2, 2, 3))))


class GRUCellTests(SimpleTestCase):

    def zero_weights(self, n_hidden, n_in):
        return GRUWeights(constant(np.zeros((3 * n_hidden, n_in))), constant(np.zeros((3 * n_hidden, n_hidden))),
                          constant(np.zeros(3 * n_hidden)), constant(np.zeros(3 * n_hidden)))

    def test_zero_fixed_point(self):
        out = gru_cell(constant(np.zeros(4)), constant(np.ones(3)), self.zero_weights(4, 3)).value
        self.assertFalse(out.any())

    def test_zero_weights_halve_state(self):
        v = np.array([1.0, -2.0, 0.5, 4.0])
        out = gru_cell(constant(v), constant(np.ones(3)), self.zero_weights(4, 3)).value
        np.testing.assert_allclose(out, 0.5 * v, rtol=0, atol=1e-15)

    def test_against_plain_loops(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            H, n_in = 5, 3
            W_ih, W_hh = rng.normal(size=(3 * H, n_in)), rng.normal(size=(3 * H, H))
            b_ih, b_hh = rng.normal(size=3 * H), rng.normal(size=3 * H)
            h, x = rng.normal(size=H), rng.normal(size=n_in)
            weights = GRUWeights(constant(W_ih), constant(W_hh), constant(b_ih), constant(b_hh))
            out = gru_cell(constant(h), constant(x), weights).value
            self.assertLess(np.max(np.abs(out - plain_gru(h, x, W_ih, W_hh, b_ih, b_hh))), 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            gru_cell(constant(np.zeros(4)), constant(np.zeros(2)), self.zero_weights(4, 3))


class LossTests(SimpleTestCase):

    def test_uniform_cross_entropy(self):
        for k in (2, 5, 17):
            self.assertAlmostEqual(float(cross_entropy(constant(np.zeros(k)), 0).value), math.log(k), places=12)

    def test_cross_entropy_target_range(self):
        with self.assertRaises(DimensionError):
            cross_entropy(constant(np.zeros(3)), 3)

    def test_kl_identity(self):
        p = np.array([0.2, 0.3, 0.5])
        self.assertEqual(kl_div(p, p), 0.0)

    def test_kl_closed_form(self):
        self.assertAlmostEqual(kl_div([1.0, 0.0], [0.5, 0.5]), math.log(2), places=12)

    def test_kl_missing_support(self):
        self.assertEqual(kl_div([0.5, 0.5], [1.0, 0.0]), math.inf)

    def test_kl_logits_matches_kl(self):
        rng = np.random.default_rng(6)
        logits = rng.normal(size=6)
        p = rng.dirichlet(np.ones(6))
        node = kl_div_logits(p, constant(logits))
        self.assertAlmostEqual(float(node.value), kl_div(p, softmax_value(logits)), places=12)

    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            out = softmax(constant(rng.normal(scale=20.0, size=9))).value
            self.assertLess(abs(out.sum() - 1.0), 1e-12)

    def test_softmax_shift_invariant(self):
        logits = np.array([0.1, 2.0, -3.0, 0.7])
        np.testing.assert_allclose(softmax_value(logits), softmax_value(logits + 1000.0), rtol=0, atol=1e-12)


class BackwardTests(GradientCheckMixin, SimpleTestCase):

    def test_constant_loss(self):
        params = {'w': parameter(np.ones(3), 'w')}
        grads = backward(constant(4.0), params)
        self.assertFalse(grads['w'].any())

    def test_dot_gradient(self):
        x = np.array([1.0, -2.0, 3.0])
        w = parameter(np.array([0.5, 0.5, 0.5]), 'w')
        grads = backward(dot(w, constant(x)))
        np.testing.assert_array_equal(grads['w'], x)

    def test_shared_parameter_accumulates(self):
        w = parameter(np.array([2.0]), 'w')
        grads = backward(reshape(w * w + w, ()))
        self.assertAlmostEqual(float(grads['w'][0]), 5.0)

    def test_needs_scalar(self):
        with self.assertRaises(GraphError):
            backward(parameter(np.ones(2), 'w'))

    def test_cycle_rejected(self):
        node = Tensor(1.0, backward_fn=lambda g: (g,))
        node.parents = (node,)
        with self.assertRaises(GraphError):
            backward(node)

    def test_example_tag(self):
        grads = backward(dot(parameter(np.ones(2), 'w'), constant(np.ones(2))), example=7)
        self.assertIsInstance(grads, GradientSet)
        self.assertEqual(grads.example, 7)
        self.assertAlmostEqual(grads.norm(), math.sqrt(2))
        self.assertAlmostEqual(grads.scaled(2.0).norm(), 2 * math.sqrt(2))

    def test_elementwise_gradients(self):
        rng = np.random.default_rng(8)
        probe = rng.normal(size=4)
        self.assertGradientsMatch(
            lambda p: to_scalar(sigmoid(p['a']) * tanh(p['b']) - p['a'], probe),
            {'a': rng.normal(size=4), 'b': rng.normal(size=4)})

    def test_linear_gradients(self):
        rng = np.random.default_rng(9)
        probe = rng.normal(size=(2, 3))
        self.assertGradientsMatch(
            lambda p: to_scalar(linear(p['x'], p['W'], p['b']), probe),
            {'x': rng.normal(size=(2, 4)), 'W': rng.normal(size=(3, 4)), 'b': rng.normal(size=3)})

    def test_matmul_gradients(self):
        rng = np.random.default_rng(10)
        probe = rng.normal(size=3)
        self.assertGradientsMatch(
            lambda p: to_scalar(matmul(p['A'], p['v']), probe),
            {'A': rng.normal(size=(3, 2)), 'v': rng.normal(size=2)})

    def test_plumbing_gradients(self):
        rng = np.random.default_rng(11)
        probe = rng.normal(size=5)
        self.assertGradientsMatch(
            lambda p: to_scalar(concat([slice_(p['a'], 1, 3), gather_rows(p['E'], 2)]), probe),
            {'a': rng.normal(size=4), 'E': rng.normal(size=(4, 3))})

    def test_gather_repeated_rows(self):
        rng = np.random.default_rng(12)
        probe = rng.normal(size=(3, 2))
        self.assertGradientsMatch(
            lambda p: to_scalar(gather_rows(p['E'], np.array([1, 0, 1])), probe),
            {'E': rng.normal(size=(3, 2))})

    def test_quad_deconv_gradients(self):
        rng = np.random.default_rng(13)
        probe = rng.normal(size=(4, 4, 2))
        self.assertGradientsMatch(
            lambda p: to_scalar(quad_deconv(p['M'], p['K']), probe),
            {'M': rng.normal(size=(2, 2, 3)), 'K': rng.normal(size=(2, 2, 2, 3))})

    def test_gru_gradients(self):
        rng = np.random.default_rng(14)
        probe = rng.normal(size=3)

        def build(p):
            weights = GRUWeights(p['W_ih'], p['W_hh'], p['b_ih'], p['b_hh'])
            return to_scalar(gru_cell(p['h'], p['x'], weights), probe)

        self.assertGradientsMatch(build, {
            'h': rng.normal(size=3), 'x': rng.normal(size=2),
            'W_ih': rng.normal(size=(9, 2)), 'W_hh': rng.normal(size=(9, 3)),
            'b_ih': rng.normal(size=9), 'b_hh': rng.normal(size=9)})

    def test_softmax_gradients(self):
        rng = np.random.default_rng(15)
        probe = rng.normal(size=5)
        self.assertGradientsMatch(lambda p: to_scalar(softmax(p['z']), probe), {'z': rng.normal(size=5)})
        self.assertGradientsMatch(lambda p: to_scalar(log_softmax(p['z']), probe), {'z': rng.normal(size=5)})

    def test_loss_gradients(self):
        rng = np.random.default_rng(16)
        target = rng.dirichlet(np.ones(5))
        self.assertGradientsMatch(lambda p: cross_entropy(p['z'], 3), {'z': rng.normal(size=5)})
        self.assertGradientsMatch(lambda p: kl_div_logits(target, p['z']), {'z': rng.normal(size=5)})
