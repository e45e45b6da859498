# Copyright (c) The mobility-synth developers, 2024
#
# This file is part of mobility-synth.  mobility-synth is free software: you
# can redistribute it and/or modify it under the terms of the GNU General
# Public License as published by the Free Software Foundation; either version 2
# of the License, or(at your option) any later version.
#
# This program is distributed in the hope that it will be useful, but WITHOUT
# ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or FITNESS
# FOR A PARTICULAR PURPOSE.  See the GNU General Public License for more
# details.
#
# You should have received a copy of the GNU General Public License along with
# this program; if not, write to the Free Software Foundation, Inc., 51
# Franklin Street, Fifth Floor, Boston, MA 02110-1301 USA.
#


"""
Differential privacy mechanisms and accounting.

- ``laplace_mechanism``: the pure epsilon-DP release used for the transition
  matrix.
- ``clip_and_noise``: the per-example clipping and Gaussian noising step of
  DP-SGD.
- ``RdpAccountant`` / ``accountant_epsilon``: Renyi-DP accounting of the
  Poisson-subsampled Gaussian mechanism over a fixed order grid, converted to
  (epsilon, delta) with ``eps = min_a [rdp(a) + log(1/delta) / (a - 1)]``.
- ``allocate_budget`` / ``total_privacy``: the split of the total budget
  between DP-SGD (epsilon_1) and the transition matrix (epsilon_2), and the
  sequential-composition total.

The log-space helpers for the subsampled Gaussian follow the usual
moments-accountant formulation (integer orders by binomial expansion,
fractional orders by the two-sided erfc series).
"""

import functools
import logging
import math

from dataclasses import dataclass

import numpy as np

from scipy import special

from mobility_synth.autodiff import GradientSet
from mobility_synth.conf import get_setting
from mobility_synth.exceptions import ParameterError
from mobility_synth.seeding import make_rng

logger = logging.getLogger(__name__)

ORDERS = tuple(1.25 + 0.25 * i for i in range(252))   # 1.25, 1.5, ..., 64.0


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon_sgd: float
    epsilon_pretrain: float
    delta: float

    def __post_init__(self):
        if self.epsilon_sgd < 0 or self.epsilon_pretrain < 0:
            raise ParameterError("Budget shares must be non-negative: %r" % (self,))
        if not 0 <= self.delta <= 1:
            raise ParameterError("delta must lie in [0, 1], got %r" % (self.delta,))

    @property
    def epsilon_total(self):
        return self.epsilon_sgd + self.epsilon_pretrain


@dataclass(frozen=True)
class NoiseParams:
    clip_norm: float
    noise_multiplier: float
    sampling_rate: float
    steps: int

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ParameterError("Clip norm must be positive, got %r" % (self.clip_norm,))
        if self.noise_multiplier < 0:
            raise ParameterError("Noise multiplier must be non-negative, got %r" % (self.noise_multiplier,))
        if not 0 < self.sampling_rate <= 1:
            raise ParameterError("Sampling rate must lie in (0, 1], got %r" % (self.sampling_rate,))
        if self.steps < 0:
            raise ParameterError("Step count must be non-negative, got %r" % (self.steps,))


@dataclass
class PrivacyReport:
    epsilon_sgd: float
    epsilon_pretrain: float
    delta: float
    sigma: float = 0.0
    clip_norm: float = 0.0
    steps: int = 0
    sampling_rate: float = 0.0

    @property
    def epsilon_total(self):
        return self.epsilon_sgd + self.epsilon_pretrain

    def as_pairs(self):
        return [('epsilon_total', repr(float(self.epsilon_total))),
                ('epsilon_sgd', repr(float(self.epsilon_sgd))),
                ('epsilon_pretrain', repr(float(self.epsilon_pretrain))),
                ('delta', repr(float(self.delta))),
                ('sigma', repr(float(self.sigma))),
                ('clip_norm', repr(float(self.clip_norm))),
                ('steps', str(int(self.steps))),
                ('sampling_rate', repr(float(self.sampling_rate))),
                ('accountant', 'rdp')]

    def as_text(self):
        return ''.join('%s=%s\n' % pair for pair in self.as_pairs())


def laplace_mechanism(values, sensitivity, epsilon, rng=None):
    """
    Add i.i.d. Laplace noise of scale ``sensitivity / epsilon`` to every entry.
    """
    if not epsilon > 0:
        raise ParameterError("Laplace mechanism needs epsilon > 0, got %r" % (epsilon,))
    if not sensitivity > 0:
        raise ParameterError("Laplace mechanism needs a positive sensitivity, got %r" % (sensitivity,))
    rng = make_rng() if rng is None else rng
    values = np.asarray(values, dtype=np.float64)
    return values + rng.laplace(0.0, sensitivity / epsilon, size=values.shape)


def clip_and_noise(per_example_grads, clip_norm, noise_multiplier, batch_size, rng=None):
    """
    Clip every example's full gradient to l2 norm ``clip_norm``, sum in list
    order, divide by ``batch_size`` and add N(0, (sigma * C / batch_size)^2)
    to every coordinate.

    ``clip_norm=math.inf`` disables clipping; ``noise_multiplier=0`` adds no
    noise.
    """
    if not clip_norm > 0:
        raise ParameterError("Clip norm must be positive, got %r" % (clip_norm,))
    if not per_example_grads:
        raise ParameterError("clip_and_noise needs a non-empty batch")
    if not batch_size > 0:
        raise ParameterError("Batch size must be positive, got %r" % (batch_size,))

    names = sorted(set().union(*[g.grads.keys() for g in per_example_grads]))
    total = {}
    for example in per_example_grads:
        norm = example.norm()
        factor = 1.0 if norm <= clip_norm or norm == 0 else clip_norm / norm
        for name in names:
            if name not in example.grads:
                continue
            g = example.grads[name] * factor if factor != 1.0 else example.grads[name]
            total[name] = total[name] + g if name in total else g.copy()

    result = dict((name, total[name] / batch_size) for name in names)
    if noise_multiplier > 0:
        rng = make_rng() if rng is None else rng
        std = noise_multiplier * clip_norm / batch_size
        for name in names:
            result[name] = result[name] + rng.normal(0.0, std, size=result[name].shape)
    return GradientSet(result)


# Renyi DP of the subsampled Gaussian mechanism

def _log_add(logx, logy):
    a, b = min(logx, logy), max(logx, logy)
    if a == -np.inf:
        return b
    return math.log1p(math.exp(a - b)) + b


def _log_sub(logx, logy):
    if logx < logy:
        raise ParameterError("Log-space subtraction must stay non-negative")
    if logy == -np.inf:
        return logx
    if logx == logy:
        return -np.inf
    try:
        return math.log(math.expm1(logx - logy)) + logy
    except OverflowError:
        return logx


def _log_comb(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


def _log_erfc(x):
    return math.log(2) + special.log_ndtr(-x * 2 ** .5)


def _log_a_int(q, sigma, alpha):
    log_a = -np.inf
    for i in range(alpha + 1):
        log_coef_i = _log_comb(alpha, i) + i * math.log(q) + (alpha - i) * math.log(1 - q)
        log_a = _log_add(log_a, log_coef_i + (i * i - i) / (2 * sigma ** 2))
    return float(log_a)


def _log_a_frac(q, sigma, alpha):
    # integrals over (-inf, z0] and [z0, +inf), both starting at 0 in log space
    log_a0, log_a1 = -np.inf, -np.inf
    z0 = sigma ** 2 * math.log(1 / q - 1) + .5
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i

        log_t0 = log_coef + i * math.log(q) + j * math.log(1 - q)
        log_t1 = log_coef + j * math.log(q) + i * math.log(1 - q)

        log_e0 = math.log(.5) + _log_erfc((i - z0) / (math.sqrt(2) * sigma))
        log_e1 = math.log(.5) + _log_erfc((z0 - j) / (math.sqrt(2) * sigma))

        log_s0 = log_t0 + (i * i - i) / (2 * sigma ** 2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2 * sigma ** 2) + log_e1

        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)

        i += 1
        if max(log_s0, log_s1) < -30:
            break
    return _log_add(log_a0, log_a1)


def _rdp_one(q, sigma, alpha):
    if q == 0:
        return 0.0
    if sigma == 0:
        return np.inf
    if q == 1.0:
        return alpha / (2 * sigma ** 2)
    if float(alpha).is_integer():
        return _log_a_int(q, sigma, int(alpha)) / (alpha - 1)
    return _log_a_frac(q, sigma, alpha) / (alpha - 1)


@functools.lru_cache(maxsize=1024)
def _rdp_step(q, sigma, orders):
    return tuple(_rdp_one(q, sigma, a) for a in orders)


def rdp_subsampled_gaussian(q, sigma, steps, orders=ORDERS):
    """RDP curve of ``steps`` compositions of the subsampled Gaussian."""
    return np.asarray(_rdp_step(float(q), float(sigma), tuple(orders))) * steps


def rdp_to_epsilon(orders, rdp, delta):
    """Smallest ``rdp(a) + log(1/delta) / (a - 1)`` over the order grid."""
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1), got %r" % (delta,))
    orders = np.asarray(orders, dtype=np.float64)
    rdp = np.asarray(rdp, dtype=np.float64)
    if np.all(np.isinf(rdp)):
        return math.inf
    eps = rdp + math.log(1.0 / delta) / (orders - 1.0)
    return max(0.0, float(np.min(eps)))


class RdpAccountant(object):
    """
    Running Renyi-DP curve of a training run. The training loop owns it and
    is the only caller of ``compose``.
    """

    def __init__(self, orders=ORDERS):
        self.orders = tuple(orders)
        self.rdp = np.zeros(len(self.orders))
        self.steps = 0

    def compose(self, q, sigma, steps=1):
        self.rdp = self.rdp + rdp_subsampled_gaussian(q, sigma, steps, self.orders)
        self.steps += steps

    @property
    def spent_steps(self):
        return self.steps

    def epsilon(self, delta):
        if self.steps == 0:
            return 0.0
        return rdp_to_epsilon(self.orders, self.rdp, delta)

    def epsilon_after(self, q, sigma, delta, steps=1):
        """Epsilon if ``steps`` more steps were composed, without composing them."""
        rdp = self.rdp + rdp_subsampled_gaussian(q, sigma, steps, self.orders)
        return rdp_to_epsilon(self.orders, rdp, delta)


def accountant_epsilon(noise, delta, orders=ORDERS):
    """
    (epsilon, delta) upper bound of ``noise.steps`` subsampled Gaussian steps;
    ``math.inf`` when the noise multiplier is zero.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1), got %r" % (delta,))
    if noise.noise_multiplier == 0:
        return math.inf
    if noise.steps == 0:
        return 0.0
    rdp = rdp_subsampled_gaussian(noise.sampling_rate, noise.noise_multiplier, noise.steps, orders)
    return rdp_to_epsilon(orders, rdp, delta)


def allocate_budget(epsilon_total, w, dataset_size, i_res=None, c=None, delta=None):
    """
    Split ``epsilon_total`` so that the transition matrix keeps a constant
    signal-to-noise ratio::

        eps_2 = min(c * w^2 * 4^i_res * ln(w) / |D|, eps)
        eps_1 = eps - eps_2

    The two parts add back to ``epsilon_total`` up to floating-point rounding
    (within 1e-12); the clamped case returns exactly ``(0, epsilon_total)``.
    """
    i_res = get_setting('PRETRAIN_RES') if i_res is None else i_res
    c = get_setting('BUDGET_C') if c is None else c
    delta = get_setting('DELTA') if delta is None else delta
    if not (epsilon_total > 0 and w > 0 and dataset_size > 0 and c > 0 and i_res >= 0):
        raise ParameterError("allocate_budget needs positive inputs, got eps=%r w=%r |D|=%r c=%r"
                             % (epsilon_total, w, dataset_size, c))
    eps_pretrain = min(c * w ** 2 * 4 ** i_res * math.log(w) / dataset_size, epsilon_total)
    eps_sgd = epsilon_total - eps_pretrain
    if eps_sgd <= 0:
        logger.warning("Budget allocation leaves no epsilon for DP-SGD (eps=%g, w=%d, |D|=%d); "
                       "the training phase will be skipped", epsilon_total, w, dataset_size)
        eps_sgd = 0.0
    logger.info("Budget split: eps_sgd=%.6g eps_pretrain=%.6g", eps_sgd, eps_pretrain)
    return PrivacyBudget(epsilon_sgd=eps_sgd, epsilon_pretrain=eps_pretrain, delta=delta)


def total_privacy(epsilon_sgd, epsilon_pretrain, delta):
    """Sequential composition of the two phases: (eps_1 + eps_2, delta)."""
    if epsilon_sgd < 0 or epsilon_pretrain < 0:
        raise ParameterError("Spent epsilons must be non-negative")
    return (epsilon_sgd + epsilon_pretrain, delta)
