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
Private pretraining of the location encoder and scoring path.

The only contact with the training data is ``build_transition_matrix``,
which counts coarse-region -> cell transitions with every trajectory
contributing at most 1 in total; ``privatize_transition`` makes it
epsilon_2-DP with Laplace noise. ``pretrain`` then fits the model to
Dirichlet mixtures of the noised rows through a throw-away network
``temp`` that stands in for the GRU, and never sees a ``Dataset``.
"""

import logging

from dataclasses import dataclass, field

import numpy as np

from mobility_synth import autodiff as ad
from mobility_synth.conf import get_setting
from mobility_synth.dp import laplace_mechanism
from mobility_synth.exceptions import InvalidResolutionError, ParameterError
from mobility_synth.geo import up_res_value
from mobility_synth.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass
class TransitionMatrix:
    i_res: int
    values: np.ndarray

    @property
    def n_poi(self):
        return self.values.shape[1]


@dataclass
class DPTransitionMatrix:
    """
    The Laplace-noised matrix together with the epsilon it cost. ``rows`` is
    the post-processed version: negatives clamped to 0, ``smoothing`` added
    to every entry, rows normalized.
    """
    i_res: int
    noised: np.ndarray
    epsilon: float
    smoothing: float
    rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.noised = np.asarray(self.noised, dtype=np.float64)
        clamped = np.maximum(self.noised, 0.0) + self.smoothing
        self.rows = clamped / clamped.sum(axis=1, keepdims=True)

    @property
    def n_poi(self):
        return self.noised.shape[1]


def trajectory_pairs(traj, depth, i_res, first_only=False):
    """Distinct (region at ``i_res``, next finest cell) pairs of one trajectory."""
    cells = traj.cells
    steps = range(min(1, len(cells) - 1)) if first_only else range(len(cells) - 1)
    return set((up_res_value(cells[k], depth, i_res), cells[k + 1]) for k in steps)


def build_transition_matrix(dataset, i_res=None, first_only=False):
    """
    ``TRAN[r, l] = sum over trajectories v of 1/|v|`` if ``v`` steps from a
    cell inside region ``r`` to cell ``l``. With ``first_only`` only the
    first step of every trajectory counts.
    """
    i_res = get_setting('PRETRAIN_RES') if i_res is None else i_res
    depth = dataset.spec.depth
    if not 0 <= i_res <= depth:
        raise InvalidResolutionError("Transition resolution %d outside [0, %d]" % (i_res, depth))
    values = np.zeros((4 ** i_res, dataset.spec.n_poi))
    for traj in dataset.trajectories:
        pairs = trajectory_pairs(traj, depth, i_res, first_only)
        if not pairs:
            continue
        weight = 1.0 / len(traj)
        for region, cell in pairs:
            values[region, cell] += weight
    logger.info("Counted transitions of %d trajectories at resolution %d%s",
                len(dataset), i_res, ' (first step only)' if first_only else '')
    return TransitionMatrix(i_res, values)


def privatize_transition(tran, epsilon, rng=None, smoothing=None):
    smoothing = get_setting('SMOOTHING') if smoothing is None else smoothing
    if not epsilon > 0:
        raise ParameterError("Transition privatization needs epsilon > 0, got %r" % (epsilon,))
    noised = laplace_mechanism(tran.values, 1.0, epsilon, rng)
    return DPTransitionMatrix(tran.i_res, noised, float(epsilon), float(smoothing))


def _check_mix(r, n_regions):
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (n_regions,):
        raise ParameterError("Mix ratio has shape %s, expected (%d,)" % (r.shape, n_regions))
    return r


def mixed_target(dptran, r):
    """``sum_l r_l * rows[l]``: the next-cell distribution of a mixture of regions."""
    r = _check_mix(r, dptran.rows.shape[0])
    return r @ dptran.rows


def mixed_input(model, r, i_res, cache=None):
    """
    Input of ``temp`` for mix ``r``: the r-weighted sum of the resolution
    ``i_res`` encodings for HRNet, ``r`` itself for the baseline, which has no
    coarse encodings.
    """
    r = _check_mix(r, 4 ** i_res)
    if model.kind == 'baseline':
        return ad.constant(r)
    cache = {} if cache is None else cache
    if not 0 <= i_res <= model.depth:
        raise InvalidResolutionError("Resolution %d outside [0, %d]" % (i_res, model.depth))
    return ad.matmul(ad.constant(r), model.level_encodings(cache)[i_res])


class TempNetwork(object):
    """``h = tanh(W x + b)``, mimicking the GRU's output for a mixed input."""

    def __init__(self, n_in, n_hidden, rng):
        bound = 1.0 / np.sqrt(n_in)
        self.params = {
            'temp.W': ad.parameter(rng.uniform(-bound, bound, size=(n_hidden, n_in)), 'temp.W'),
            'temp.b': ad.parameter(rng.uniform(-bound, bound, size=n_hidden), 'temp.b'),
        }

    def __call__(self, x):
        return ad.tanh(ad.linear(x, self.params['temp.W'], self.params['temp.b']))


def temp_network_for(model, i_res, rng):
    n_in = 4 ** i_res if model.kind == 'baseline' else model.n_dim
    return TempNetwork(n_in, model.n_hidden, rng)


def mixture_kl(model, temp, dptran, r, cache=None):
    """KL(mixed_target(r) || model distribution over finest cells) as a graph node."""
    cache = {} if cache is None else cache
    h = temp(mixed_input(model, r, dptran.i_res, cache))
    logits = model.cell_logits(h, model.depth, cache, False)
    return ad.kl_div_logits(mixed_target(dptran, r), logits)


def mean_mixture_kl(model, temp, dptran, mixes):
    cache = {}
    return float(np.mean([mixture_kl(model, temp, dptran, r, cache).value for r in mixes]))


@dataclass
class PretrainResult:
    model: object
    temp: TempNetwork
    losses: list


def pretrain(model, dptran, steps=None, batch=None, lr=None, seed=None, temp=None):
    """
    Plain gradient descent on the batch-mean KL between ``mixed_target(r)``
    and the model's finest-resolution distribution at ``temp(mixed_input(r))``
    with ``r ~ Dirichlet(1, ..., 1)``. Updates ``model`` in place.
    """
    steps = get_setting('PRETRAIN_STEPS') if steps is None else steps
    batch = get_setting('PRETRAIN_BATCH') if batch is None else batch
    lr = get_setting('PRETRAIN_LR') if lr is None else lr
    if dptran.n_poi != model.n_cells:
        raise ParameterError("Transition matrix covers %d cells, the model %d" % (dptran.n_poi, model.n_cells))
    if dptran.i_res > model.depth:
        raise InvalidResolutionError("Transition resolution %d exceeds model depth %d"
                                     % (dptran.i_res, model.depth))
    if steps < 0 or batch < 1 or not lr > 0:
        raise ParameterError("pretrain needs steps >= 0, batch >= 1 and lr > 0")

    rng = make_rng(seed)
    temp = temp_network_for(model, dptran.i_res, rng) if temp is None else temp
    params = dict(model.params)
    params.update(temp.params)
    alpha = np.ones(4 ** dptran.i_res)
    losses = []
    for step in range(steps):
        mixes = rng.dirichlet(alpha, size=batch)
        cache = {}
        loss = ad.scale(ad.add_n([mixture_kl(model, temp, dptran, r, cache) for r in mixes]), 1.0 / batch)
        grads = ad.backward(loss, params)
        for name, g in grads.items():
            params[name].value = params[name].value - lr * g
        losses.append(float(loss.value))
        if step % 100 == 0:
            logger.debug("pretrain step %d: kl=%.6f", step, losses[-1])
    if losses:
        logger.info("Pretrained %s for %d steps: kl %.6f -> %.6f", model.kind, steps, losses[0], losses[-1])
    return PretrainResult(model, temp, losses)
