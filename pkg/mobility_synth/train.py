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
DP-SGD training of a generator.

Every step draws a Poisson sample of trajectories at rate ``q``, takes one
gradient per trajectory, clips and noises their sum (``dp.clip_and_noise``)
and applies a plain SGD update. The Renyi accountant is advanced after each
step and the loop stops before a step that would push epsilon past the
target.
"""

import logging
import math
import os

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mobility_synth import autodiff as ad
from mobility_synth.conf import get_setting
from mobility_synth.dp import NoiseParams, PrivacyReport, RdpAccountant, accountant_epsilon, clip_and_noise
from mobility_synth.exceptions import InfeasibleNoiseError, ParameterError
from mobility_synth.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)
step_logger = logging.getLogger(__name__ + '.steps')

SIGMA_GRID = np.geomspace(0.3, 300.0, 2000)


@dataclass
class TrainConfig:
    """
    ``sigma=None`` lets ``dpsgd_train`` plan the noise multiplier for the
    whole run; ``sigma=0`` trains without privacy.
    """
    epsilon: float = None
    delta: float = None
    clip_norm: float = None
    sigma: float = None
    batch: int = None
    epochs: int = None
    lr: float = None
    seed: int = None
    threads: int = None
    checkpoint_every: int = None
    checkpoint_dir: str = None

    def __post_init__(self):
        for name, setting in (('epsilon', 'EPSILON'), ('delta', 'DELTA'), ('clip_norm', 'CLIP_NORM'),
                              ('batch', 'BATCH'), ('epochs', 'EPOCHS'), ('lr', 'LR'),
                              ('threads', 'THREADS'), ('checkpoint_every', 'CHECKPOINT_EVERY')):
            if getattr(self, name) is None:
                setattr(self, name, get_setting(setting))
        if not self.epsilon > 0:
            raise ParameterError("DP-SGD needs a positive epsilon, got %r" % (self.epsilon,))
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1), got %r" % (self.delta,))
        if self.batch < 1 or self.epochs < 0 or not self.lr > 0 or self.threads < 1:
            raise ParameterError("Invalid training schedule: batch=%r epochs=%r lr=%r threads=%r"
                                 % (self.batch, self.epochs, self.lr, self.threads))
        if not self.clip_norm > 0:
            raise ParameterError("Clip norm must be positive, got %r" % (self.clip_norm,))
        # sigma=None is planned later and always comes out positive
        if math.isinf(self.clip_norm) and self.sigma != 0:
            raise ParameterError("Noisy training needs a finite clip norm")


@dataclass
class TrainResult:
    model: object
    report: PrivacyReport
    losses: list = field(default_factory=list)


def sampling_schedule(n_records, batch, epochs):
    """(q, steps per epoch, maximal steps) for expected batch ``batch``."""
    if n_records < 1:
        raise ParameterError("Cannot train on an empty dataset")
    q = min(1.0, float(batch) / n_records)
    per_epoch = max(1, int(round(1.0 / q)))
    return q, per_epoch, per_epoch * epochs


def plan_noise(epsilon, delta, q, max_steps, grid=SIGMA_GRID):
    """
    Smallest sigma on ``grid`` whose accountant epsilon after ``max_steps``
    steps at rate ``q`` is at most ``epsilon``.
    """
    if not epsilon > 0:
        raise ParameterError("Noise planning needs a positive epsilon, got %r" % (epsilon,))

    def fits(sigma):
        return accountant_epsilon(NoiseParams(1.0, sigma, q, max_steps), delta) <= epsilon

    if fits(grid[0]):
        return float(grid[0])
    if not fits(grid[-1]):
        raise InfeasibleNoiseError("No noise multiplier up to %g reaches epsilon=%g after %d steps at q=%g"
                                   % (grid[-1], epsilon, max_steps, q))
    lo, hi = 0, len(grid) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(grid[mid]):
            hi = mid
        else:
            lo = mid
    return float(grid[hi])


def example_gradient(model, traj, index=None):
    loss = model.loss(traj)
    return float(loss.value), ad.backward(loss, model.params, example=index)


def dpsgd_train(model, dataset, config, epoch_callback=None):
    """
    Train ``model`` in place; returns a ``TrainResult`` whose report carries
    the epsilon actually spent.

    ``epoch_callback(epoch, model)`` runs after every completed epoch.
    """
    n = len(dataset)
    q, per_epoch, max_steps = sampling_schedule(n, config.batch, config.epochs)
    sigma = config.sigma
    if sigma is None:
        sigma = plan_noise(config.epsilon, config.delta, q, max_steps)
        logger.info("Planned noise multiplier %.4f for %d steps at q=%.5f", sigma, max_steps, q)
    if sigma == 0:
        logger.warning("Training without noise: the result is not differentially private")

    sample_rng = make_rng(None if config.seed is None else derive_seed(config.seed, 'sample'))
    noise_rng = make_rng(None if config.seed is None else derive_seed(config.seed, 'noise'))
    accountant = RdpAccountant()
    expected_batch = q * n
    losses = []
    steps = 0

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        for epoch in range(config.epochs):
            stopped = False
            for _ in range(per_epoch):
                if sigma > 0 and accountant.epsilon_after(q, sigma, config.delta) > config.epsilon:
                    logger.info("Stopping after %d steps: next step would exceed epsilon=%g",
                                steps, config.epsilon)
                    stopped = True
                    break
                picked = np.flatnonzero(sample_rng.random(n) < q)
                batch = [dataset.trajectories[i] for i in picked]
                results = list(pool.map(lambda item: example_gradient(model, item[1], item[0]),
                                        zip(picked.tolist(), batch)))
                if results:
                    per_example = [g for _, g in results]
                    loss = float(np.mean([value for value, _ in results]))
                else:
                    per_example = [ad.GradientSet.zeros_like(model.params)]
                    loss = float('nan')
                mean_norm = float(np.mean([g.norm() for g in per_example]))
                noisy = clip_and_noise(per_example, config.clip_norm, sigma, expected_batch, noise_rng)
                model.apply_update(noisy.grads, config.lr)
                if sigma > 0:
                    accountant.compose(q, sigma)
                steps += 1
                losses.append(loss)
                spent = accountant.epsilon(config.delta) if sigma > 0 else math.inf
                step_logger.info("step=%d batch=%d grad_norm=%.6f loss=%.6f epsilon=%.6f",
                                 steps, len(batch), mean_norm, loss, spent)
                if config.checkpoint_dir and config.checkpoint_every and steps % config.checkpoint_every == 0:
                    save_step_checkpoint(model, config.checkpoint_dir, steps)
            if stopped:
                break
            if epoch_callback is not None:
                epoch_callback(epoch, model)

    if sigma > 0:
        epsilon = accountant_epsilon(NoiseParams(config.clip_norm, sigma, q, steps), config.delta)
    else:
        epsilon = math.inf if steps else 0.0
    report = PrivacyReport(epsilon_sgd=epsilon, epsilon_pretrain=0.0, delta=config.delta, sigma=sigma,
                           clip_norm=config.clip_norm, steps=steps, sampling_rate=q)
    logger.info("Trained %s for %d steps (sigma=%.4f, q=%.5f): epsilon=%.6g",
                model.kind, steps, sigma, q, epsilon)
    return TrainResult(model, report, losses)


def save_step_checkpoint(model, directory, step):
    from mobility_synth.fileformats import save_model

    os.makedirs(directory, exist_ok=True)
    save_model(model, os.path.join(directory, 'step-%06d.ck' % step))
