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
Sampling synthetic trajectories from a trained generator, one visit at a
time through the chain rule.

At every step the previous cell and all slots before the previous slot are
masked out, so emitted trajectories never repeat a cell consecutively and
never go back in time. End-of-sequence cannot end an empty trajectory.
"""

import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from mobility_synth.conf import get_setting
from mobility_synth.exceptions import ParameterError
from mobility_synth.geo import GridSpec
from mobility_synth.model import SOS
from mobility_synth.preprocess import Dataset, Trajectory
from mobility_synth.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)


@dataclass
class GenConfig:
    count: int = 0
    max_length: int = None
    seed: int = None
    mask_current: bool = True
    threads: int = None

    def __post_init__(self):
        if self.max_length is None:
            self.max_length = get_setting('GEN_MAX_LENGTH')
        if self.threads is None:
            self.threads = get_setting('THREADS')
        if self.max_length < 1:
            raise ParameterError("Maximum trajectory length must be >= 1, got %r" % (self.max_length,))
        if self.count < 0:
            raise ParameterError("Cannot generate %r trajectories" % (self.count,))


def _normalized(p):
    total = p.sum()
    if not total > 0:
        return None
    return p / total


def sample_trajectory(model, config, rng, cache=None):
    cache = {} if cache is None else cache
    eos = model.eos_index
    h = model.step(model.initial_state(), SOS, cache)
    visits = []
    while len(visits) < config.max_length:
        cell_dist, time_probs = model.distributions(h, cache)
        p = cell_dist.probs.copy()
        if not visits:
            p[eos] = 0.0
        elif config.mask_current:
            p[visits[-1][0]] = 0.0
        p = _normalized(p)
        if p is None:
            if visits:
                break
            # every cell underflowed to zero: take the best scored one
            p = np.zeros_like(cell_dist.probs)
            p[int(np.argmax(cell_dist.cell_probs))] = 1.0
        cell = int(rng.choice(len(p), p=p))
        if cell == eos or (visits and cell == visits[-1][0]):
            break
        pt = time_probs.copy()
        if visits:
            pt[:visits[-1][1]] = 0.0
        pt = _normalized(pt)
        if pt is None:
            break
        slot = int(rng.choice(len(pt), p=pt))
        visits.append((cell, slot))
        h = model.step(h, (cell, slot), cache)
    return Trajectory(visits)


def generate_dataset(model, config, spec=None):
    """
    ``config.count`` independent samples; sample ``k`` draws from its own
    generator seeded with ``derive_seed(seed, 'sample', k)``.
    """
    spec = GridSpec.unit(model.width) if spec is None else spec
    if spec.depth != model.depth:
        raise ParameterError("Grid depth %d does not match model depth %d" % (spec.depth, model.depth))
    seed = config.seed
    if seed is None:
        seed = int(make_rng().integers(0, 2 ** 63))
    cache = {}
    # fills the shared encoding cache before worker threads read it
    model.next_distribution([], cache)

    def one(k):
        return sample_trajectory(model, config, make_rng(derive_seed(seed, 'sample', k)), cache)

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        trajectories = list(pool.map(one, range(config.count)))
    dataset = Dataset(spec, model.n_time, trajectories)
    logger.info("Generated %d trajectories (mean length %.2f)", len(dataset),
                np.mean([len(t) for t in trajectories]) if trajectories else 0.0)
    return dataset.validate()
