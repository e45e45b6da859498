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
The two trajectory generators.

Both read a trajectory left to right with a GRU, starting from a
start-of-sequence token, and factor every next visit as
``Pr(cell | h) * Pr(slot | h)``. They differ in how cells are encoded and
scored:

``Baseline``
    one embedding row per cell (``poi.M``) and an affine scoring map
    ``g_POI`` over all cells plus end-of-sequence (``poi.W``, ``poi.b``).

``HRNet``
    cell encodings come from a single root vector expanded ``d`` times by
    2x2 transposed convolutions, so a level-``i`` map holds one vector per
    cell of the ``2**i x 2**i`` division. A cell is scored by the dot product
    of ``f_query(h)`` with ``f_key(encoding)``; with ``multitask`` on, the
    loss adds one cross-entropy per resolution against the cell covering the
    target.

Parameters live in ``model.params`` (name -> ``Tensor``); every forward pass
builds a fresh graph over them, so gradients of different trajectories can be
taken concurrently.
"""

import logging
import math

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from mobility_synth import autodiff as ad
from mobility_synth.conf import get_setting
from mobility_synth.exceptions import CellRangeError, InvalidResolutionError, ParameterError
from mobility_synth.geo import up_res_value
from mobility_synth.seeding import make_rng

logger = logging.getLogger(__name__)

MODEL_KINDS = ('baseline', 'hrnet')

SOS = None


@dataclass
class ResolutionDistribution:
    level: int
    probs: np.ndarray
    has_eos: bool = False

    @property
    def eos_prob(self):
        return float(self.probs[-1]) if self.has_eos else 0.0

    @property
    def cell_probs(self):
        return self.probs[:-1] if self.has_eos else self.probs


class Generator(object):
    """
    Shared prefix encoder (GRU over visit encodings) and time head.

    Subclasses provide ``location_encoding``, ``cell_logits`` and ``loss``.
    """
    kind = None

    def __init__(self, depth, n_time, n_dim=None, n_hidden=None, n_key=None,
                 n_time_dim=None, n_ff_hidden=None, seed=None):
        self.depth = int(depth)
        self.n_time = int(n_time)
        self.n_dim = get_setting('N_DIM') if n_dim is None else int(n_dim)
        self.n_hidden = get_setting('N_HIDDEN') if n_hidden is None else int(n_hidden)
        self.n_key = get_setting('N_KEY') if n_key is None else int(n_key)
        self.n_time_dim = get_setting('N_TIME_DIM') if n_time_dim is None else int(n_time_dim)
        self.n_ff_hidden = get_setting('N_FF_HIDDEN') if n_ff_hidden is None else int(n_ff_hidden)
        if self.depth < 0 or self.n_time < 1:
            raise ParameterError("Model needs depth >= 0 and n_time >= 1")
        self.params = OrderedDict()
        rng = make_rng(seed)
        self._init_shared(rng)
        self._init_location(rng)

    # parameters

    @property
    def width(self):
        return 2 ** self.depth

    @property
    def n_cells(self):
        return 4 ** self.depth

    @property
    def eos_index(self):
        return self.n_cells

    def _add(self, name, value):
        self.params[name] = ad.parameter(value, name)

    def _uniform(self, rng, name, shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        self._add(name, rng.uniform(-bound, bound, size=shape))

    def _init_shared(self, rng):
        H, n_in = self.n_hidden, self.n_time_dim + self.n_dim + 1
        self._uniform(rng, 'time.M', (self.n_time, self.n_time_dim), self.n_time_dim)
        self._uniform(rng, 'tok.sos', (self.n_time_dim,), self.n_time_dim)
        self._uniform(rng, 'gru.W_ih', (3 * H, n_in), n_in)
        self._uniform(rng, 'gru.W_hh', (3 * H, H), H)
        self._uniform(rng, 'gru.b_ih', (3 * H,), H)
        self._uniform(rng, 'gru.b_hh', (3 * H,), H)
        self._uniform(rng, 'time.W', (self.n_time, H), H)
        self._uniform(rng, 'time.b', (self.n_time,), H)

    def _init_location(self, rng):
        raise NotImplementedError

    def parameter_count(self):
        return int(sum(t.value.size for t in self.params.values()))

    def hyperparameters(self):
        return OrderedDict([('depth', self.depth), ('n_time', self.n_time), ('n_dim', self.n_dim),
                            ('n_hidden', self.n_hidden), ('n_key', self.n_key),
                            ('n_time_dim', self.n_time_dim), ('n_ff_hidden', self.n_ff_hidden)])

    def state(self):
        """Checkpoint payload: (metadata, ordered name -> array)."""
        meta = OrderedDict([('kind', self.kind), ('hyperparameters', self.hyperparameters())])
        return meta, OrderedDict((name, t.value.copy()) for name, t in self.params.items())

    def load_arrays(self, arrays):
        for name, t in self.params.items():
            if name not in arrays:
                raise ParameterError("Checkpoint lacks parameter %s" % name)
            value = np.asarray(arrays[name], dtype=np.float64)
            if value.shape != t.value.shape:
                raise ParameterError("Parameter %s has shape %s, checkpoint %s" % (name, t.value.shape, value.shape))
            t.value = value.copy()

    def copy_arrays(self):
        return OrderedDict((name, t.value.copy()) for name, t in self.params.items())

    def apply_update(self, grads, learning_rate):
        for name, g in grads.items():
            if name in self.params:
                self.params[name].value = self.params[name].value - learning_rate * g

    # prefix encoder

    def gru_weights(self):
        p = self.params
        return ad.GRUWeights(p['gru.W_ih'], p['gru.W_hh'], p['gru.b_ih'], p['gru.b_hh'])

    def check_cell(self, cell, level=None):
        level = self.depth if level is None else level
        if not 0 <= cell < 4 ** level:
            raise CellRangeError("Cell %d is not valid at resolution %d" % (cell, level))

    def encode_visit(self, visit, cache=None):
        """
        ``[M_time[slot], location encoding]`` for a (cell, slot) visit; the
        start token ``SOS`` uses its own time-part embedding and a zero
        location part.
        """
        cache = {} if cache is None else cache
        if visit is SOS:
            return ad.concat([self.params['tok.sos'], ad.constant(np.zeros(self.n_dim))])
        cell, slot = visit
        if not 0 <= slot < self.n_time:
            raise ParameterError("Time slot %d outside [0, %d)" % (slot, self.n_time))
        self.check_cell(cell)
        return ad.concat([ad.gather_rows(self.params['time.M'], int(slot)),
                          self.location_encoding(int(cell), cache)])

    def gru_input(self, visit, cache):
        flag = ad.constant(np.array([1.0 if visit is SOS else 0.0]))
        return ad.concat([self.encode_visit(visit, cache), flag])

    def initial_state(self):
        return ad.constant(np.zeros(self.n_hidden))

    def step(self, h, visit, cache):
        return ad.gru_cell(h, self.gru_input(visit, cache), self.gru_weights())

    def hidden_states(self, visits, cache):
        """Hidden states after SOS, v_1, ..., v_n (n + 1 states)."""
        weights = self.gru_weights()
        h = ad.gru_cell(self.initial_state(), self.gru_input(SOS, cache), weights)
        states = [h]
        for visit in visits:
            h = ad.gru_cell(h, self.gru_input(visit, cache), weights)
            states.append(h)
        return states

    def time_logits(self, h):
        return ad.linear(h, self.params['time.W'], self.params['time.b'])

    def next_distribution(self, prefix, cache=None):
        """
        Distributions of the visit following ``prefix``: finest-resolution
        cells plus end-of-sequence, and time slots.
        """
        cache = {} if cache is None else cache
        h = self.hidden_states(list(prefix), cache)[-1]
        return self.distributions(h, cache)

    def distributions(self, h, cache):
        cells = ResolutionDistribution(self.depth, ad.softmax_value(self.cell_logits(h, self.depth, cache, True).value),
                                       has_eos=True)
        return cells, ad.softmax_value(self.time_logits(h).value)

    # subclass hooks

    def location_encoding(self, cell, cache):
        raise NotImplementedError

    def cell_logits(self, h, level, cache, with_eos):
        raise NotImplementedError

    def loss(self, traj, cache=None):
        raise NotImplementedError


class Baseline(Generator):
    kind = 'baseline'

    def _init_location(self, rng):
        n = self.n_cells
        self._uniform(rng, 'poi.M', (n, self.n_dim), self.n_dim)
        self._uniform(rng, 'poi.W', (n + 1, self.n_hidden), self.n_hidden)
        self._uniform(rng, 'poi.b', (n + 1,), self.n_hidden)

    def location_encoding(self, cell, cache):
        return ad.gather_rows(self.params['poi.M'], cell)

    def cell_logits(self, h, level, cache, with_eos):
        if level != self.depth:
            raise InvalidResolutionError("The baseline scores only the finest resolution")
        logits = ad.linear(h, self.params['poi.W'], self.params['poi.b'])
        return logits if with_eos else ad.slice_(logits, 0, self.n_cells)

    def loss(self, traj, cache=None):
        """Cross-entropy of every cell (then EOS) through g_POI plus time cross-entropy."""
        cache = {} if cache is None else cache
        visits = list(traj)
        states = self.hidden_states(visits, cache)
        terms = []
        for h, (cell, slot) in zip(states, visits):
            terms.append(ad.cross_entropy(self.cell_logits(h, self.depth, cache, True), cell))
            terms.append(ad.cross_entropy(self.time_logits(h), slot))
        terms.append(ad.cross_entropy(self.cell_logits(states[-1], self.depth, cache, True), self.eos_index))
        return ad.add_n(terms)


class HRNet(Generator):
    kind = 'hrnet'

    def __init__(self, depth, n_time, multitask=True, **kwargs):
        self.multitask = bool(multitask)
        super(HRNet, self).__init__(depth, n_time, **kwargs)

    def hyperparameters(self):
        hp = super(HRNet, self).hyperparameters()
        hp['multitask'] = self.multitask
        return hp

    def _init_location(self, rng):
        D, F, K = self.n_dim, self.n_ff_hidden, self.n_key
        self._add('root', 0.1 * rng.standard_normal(D))
        for level in range(1, self.depth + 1):
            self._uniform(rng, 'deconv.%d' % level, (D, 2, 2, D), D)
        self._uniform(rng, 'tok.eos', (D,), D)
        self._uniform(rng, 'query.W1', (F, self.n_hidden), self.n_hidden)
        self._uniform(rng, 'query.b1', (F,), self.n_hidden)
        self._uniform(rng, 'query.W2', (K, F), F)
        self._uniform(rng, 'query.b2', (K,), F)
        self._uniform(rng, 'key.W1', (F, D), D)
        self._uniform(rng, 'key.b1', (F,), D)
        self._uniform(rng, 'key.W2', (K, F), F)
        self._uniform(rng, 'key.b2', (K,), F)

    # hierarchical encoding

    def level_encodings(self, cache):
        """
        Flattened maps ``[M_0, ..., M_d]``; ``M_i`` has shape (4**i, n_dim)
        and row ``l`` encodes cell ``l`` at resolution ``i``.
        """
        if 'levels' not in cache:
            D = self.n_dim
            grid = ad.reshape(self.params['root'], (1, 1, D))
            levels = [ad.reshape(grid, (1, D))]
            for level in range(1, self.depth + 1):
                grid = ad.quad_deconv(grid, self.params['deconv.%d' % level])
                levels.append(ad.reshape(grid, (4 ** level, D)))
            cache['levels'] = levels
        return cache['levels']

    def hiencode(self, level, cell, cache=None):
        if not 0 <= level <= self.depth:
            raise InvalidResolutionError("Resolution %d outside [0, %d]" % (level, self.depth))
        self.check_cell(cell, level)
        cache = {} if cache is None else cache
        return ad.gather_rows(self.level_encodings(cache)[level], int(cell))

    def location_encoding(self, cell, cache):
        return self.hiencode(self.depth, cell, cache)

    def f_query(self, h):
        p = self.params
        hidden = ad.tanh(ad.linear(h, p['query.W1'], p['query.b1']))
        return ad.linear(hidden, p['query.W2'], p['query.b2'])

    def f_key(self, x):
        p = self.params
        hidden = ad.tanh(ad.linear(x, p['key.W1'], p['key.b1']))
        return ad.linear(hidden, p['key.W2'], p['key.b2'])

    def keys(self, level, cache):
        slot = ('keys', level)
        if slot not in cache:
            cache[slot] = self.f_key(self.level_encodings(cache)[level])
        return cache[slot]

    def eos_key(self, cache):
        if 'eos_key' not in cache:
            cache['eos_key'] = self.f_key(self.params['tok.eos'])
        return cache['eos_key']

    def logits_from_query(self, query, level, cache, with_eos):
        scores = ad.matmul(self.keys(level, cache), query)
        if with_eos:
            eos = ad.reshape(ad.dot(self.eos_key(cache), query), (1,))
            scores = ad.concat([scores, eos])
        return scores

    def cell_logits(self, h, level, cache, with_eos):
        if not 0 <= level <= self.depth:
            raise InvalidResolutionError("Resolution %d outside [0, %d]" % (level, self.depth))
        return self.logits_from_query(self.f_query(h), level, cache, with_eos and level == self.depth)

    def score_resolution(self, h, level, cache=None):
        """Softmax of query-key dot products over all cells at ``level`` (plus EOS at ``d``)."""
        cache = {} if cache is None else cache
        with_eos = level == self.depth
        logits = self.cell_logits(h, level, cache, with_eos)
        return ResolutionDistribution(level, ad.softmax_value(logits.value), has_eos=with_eos)

    def loss(self, traj, cache=None):
        """
        For every visit: cross-entropy at each resolution 1..d against the
        cell covering the target (finest only without multitask) plus time
        cross-entropy; then cross-entropy of EOS at the finest resolution.
        """
        cache = {} if cache is None else cache
        visits = list(traj)
        states = self.hidden_states(visits, cache)
        d = self.depth
        levels = range(1, d + 1) if self.multitask and d > 0 else [d]
        terms = []
        for h, (cell, slot) in zip(states, visits):
            query = self.f_query(h)
            for level in levels:
                target = up_res_value(cell, d, level)
                terms.append(ad.cross_entropy(self.logits_from_query(query, level, cache, level == d), target))
            terms.append(ad.cross_entropy(self.time_logits(h), slot))
        final = self.logits_from_query(self.f_query(states[-1]), d, cache, True)
        terms.append(ad.cross_entropy(final, self.eos_index))
        return ad.add_n(terms)


def multires_loss(model, traj, cache=None):
    return model.loss(traj, cache)


def build_model(kind, depth, n_time, multitask=True, seed=None, **hyperparameters):
    if kind == 'baseline':
        return Baseline(depth, n_time, seed=seed, **hyperparameters)
    if kind == 'hrnet':
        return HRNet(depth, n_time, multitask=multitask, seed=seed, **hyperparameters)
    raise ParameterError("Unknown model kind %r (expected one of %s)" % (kind, ', '.join(MODEL_KINDS)))


def model_from_state(meta, arrays):
    hp = dict(meta['hyperparameters'])
    depth, n_time = hp.pop('depth'), hp.pop('n_time')
    multitask = hp.pop('multitask', True)
    model = build_model(meta['kind'], depth, n_time, multitask=multitask, seed=0, **hp)
    model.load_arrays(arrays)
    return model
