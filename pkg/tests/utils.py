"""
Brute-force oracles and helpers shared by the test modules.
"""

import shutil
import tempfile

import numpy as np

from mobility_synth.geo import GridSpec
from mobility_synth.preprocess import Dataset, Trajectory


def random_trajectory(rng, n_cells, n_time, length):
    visits = []
    slot = 0
    for _ in range(length):
        cell = int(rng.integers(0, n_cells))
        while visits and cell == visits[-1][0]:
            cell = int(rng.integers(0, n_cells))
        slot = int(rng.integers(slot, n_time))
        visits.append((cell, slot))
    return Trajectory(visits)


def random_dataset(seed, w, n, max_length=5, n_time=6):
    rng = np.random.default_rng(seed)
    spec = GridSpec.unit(w)
    trajectories = [random_trajectory(rng, spec.n_poi, n_time, int(rng.integers(1, max_length + 1)))
                    for _ in range(n)]
    return Dataset(spec, n_time, trajectories)


def naive_quad_deconv(M, K):
    s, n_in = M.shape[0], M.shape[2]
    n_out = K.shape[0]
    out = np.zeros((2 * s, 2 * s, n_out))
    for x in range(s):
        for y in range(s):
            for dx in range(2):
                for dy in range(2):
                    for k in range(n_out):
                        out[2 * x + dx, 2 * y + dy, k] = sum(K[k, dx, dy, j] * M[x, y, j] for j in range(n_in))
    return out


def brute_force_assignment_cost(cost):
    """Minimum over all injective assignments, enumerated by subsets of used columns."""
    n, m = cost.shape
    best = {0: 0.0}
    for i in range(n):
        nxt = {}
        for used, value in best.items():
            for c in range(m):
                if used & (1 << c):
                    continue
                key = used | (1 << c)
                total = value + cost[i, c]
                if total < nxt.get(key, np.inf):
                    nxt[key] = total
        best = nxt
    return min(best.values())


def relative_error(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def deltaCalc(func):
    """
    Decorator returning ``(delta, result)`` where ``delta`` maps every
    parameter name of the model passed first to how much ``func`` moved it
    (max absolute change).
    """

    def inner(model, *args, **kwargs):
        before = model.copy_arrays()
        result = func(model, *args, **kwargs)
        delta = dict((name, float(np.max(np.abs(model.params[name].value - value))))
                     for name, value in before.items())
        return (delta, result)

    return inner


class TemporaryDirectoryMixin(object):

    def setUp(self):
        super(TemporaryDirectoryMixin, self).setUp()
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir, ignore_errors=True)
        super(TemporaryDirectoryMixin, self).tearDown()
