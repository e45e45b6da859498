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
Fidelity metrics comparing a generated dataset against the real one.

Nine discrepancies are reported. Jensen-Shannon divergence (base 2, so in
[0, 1]) for distributions:

  waypoint, route
      per start cell ``s`` and cell ``l``, the binary distribution of "``l`` is
      visited (waypoint) or crossed (route) after starting at ``s``"; averaged
      over the cells seen in either dataset, then over starts
  destination, transition
      per start cell, the distribution of the last resp. second cell
  travel_distance, diameter
      histograms of per-trajectory scalars over ``n_bin`` equal bins of
      ``[0, d_max]``, ``d_max`` taken from the real data
  density_t
      per time slot, the distribution of the occupied cell

and average relative error for counting queries:

  traj_density
      trajectories passing through any cell of a random cell set
  traj_pattern
      trajectories containing a frequent contiguous cell pattern

Start cells are the ``n_start`` most frequent first cells of the real data.
Routes join consecutive visits by 8-connected raster lines on the grid.
"""

import logging

from collections import Counter, OrderedDict
from dataclasses import dataclass, field

import numpy as np

from mobility_synth.conf import get_setting
from mobility_synth.exceptions import DimensionError, ParameterError
from mobility_synth.geo import cell_centers, pairwise_distance_m
from mobility_synth.seeding import make_rng

logger = logging.getLogger(__name__)

METRIC_NAMES = ('waypoint', 'destination', 'transition', 'travel_distance', 'diameter', 'route',
                'density_t', 'traj_density', 'traj_pattern')
START_CONDITIONED = ('waypoint', 'destination', 'transition', 'route')
BINARY_METRICS = ('waypoint', 'route')
SCALAR_METRICS = ('travel_distance', 'diameter')


# discrepancy measures

def _kl2(p, m):
    support = p > 0
    return float(np.sum(p[support] * np.log2(p[support] / m[support])))


def js_divergence(p, q):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionError("js_divergence: supports of size %s and %s" % (p.shape, q.shape))
    m = 0.5 * (p + q)
    value = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return min(1.0, max(0.0, value))


def are(real_counts, gen_counts, phi=None):
    """Mean of ``|real - gen| / max(real, phi)`` over queries."""
    phi = get_setting('PHI') if phi is None else phi
    real = np.asarray(real_counts, dtype=np.float64)
    gen = np.asarray(gen_counts, dtype=np.float64)
    if real.shape != gen.shape:
        raise DimensionError("are: %d real counts against %d generated" % (real.size, gen.size))
    if not phi > 0:
        raise ParameterError("ARE needs phi > 0, got %r" % (phi,))
    if real.size == 0:
        return 0.0
    return float(np.mean(np.abs(real - gen) / np.maximum(real, phi)))


# routes

def raster_line(a, b, w):
    """8-connected raster cells from cell ``a`` to cell ``b`` (both included)."""
    r0, c0 = divmod(a, w)
    r1, c1 = divmod(b, w)
    dr, dc = abs(r1 - r0), -abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dr + dc
    cells = []
    while True:
        cells.append(r0 * w + c0)
        if r0 == r1 and c0 == c1:
            return cells
        e2 = 2 * err
        if e2 >= dc:
            err += dc
            r0 += sr
        if e2 <= dr:
            err += dr
            c0 += sc


def route_cells(traj, w):
    cells = traj.cells
    return set(cells[:1]) | route_after_start(traj, w)


def route_after_start(traj, w):
    """Cells crossed after leaving the start; the start counts again only when revisited."""
    cells = traj.cells
    crossed = set()
    for a, b in zip(cells, cells[1:]):
        crossed.update(raster_line(a, b, w)[1:])
    return crossed


# start-conditioned distributions

@dataclass
class StartConditioned:
    """
    ``dists[start]`` is a distribution over cells (destination, transition)
    or a vector of presence probabilities per cell (waypoint, route).
    """
    kind: str
    dists: dict
    skipped: list = field(default_factory=list)


def top_starts(dataset, n_start=None):
    """The ``n_start`` most frequent first cells, ties broken by cell id."""
    n_start = get_setting('N_START') if n_start is None else n_start
    counts = Counter(traj.visits[0][0] for traj in dataset.trajectories)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [cell for cell, _ in ranked[:n_start]]


def _start_targets(traj, kind, w):
    cells = traj.cells
    if kind == 'waypoint':
        return set(cells[1:])
    if kind == 'route':
        return route_after_start(traj, w)
    if kind == 'destination':
        return [cells[-1]]
    if kind == 'transition':
        return cells[1:2]
    raise ParameterError("Unknown start-conditioned metric %r" % (kind,))


def start_conditioned_distributions(dataset, kind, starts):
    if not starts:
        raise ParameterError("Start-conditioned metrics need at least one start cell")
    n_cells, w = dataset.spec.n_poi, dataset.spec.width
    wanted = set(starts)
    sums = dict((s, np.zeros(n_cells)) for s in starts)
    totals = Counter()
    for traj in dataset.trajectories:
        start = traj.visits[0][0]
        if start not in wanted:
            continue
        targets = _start_targets(traj, kind, w)
        if kind == 'transition' and not targets:
            continue
        totals[start] += 1
        for cell in targets:
            sums[start][cell] += 1.0
    dists, skipped = OrderedDict(), []
    for s in starts:
        if totals[s] == 0:
            skipped.append(s)
            continue
        dists[s] = sums[s] / totals[s]
    if skipped:
        logger.debug("%s: %d start cells without trajectories", kind, len(skipped))
    return StartConditioned(kind, dists, skipped)


def _binary_js(p, q):
    cells = np.flatnonzero((p > 0) | (q > 0))
    if cells.size == 0:
        return 0.0
    return float(np.mean([js_divergence([p[l], 1.0 - p[l]], [q[l], 1.0 - q[l]]) for l in cells]))


def compare_start_conditioned(real, gen):
    """Mean JS over starts present in both; starts missing from ``gen`` are returned as skipped."""
    binary = real.kind in BINARY_METRICS
    values, skipped = [], list(real.skipped)
    for start, p in real.dists.items():
        q = gen.dists.get(start)
        if q is None:
            skipped.append(start)
            continue
        values.append(_binary_js(p, q) if binary else js_divergence(p, q))
    if not values:
        return (1.0 if real.dists else 0.0), skipped
    return float(np.mean(values)), skipped


# scalar metrics

@dataclass(frozen=True)
class HistogramSpec:
    d_max: float
    n_bin: int

    def __post_init__(self):
        if self.d_max < 0 or self.n_bin < 1:
            raise ParameterError("Histogram needs d_max >= 0 and n_bin >= 1, got %r" % (self,))

    def bin_of(self, value):
        if self.d_max == 0:
            return 0
        return min(int(value / self.d_max * self.n_bin), self.n_bin - 1)


def trajectory_scalars(dataset, kind):
    centers = cell_centers(dataset.spec)
    values = []
    for traj in dataset.trajectories:
        points = centers[traj.cells]
        if kind == 'travel_distance':
            steps = np.diag(pairwise_distance_m(points[:-1], points[1:])) if len(points) > 1 else []
            values.append(float(np.sum(steps)))
        elif kind == 'diameter':
            values.append(float(pairwise_distance_m(points, points).max()))
        else:
            raise ParameterError("Unknown scalar metric %r" % (kind,))
    return values


def scalar_metrics(dataset, spec, kind):
    """Normalized histogram of the per-trajectory ``kind`` values under ``spec``."""
    hist = np.zeros(spec.n_bin)
    for value in trajectory_scalars(dataset, kind):
        hist[spec.bin_of(value)] += 1.0
    total = hist.sum()
    if total == 0:
        logger.warning("No trajectories to histogram for %s; returning an all-zero histogram", kind)
        return hist
    return hist / total


def histogram_spec_for(real, kind, n_bin=None):
    n_bin = get_setting('N_BIN') if n_bin is None else n_bin
    values = trajectory_scalars(real, kind)
    return HistogramSpec(max(values) if values else 0.0, n_bin)


# density at time t

@dataclass
class DensityAtT:
    dists: dict
    skipped: list = field(default_factory=list)


def occupied_cell(traj, t):
    """
    Cell occupied at slot ``t``: visit ``i`` occupies ``[t_i, t_{i+1})``, the
    last visit ``[t_n, n_time)``. ``None`` before the first visit.
    """
    cell = None
    for c, slot in traj.visits:
        if slot > t:
            break
        cell = c
    return cell


def density_at_t(dataset, times=None):
    times = range(dataset.n_time) if times is None else times
    dists, skipped = OrderedDict(), []
    for t in times:
        counts = np.zeros(dataset.spec.n_poi)
        for traj in dataset.trajectories:
            cell = occupied_cell(traj, t)
            if cell is not None:
                counts[cell] += 1.0
        if counts.sum() == 0:
            skipped.append(t)
            continue
        dists[t] = counts / counts.sum()
    return DensityAtT(dists, skipped)


# counting queries

@dataclass
class QuerySet:
    density: list
    patterns: list
    starts: list


def frequent_patterns(dataset, n_patterns=None):
    """
    The ``n_patterns`` contiguous cell patterns of length >= 3 contained in
    the most trajectories; ties go to shorter, then smaller patterns.
    """
    n_patterns = get_setting('N_PATTERNS') if n_patterns is None else n_patterns
    counts = Counter()
    for traj in dataset.trajectories:
        cells = tuple(traj.cells)
        seen = set()
        for i in range(len(cells)):
            for j in range(i + 3, len(cells) + 1):
                seen.add(cells[i:j])
        counts.update(seen)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], len(item[0]), item[0]))
    return [pattern for pattern, _ in ranked[:n_patterns]]


def build_query_set(real, n_queries=None, n_patterns=None, n_start=None, seed=0):
    n_queries = get_setting('N_DENSITY_QUERIES') if n_queries is None else n_queries
    rng = make_rng(seed)
    n_cells = real.spec.n_poi
    largest = max(1, n_cells // 20)
    density = []
    for _ in range(n_queries):
        size = int(rng.integers(1, largest + 1))
        density.append(frozenset(int(c) for c in rng.choice(n_cells, size=size, replace=False)))
    return QuerySet(density, frequent_patterns(real, n_patterns), top_starts(real, n_start))


def contains_pattern(cells, pattern):
    k = len(pattern)
    return any(tuple(cells[i:i + k]) == pattern for i in range(len(cells) - k + 1))


def count_queries(dataset, queries):
    """Per-query trajectory counts: (density counts, pattern counts)."""
    density = np.zeros(len(queries.density))
    patterns = np.zeros(len(queries.patterns))
    for traj in dataset.trajectories:
        cells = traj.cells
        visited = set(cells)
        for k, q in enumerate(queries.density):
            if not visited.isdisjoint(q):
                density[k] += 1
        for k, pattern in enumerate(queries.patterns):
            if contains_pattern(cells, pattern):
                patterns[k] += 1
    return density, patterns


# report

@dataclass
class EvalConfig:
    n_bin: int = None
    phi: float = None
    n_density_queries: int = None
    n_patterns: int = None
    n_start: int = None
    seed: int = 0

    def __post_init__(self):
        for name, setting in (('n_bin', 'N_BIN'), ('phi', 'PHI'), ('n_density_queries', 'N_DENSITY_QUERIES'),
                              ('n_patterns', 'N_PATTERNS'), ('n_start', 'N_START')):
            if getattr(self, name) is None:
                setattr(self, name, get_setting(setting))


@dataclass
class MetricReport:
    """JS entries are means in base 2; ARE entries are means over queries."""
    waypoint: float = 0.0
    destination: float = 0.0
    transition: float = 0.0
    travel_distance: float = 0.0
    diameter: float = 0.0
    route: float = 0.0
    density_t: float = 0.0
    traj_density: float = 0.0
    traj_pattern: float = 0.0
    skipped: dict = field(default_factory=dict)

    def values(self):
        return OrderedDict((name, getattr(self, name)) for name in METRIC_NAMES)

    def as_text(self):
        lines = ['# JS divergence in base 2 (mean); ARE with phi floor (mean)']
        lines.extend('%s=%.6f' % item for item in self.values().items())
        for name, items in sorted(self.skipped.items()):
            if items:
                lines.append('skipped_%s=%s' % (name, ' '.join(str(i) for i in items)))
        return '\n'.join(lines) + '\n'

    @staticmethod
    def csv_header():
        return ','.join(METRIC_NAMES)

    def as_csv_row(self):
        return ','.join(repr(float(v)) for v in self.values().values())


def full_report(real, gen, config=None):
    config = EvalConfig() if config is None else config
    if real.spec.depth != gen.spec.depth:
        raise ParameterError("Datasets use different grids (w=%d and w=%d)" % (real.spec.width, gen.spec.width))
    for role, dataset in (('real', real), ('generated', gen)):
        if not len(dataset):
            raise ParameterError("Cannot compare against an empty %s dataset" % role)
    queries = build_query_set(real, config.n_density_queries, config.n_patterns, config.n_start, config.seed)
    report = MetricReport()

    if queries.starts:
        for kind in START_CONDITIONED:
            value, skipped = compare_start_conditioned(
                start_conditioned_distributions(real, kind, queries.starts),
                start_conditioned_distributions(gen, kind, queries.starts))
            setattr(report, kind, value)
            report.skipped[kind] = skipped

    for kind in SCALAR_METRICS:
        spec = histogram_spec_for(real, kind, config.n_bin)
        setattr(report, kind, js_divergence(scalar_metrics(real, spec, kind), scalar_metrics(gen, spec, kind)))

    real_density, gen_density = density_at_t(real), density_at_t(gen)
    values = []
    skipped = list(real_density.skipped)
    for t, p in real_density.dists.items():
        if t in gen_density.dists:
            values.append(js_divergence(p, gen_density.dists[t]))
        else:
            skipped.append(t)
    report.density_t = float(np.mean(values)) if values else (1.0 if real_density.dists else 0.0)
    report.skipped['density_t'] = skipped

    real_counts, gen_counts = count_queries(real, queries), count_queries(gen, queries)
    report.traj_density = are(real_counts[0], gen_counts[0], config.phi)
    report.traj_pattern = are(real_counts[1], gen_counts[1], config.phi)

    for name, items in report.skipped.items():
        if items:
            logger.warning("%s: skipped %d entries missing from one dataset", name, len(items))
    logger.info("Metrics: %s", ' '.join('%s=%.4f' % item for item in report.values().items()))
    return report
