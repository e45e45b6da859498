#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_evaluate
-------------

Tests for the fidelity metrics against brute-force enumeration over small
datasets.
"""

import math

import numpy as np

from django.test import SimpleTestCase

from mobility_synth.evaluate import METRIC_NAMES, EvalConfig, HistogramSpec, MetricReport, QuerySet, are, \
    build_query_set, compare_start_conditioned, contains_pattern, count_queries, density_at_t, \
    frequent_patterns, full_report, histogram_spec_for, js_divergence, occupied_cell, raster_line, \
    route_cells, scalar_metrics, start_conditioned_distributions, top_starts, trajectory_scalars
from mobility_synth.exceptions import DimensionError, ParameterError
from mobility_synth.geo import CellId, GridSpec, cell_center, distance_m
from mobility_synth.preprocess import Dataset, Trajectory, gen_straight_dataset

from tests.utils import random_dataset


def dataset_of(w, n_time, *visit_lists):
    return Dataset(GridSpec.unit(w), n_time, [Trajectory(visits) for visits in visit_lists])


def cells_only(w, *cell_lists):
    return dataset_of(w, 1, *[[(c, 0) for c in cells] for cells in cell_lists])


def brute_force_start_conditioned(dataset, kind, start):
    n_cells, w = dataset.spec.n_poi, dataset.spec.width
    matching = [t for t in dataset.trajectories if t.cells[0] == start]
    if kind == 'transition':
        matching = [t for t in matching if len(t) > 1]
    out = np.zeros(n_cells)
    for cell in range(n_cells):
        hits = 0
        for t in matching:
            cells = t.cells
            if kind == 'waypoint':
                hits += cell in cells[1:]
            elif kind == 'destination':
                hits += cells[-1] == cell
            elif kind == 'transition':
                hits += cells[1] == cell
            else:
                route = set()
                for a, b in zip(cells, cells[1:]):
                    route.update(raster_line(a, b, w)[1:])
                hits += cell in route
        out[cell] = hits / float(len(matching))
    return out


def is_eight_connected(cells, w):
    for a, b in zip(cells, cells[1:]):
        ra, ca = divmod(a, w)
        rb, cb = divmod(b, w)
        if max(abs(ra - rb), abs(ca - cb)) != 1:
            return False
    return True


class DiscrepancyTests(SimpleTestCase):

    def test_js_identity(self):
        p = np.array([0.1, 0.2, 0.7])
        self.assertEqual(js_divergence(p, p), 0.0)

    def test_js_disjoint(self):
        self.assertAlmostEqual(js_divergence([1.0, 0.0], [0.0, 1.0]), 1.0, places=12)

    def test_js_closed_form(self):
        expected = 0.5 * math.log2(4.0 / 3) + 0.5 * (0.5 * math.log2(2.0 / 3) + 0.5)
        self.assertAlmostEqual(js_divergence([1.0, 0.0], [0.5, 0.5]), expected, places=12)
        self.assertAlmostEqual(js_divergence([1.0, 0.0], [0.5, 0.5]), 0.3113, places=4)

    def test_js_support_mismatch(self):
        with self.assertRaises(DimensionError):
            js_divergence([1.0], [0.5, 0.5])

    def test_are(self):
        self.assertEqual(are([3, 4], [3, 4], phi=1.0), 0.0)
        self.assertAlmostEqual(are([10, 0], [5, 3], phi=1.0), 1.75)
        self.assertAlmostEqual(are([2], [0], phi=5.0), 0.4)
        self.assertEqual(are([], [], phi=1.0), 0.0)


class RouteTests(SimpleTestCase):

    def test_raster_line_properties(self):
        w = 8
        for a in range(w * w):
            for b in range(0, w * w, 5):
                cells = raster_line(a, b, w)
                ra, ca = divmod(a, w)
                rb, cb = divmod(b, w)
                self.assertEqual(cells[0], a)
                self.assertEqual(cells[-1], b)
                self.assertEqual(len(cells), max(abs(ra - rb), abs(ca - cb)) + 1)
                self.assertTrue(is_eight_connected(cells, w))

    def test_straight_segments(self):
        self.assertEqual(raster_line(0, 3, 4), [0, 1, 2, 3])
        self.assertEqual(raster_line(0, 15, 4), [0, 5, 10, 15])
        self.assertEqual(raster_line(12, 0, 4), [12, 8, 4, 0])

    def test_route_cells(self):
        traj = Trajectory([(0, 0), (2, 1), (10, 2)])
        self.assertEqual(route_cells(traj, 4), {0, 1, 2, 6, 10})
        self.assertEqual(route_cells(Trajectory([(5, 0)]), 4), {5})


class StartConditionedTests(SimpleTestCase):

    def test_single_trajectory(self):
        dataset = cells_only(4, [3, 9])
        for kind in ('transition', 'destination', 'waypoint'):
            dist = start_conditioned_distributions(dataset, kind, [3]).dists[3]
            expected = np.zeros(16)
            expected[9] = 1.0
            np.testing.assert_array_equal(dist, expected)

    def test_route_counts_revisited_start(self):
        dataset = cells_only(4, [0, 2, 0])
        route = start_conditioned_distributions(dataset, 'route', [0]).dists[0]
        expected = np.zeros(16)
        expected[[0, 1, 2]] = 1.0
        np.testing.assert_array_equal(route, expected)
        waypoint = start_conditioned_distributions(dataset, 'waypoint', [0]).dists[0]
        self.assertEqual(waypoint[0], 1.0)
        plain = start_conditioned_distributions(cells_only(4, [0, 2]), 'route', [0]).dists[0]
        self.assertEqual(plain[0], 0.0)

    def test_straight_destination(self):
        dataset = gen_straight_dataset(8, 200, seed=1)
        starts = top_starts(dataset, 10)
        result = start_conditioned_distributions(dataset, 'destination', starts)
        for start, dist in result.dists.items():
            self.assertEqual(dist[start + 16], 1.0)
            self.assertEqual(dist.sum(), 1.0)

    def test_against_enumeration(self):
        dataset = random_dataset(41, 8, 20, max_length=6)
        starts = top_starts(dataset, 30)
        for kind in ('waypoint', 'destination', 'transition', 'route'):
            result = start_conditioned_distributions(dataset, kind, starts)
            for start, dist in result.dists.items():
                np.testing.assert_allclose(dist, brute_force_start_conditioned(dataset, kind, start),
                                           rtol=0, atol=1e-12)

    def test_transition_skips_single_visits(self):
        dataset = cells_only(4, [3], [3], [5, 6])
        result = start_conditioned_distributions(dataset, 'transition', [3, 5])
        self.assertEqual(result.skipped, [3])
        self.assertEqual(list(result.dists), [5])

    def test_top_starts_ties(self):
        dataset = cells_only(4, [7, 1], [2, 1], [7, 3], [2, 5], [9, 1])
        self.assertEqual(top_starts(dataset, 2), [2, 7])
        self.assertEqual(top_starts(dataset, 5), [2, 7, 9])

    def test_missing_starts_are_skipped(self):
        real = cells_only(4, [1, 2], [3, 4])
        gen = cells_only(4, [1, 2])
        value, skipped = compare_start_conditioned(start_conditioned_distributions(real, 'destination', [1, 3]),
                                                   start_conditioned_distributions(gen, 'destination', [1, 3]))
        self.assertEqual(value, 0.0)
        self.assertEqual(skipped, [3])

    def test_nothing_comparable(self):
        real = cells_only(4, [1, 2])
        gen = cells_only(4, [3, 2])
        value, skipped = compare_start_conditioned(start_conditioned_distributions(real, 'waypoint', [1]),
                                                   start_conditioned_distributions(gen, 'waypoint', [1]))
        self.assertEqual(value, 1.0)
        self.assertEqual(skipped, [1])

    def test_binary_js_averages_over_seen_cells(self):
        real = cells_only(4, [0, 1], [0, 2])
        gen = cells_only(4, [0, 1])
        value, _ = compare_start_conditioned(start_conditioned_distributions(real, 'waypoint', [0]),
                                             start_conditioned_distributions(gen, 'waypoint', [0]))
        expected = (js_divergence([0.5, 0.5], [1.0, 0.0]) + js_divergence([0.5, 0.5], [0.0, 1.0])) / 2
        self.assertAlmostEqual(value, expected, places=12)


class ScalarMetricTests(SimpleTestCase):

    def test_single_visits_fill_first_bin(self):
        dataset = cells_only(4, [1], [5], [9])
        spec = histogram_spec_for(dataset, 'travel_distance', 5)
        self.assertEqual(spec.d_max, 0.0)
        np.testing.assert_array_equal(scalar_metrics(dataset, spec, 'travel_distance'), [1.0, 0, 0, 0, 0])

    def test_two_point_diameter_is_travel_distance(self):
        dataset = cells_only(8, [0, 27], [63, 5], [12, 13])
        np.testing.assert_allclose(trajectory_scalars(dataset, 'diameter'),
                                   trajectory_scalars(dataset, 'travel_distance'), rtol=1e-12)

    def test_against_enumeration(self):
        dataset = random_dataset(42, 8, 50, max_length=6)
        spec = dataset.spec
        centers = [cell_center(spec, CellId(c, spec.depth)) for c in range(spec.n_poi)]
        travel, diameter = [], []
        for traj in dataset.trajectories:
            points = [centers[c] for c in traj.cells]
            travel.append(sum(distance_m(a, b) for a, b in zip(points, points[1:])))
            diameter.append(max(distance_m(a, b) for a in points for b in points))
        np.testing.assert_allclose(trajectory_scalars(dataset, 'travel_distance'), travel, rtol=1e-9)
        np.testing.assert_allclose(trajectory_scalars(dataset, 'diameter'), diameter, rtol=1e-9)

        values = trajectory_scalars(dataset, 'travel_distance')
        hspec = HistogramSpec(max(values), 7)
        expected = np.zeros(7)
        for v in values:
            expected[min(int(v / hspec.d_max * 7), 6)] += 1
        np.testing.assert_allclose(scalar_metrics(dataset, hspec, 'travel_distance'), expected / 50, rtol=0,
                                   atol=1e-15)
        self.assertAlmostEqual(scalar_metrics(dataset, hspec, 'travel_distance').sum(), 1.0, places=12)

    def test_maximum_lands_in_last_bin(self):
        spec = HistogramSpec(10.0, 4)
        self.assertEqual(spec.bin_of(10.0), 3)
        self.assertEqual(spec.bin_of(0.0), 0)
        self.assertEqual(spec.bin_of(12.0), 3)


class DensityTests(SimpleTestCase):

    def test_occupied_interval(self):
        dataset = dataset_of(4, 8, [(3, 0), (6, 5)])
        density = density_at_t(dataset)
        expected = np.zeros(16)
        expected[3] = 1.0
        np.testing.assert_array_equal(density.dists[2], expected)
        self.assertEqual(int(np.argmax(density.dists[7])), 6)

    def test_before_first_visit_skipped(self):
        density = density_at_t(dataset_of(4, 4, [(3, 2)]))
        self.assertEqual(density.skipped, [0, 1])
        self.assertEqual(list(density.dists), [2, 3])

    def test_against_interval_scan(self):
        dataset = random_dataset(43, 4, 30, max_length=5, n_time=6)
        density = density_at_t(dataset)
        for t in range(6):
            counts = np.zeros(16)
            for traj in dataset.trajectories:
                visits = list(traj)
                for i, (cell, slot) in enumerate(visits):
                    end = visits[i + 1][1] if i + 1 < len(visits) else 6
                    if slot <= t < end:
                        counts[cell] += 1
                        break
            if counts.sum() == 0:
                self.assertIn(t, density.skipped)
            else:
                np.testing.assert_allclose(density.dists[t], counts / counts.sum(), rtol=0, atol=1e-15)

    def test_occupied_cell_same_slot(self):
        traj = Trajectory([(1, 2), (4, 2), (7, 3)])
        self.assertEqual(occupied_cell(traj, 2), 4)
        self.assertIsNone(occupied_cell(traj, 1))


class QueryTests(SimpleTestCase):

    def test_density_query_counts_trajectories_once(self):
        dataset = cells_only(4, [1, 2, 1, 2])
        queries = QuerySet([frozenset([1, 2])], [], [])
        density, _ = count_queries(dataset, queries)
        self.assertEqual(list(density), [1.0])

    def test_pattern_matching(self):
        self.assertTrue(contains_pattern([1, 2, 3, 4], (1, 2, 3)))
        self.assertFalse(contains_pattern([1, 3, 2], (1, 2, 3)))
        self.assertTrue(contains_pattern([1, 2, 3, 4, 9, 9], (2, 3, 4)))
        self.assertFalse(contains_pattern([3, 2, 1], (1, 2, 3)))
        self.assertFalse(contains_pattern([1, 2], (1, 2, 3)))

    def test_frequent_patterns_ranking(self):
        dataset = cells_only(4, [1, 2, 3, 4], [1, 2, 3], [5, 6, 7])
        self.assertEqual(frequent_patterns(dataset, 4), [(1, 2, 3), (2, 3, 4), (5, 6, 7), (1, 2, 3, 4)])

    def test_against_brute_force_scan(self):
        dataset = random_dataset(44, 8, 20, max_length=6)
        queries = build_query_set(dataset, n_queries=10, n_patterns=5, n_start=5, seed=3)
        density, patterns = count_queries(dataset, queries)
        for k, q in enumerate(queries.density):
            self.assertEqual(density[k], sum(1 for t in dataset.trajectories if any(c in q for c in t.cells)))
        for k, p in enumerate(queries.patterns):
            hits = 0
            for t in dataset.trajectories:
                cells = t.cells
                hits += any(tuple(cells[i:i + len(p)]) == p for i in range(len(cells)))
            self.assertEqual(patterns[k], hits)

    def test_query_sizes(self):
        dataset = random_dataset(45, 8, 20)
        queries = build_query_set(dataset, n_queries=200, n_patterns=3, n_start=3, seed=4)
        sizes = set(len(q) for q in queries.density)
        self.assertTrue(sizes <= {1, 2, 3})
        self.assertEqual(len(queries.density), 200)
        again = build_query_set(dataset, n_queries=200, n_patterns=3, n_start=3, seed=4)
        self.assertEqual(queries.density, again.density)


class ReportTests(SimpleTestCase):

    def config(self):
        return EvalConfig(n_bin=10, phi=5.0, n_density_queries=30, n_patterns=10, n_start=10, seed=0)

    def test_self_comparison(self):
        real = random_dataset(46, 8, 60, max_length=6)
        report = full_report(real, real, self.config())
        for name, value in report.values().items():
            self.assertEqual(value, 0.0, name)

    def test_permuted_cells_detected(self):
        real = random_dataset(47, 8, 60, max_length=6)
        gen = Dataset(real.spec, real.n_time,
                      [Trajectory([((c + 1) % 64, s) for c, s in t]) for t in real.trajectories])
        report = full_report(real, gen, self.config())
        self.assertGreater(report.transition, 0.0)
        for value in report.values().values():
            self.assertGreaterEqual(value, 0.0)

    def test_js_entries_bounded(self):
        real = random_dataset(48, 8, 40, max_length=6)
        gen = random_dataset(49, 8, 40, max_length=3)
        report = full_report(real, gen, self.config())
        for name in METRIC_NAMES[:7]:
            self.assertLessEqual(getattr(report, name), 1.0)

    def test_grids_must_match(self):
        with self.assertRaises(ParameterError):
            full_report(random_dataset(50, 8, 5), random_dataset(50, 4, 5), self.config())

    def test_empty_dataset_rejected(self):
        real = random_dataset(51, 8, 10, max_length=4)
        empty = Dataset(real.spec, real.n_time, [])
        with self.assertRaises(ParameterError):
            full_report(real, empty, self.config())
        with self.assertRaises(ParameterError):
            full_report(empty, real, self.config())

    def test_empty_histogram_warns(self):
        spec = HistogramSpec(4.0, 4)
        with self.assertLogs('mobility_synth.evaluate', 'WARNING'):
            hist = scalar_metrics(Dataset(GridSpec.unit(4), 1, []), spec, 'diameter')
        np.testing.assert_array_equal(hist, np.zeros(4))

    def test_text_and_csv(self):
        report = MetricReport(waypoint=0.5, traj_pattern=1.25, skipped={'destination': [3, 7]})
        text = report.as_text()
        self.assertIn('waypoint=0.500000\n', text)
        self.assertIn('traj_pattern=1.250000\n', text)
        self.assertIn('skipped_destination=3 7\n', text)
        self.assertEqual(MetricReport.csv_header().split(','), list(METRIC_NAMES))
        self.assertEqual(report.as_csv_row().split(',')[0], '0.5')
