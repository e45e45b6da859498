#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
test_train
----------

Tests for noise planning and the DP-SGD loop.
"""

import math
import os

import numpy as np

from mobility_synth.dp import NoiseParams, accountant_epsilon
from mobility_synth.exceptions import InfeasibleNoiseError, ParameterError
from mobility_synth.model import HRNet
from mobility_synth.train import TrainConfig, dpsgd_train, plan_noise, sampling_schedule

from tests.custom_test_runner import CustomSettingsTestCase
from tests.utils import TemporaryDirectoryMixin, random_dataset


def mean_loss(model, dataset):
    return float(np.mean([model.loss(traj).value for traj in dataset.trajectories]))


class ScheduleTests(CustomSettingsTestCase):

    def test_sampling_schedule(self):
        self.assertEqual(sampling_schedule(100, 10, 3), (0.1, 10, 30))
        self.assertEqual(sampling_schedule(5, 10, 2), (1.0, 1, 2))
        with self.assertRaises(ParameterError):
            sampling_schedule(0, 10, 1)

    def test_plan_noise_meets_target(self):
        sigma = plan_noise(1.0, 1e-5, 0.01, 500)
        self.assertLessEqual(accountant_epsilon(NoiseParams(1.0, sigma, 0.01, 500), 1e-5), 1.0)
        smaller = sigma / 1.01
        self.assertGreater(accountant_epsilon(NoiseParams(1.0, smaller, 0.01, 500), 1e-5), 1.0)

    def test_plan_noise_monotone(self):
        loose = plan_noise(4.0, 1e-5, 0.02, 200)
        tight = plan_noise(0.5, 1e-5, 0.02, 200)
        self.assertGreater(tight, loose)

    def test_plan_noise_infeasible(self):
        with self.assertRaises(InfeasibleNoiseError):
            plan_noise(1e-4, 1e-5, 1.0, 10 ** 6)

    def test_config_defaults_and_validation(self):
        config = TrainConfig()
        self.assertEqual(config.delta, 1e-5)
        self.assertEqual(config.threads, 1)
        with self.assertRaises(ParameterError):
            TrainConfig(epsilon=0.0)
        with self.assertRaises(ParameterError):
            TrainConfig(sigma=1.0, clip_norm=math.inf)
        with self.assertRaises(ParameterError):
            TrainConfig(batch=0)
        with self.assertRaises(ParameterError):
            TrainConfig(clip_norm=0.0)

    def test_unclipped_needs_explicit_zero_noise(self):
        with self.assertRaises(ParameterError):
            TrainConfig(clip_norm=math.inf)
        self.assertEqual(TrainConfig(clip_norm=math.inf, sigma=0.0).sigma, 0.0)


class DPSGDTests(TemporaryDirectoryMixin, CustomSettingsTestCase):

    def setUp(self):
        super(DPSGDTests, self).setUp()
        self.dataset = random_dataset(31, 4, 8, max_length=4, n_time=4)

    def test_noiseless_full_batch_descends(self):
        model = HRNet(2, 4, seed=1)
        before = mean_loss(model, self.dataset)
        config = TrainConfig(epsilon=1.0, sigma=0.0, clip_norm=math.inf, batch=8, epochs=30, lr=0.05, seed=2)
        with self.assertLogs('mobility_synth.train', 'WARNING'):
            result = dpsgd_train(model, self.dataset, config)
        self.assertEqual(result.report.steps, 30)
        self.assertEqual(result.report.epsilon_sgd, math.inf)
        self.assertLess(mean_loss(model, self.dataset), before)
        self.assertLess(result.losses[-1], result.losses[0])

    def test_report_matches_accountant(self):
        model = HRNet(2, 4, seed=3)
        config = TrainConfig(epsilon=50.0, sigma=1.0, clip_norm=1.0, batch=2, epochs=2, lr=0.05, seed=4)
        result = dpsgd_train(model, self.dataset, config)
        q, per_epoch, max_steps = sampling_schedule(8, 2, 2)
        self.assertEqual(result.report.steps, max_steps)
        self.assertEqual(result.report.sampling_rate, q)
        expected = accountant_epsilon(NoiseParams(1.0, 1.0, q, max_steps), 1e-5)
        self.assertAlmostEqual(result.report.epsilon_sgd, expected, places=12)

    def test_stops_before_exceeding_budget(self):
        model = HRNet(2, 4, seed=5)
        config = TrainConfig(epsilon=1.0, sigma=0.6, clip_norm=1.0, batch=4, epochs=50, lr=0.05, seed=6)
        result = dpsgd_train(model, self.dataset, config)
        self.assertLess(result.report.steps, 100)
        self.assertLessEqual(result.report.epsilon_sgd, 1.0)

    def test_planned_noise_within_budget(self):
        model = HRNet(2, 4, seed=7)
        config = TrainConfig(epsilon=2.0, clip_norm=1.0, batch=2, epochs=2, lr=0.05, seed=8)
        result = dpsgd_train(model, self.dataset, config)
        self.assertGreater(result.report.sigma, 0.0)
        self.assertLessEqual(result.report.epsilon_sgd, 2.0)

    def test_seeded_runs_repeat(self):
        arrays = []
        for threads in (1, 3):
            model = HRNet(2, 4, seed=9)
            config = TrainConfig(epsilon=50.0, sigma=1.0, clip_norm=1.0, batch=4, epochs=2, lr=0.05, seed=10,
                                 threads=threads)
            dpsgd_train(model, self.dataset, config)
            arrays.append(model.copy_arrays())
        for name in arrays[0]:
            np.testing.assert_array_equal(arrays[0][name], arrays[1][name])

    def test_step_log_and_callbacks(self):
        model = HRNet(2, 4, seed=11)
        epochs = []
        config = TrainConfig(epsilon=50.0, sigma=2.0, clip_norm=1.0, batch=4, epochs=3, lr=0.05, seed=12,
                             checkpoint_every=2, checkpoint_dir=os.path.join(self.tmpdir, 'checkpoints'))
        with self.assertLogs('mobility_synth.train.steps', 'INFO') as logs:
            result = dpsgd_train(model, self.dataset, config, epoch_callback=lambda e, m: epochs.append(e))
        self.assertEqual(epochs, [0, 1, 2])
        self.assertEqual(len(logs.records), result.report.steps)
        self.assertTrue(logs.output[0].split(':', 2)[2].startswith('step=1 batch='))
        self.assertEqual(sorted(os.listdir(config.checkpoint_dir)), ['step-000002.ck', 'step-000004.ck',
                                                                      'step-000006.ck'])
