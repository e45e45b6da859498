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
End-to-end runs: budget split, private transition matrix, pretraining,
DP-SGD, generation and evaluation, for one of the six ablation arms.

A run writes into its output directory::

    config.txt          resolved options
    dptran.txt          noised transition matrix (pretraining arms)
    checkpoints/        step-NNNNNN.ck and final.ck
    synthetic.traj      generated dataset
    metrics.csv         one metric row
    privacy.txt         privacy report
    train.log           per-step training log
    epochs.csv          per-epoch destination/transition JS (optional)

The real trajectories are only read while counting transitions, during
DP-SGD sampling and by the evaluation; ``DatasetAccessAudit`` keeps the
per-phase tally.
"""

import logging
import os
import threading

from collections import Counter, OrderedDict, namedtuple
from collections.abc import Sequence
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace

import numpy as np

from mobility_synth.conf import get_setting
from mobility_synth.dp import PrivacyBudget, PrivacyReport, allocate_budget
from mobility_synth.evaluate import EvalConfig, MetricReport, compare_start_conditioned, full_report, \
    start_conditioned_distributions, top_starts
from mobility_synth.exceptions import ParameterError
from mobility_synth.fileformats import load_dataset, save_dataset, save_dptran, save_model, write_key_values
from mobility_synth.generate import GenConfig, generate_dataset
from mobility_synth.geo import GridSpec
from mobility_synth.model import build_model
from mobility_synth.preprocess import Dataset, build_dataset, load_raw_csv
from mobility_synth.pretrain import build_transition_matrix, pretrain, privatize_transition
from mobility_synth.seeding import derive_seed, make_rng
from mobility_synth.train import TrainConfig, dpsgd_train, plan_noise, sampling_schedule

logger = logging.getLogger(__name__)

Arm = namedtuple('Arm', ['kind', 'multitask', 'pretrain'])

ARMS = OrderedDict([
    ('baseline', Arm('baseline', False, False)),
    ('baseline+pretrain', Arm('baseline', False, True)),
    ('deconv', Arm('hrnet', False, False)),
    ('deconv+pretrain', Arm('hrnet', False, True)),
    ('deconv+multitask', Arm('hrnet', True, False)),
    ('full', Arm('hrnet', True, True)),
])

SWEEP_AXES = ('epsilon', 'epsilon_pretrain')


@dataclass
class PipelineConfig:
    dataset_path: str = None
    out: str = None
    w: int = None
    n_time: int = None
    epsilon: float = None
    delta: float = None
    arm: str = 'full'
    clip_norm: float = None
    sigma: float = None
    batch: int = None
    epochs: int = None
    lr: float = None
    seed: int = 0
    threads: int = None
    i_res: int = None
    first_only: bool = False
    epsilon_pretrain: float = None
    pretrain_steps: int = None
    gen_count: int = None
    track_epochs: bool = False

    def __post_init__(self):
        for name, setting in (('epsilon', 'EPSILON'), ('delta', 'DELTA'), ('threads', 'THREADS'),
                              ('i_res', 'PRETRAIN_RES'), ('pretrain_steps', 'PRETRAIN_STEPS')):
            if getattr(self, name) is None:
                setattr(self, name, get_setting(setting))
        if self.arm not in ARMS:
            raise ParameterError("Unknown arm %r (expected one of %s)" % (self.arm, ', '.join(ARMS)))
        if not self.epsilon > 0:
            raise ParameterError("The total privacy budget must be positive, got %r" % (self.epsilon,))
        if self.epsilon_pretrain is not None and not 0 < self.epsilon_pretrain < self.epsilon:
            raise ParameterError("epsilon_pretrain must lie in (0, epsilon), got %r" % (self.epsilon_pretrain,))

    def as_pairs(self):
        """Resolved options keyed by ``run`` flag names, loadable with ``--config``."""
        pairs = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None or value is False:
                continue
            pairs.append(('data' if f.name == 'dataset_path' else f.name, value))
        return pairs


@dataclass
class PipelineResult:
    model: object
    synthetic: Dataset
    metrics: MetricReport
    privacy: PrivacyReport
    budget: PrivacyBudget
    audit: object


class DatasetAccessAudit(object):
    """Counts trajectory reads per pipeline phase."""

    def __init__(self):
        self.counts = Counter()
        self.current = 'setup'
        self._lock = threading.Lock()

    @contextmanager
    def phase(self, name):
        previous, self.current = self.current, name
        try:
            yield self
        finally:
            self.current = previous

    def record(self, n=1):
        with self._lock:
            self.counts[self.current] += n

    def reads(self, phase):
        return self.counts.get(phase, 0)


class AuditedTrajectories(Sequence):

    def __init__(self, trajectories, audit):
        self._items = list(trajectories)
        self._audit = audit

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        item = self._items[index]
        self._audit.record(len(item) if isinstance(index, slice) else 1)
        return item


def audited(dataset, audit):
    return Dataset(dataset.spec, dataset.n_time, AuditedTrajectories(dataset.trajectories, audit))


def load_input_dataset(path, w=None, n_time=None):
    """
    Read a ``.traj`` dataset, or preprocess a raw GPS CSV onto a ``w x w``
    grid spanning the data.
    """
    if path is None:
        raise ParameterError("No dataset path given")
    if not os.path.exists(path):
        raise ParameterError("Dataset %s does not exist" % path)
    if path.endswith('.csv'):
        raws = load_raw_csv(path)
        w = get_setting('W') if w is None else w
        n_time = get_setting('N_TIME') if n_time is None else n_time
        points = np.concatenate([raw.points[:, :2] for raw in raws]) if raws else np.zeros((0, 2))
        spec = GridSpec.from_points(points, GridSpec.unit(w).depth)
        return build_dataset(raws, spec, n_time)
    dataset = load_dataset(path)
    if w is not None and dataset.spec.width != w:
        raise ParameterError("%s uses w=%d, the run asks for w=%d" % (path, dataset.spec.width, w))
    return dataset


def split_budget(config, arm, n_records, width):
    if not arm.pretrain:
        logger.info("Arm %s does not pretrain: the whole budget goes to DP-SGD", config.arm)
        return PrivacyBudget(config.epsilon, 0.0, config.delta)
    if config.epsilon_pretrain is not None:
        return PrivacyBudget(config.epsilon - config.epsilon_pretrain, config.epsilon_pretrain, config.delta)
    return allocate_budget(config.epsilon, width, n_records, i_res=config.i_res, delta=config.delta)


class EpochTracker(object):
    """Destination and transition JS of a small synthetic sample after every epoch."""

    def __init__(self, real, audit, path, seed, count):
        self.real, self.audit, self.path = real, audit, path
        self.seed, self.count = seed, count
        self.rows = []

    def __call__(self, epoch, model):
        synthetic = generate_dataset(model, GenConfig(count=self.count, seed=derive_seed(self.seed, epoch)),
                                     spec=self.real.spec)
        with self.audit.phase('evaluate'):
            starts = top_starts(self.real)
            row = [epoch]
            for kind in ('destination', 'transition'):
                value, _ = compare_start_conditioned(start_conditioned_distributions(self.real, kind, starts),
                                                     start_conditioned_distributions(synthetic, kind, starts))
                row.append(value)
        self.rows.append(row)
        with open(self.path, 'w') as stream:
            stream.write('epoch,destination,transition\n')
            for r in self.rows:
                stream.write('%d,%r,%r\n' % (r[0], r[1], r[2]))


@contextmanager
def train_log(out):
    handler = logging.FileHandler(os.path.join(out, 'train.log'), mode='w')
    handler.setFormatter(logging.Formatter('%(asctime)s %(name)s %(levelname)s %(message)s'))
    package_logger = logging.getLogger('mobility_synth')
    previous_level = package_logger.level
    package_logger.addHandler(handler)
    if package_logger.getEffectiveLevel() > logging.INFO:
        package_logger.setLevel(logging.INFO)
    try:
        yield handler
    finally:
        package_logger.removeHandler(handler)
        package_logger.setLevel(previous_level)
        handler.close()


def run_pipeline(config, dataset=None):
    """
    Run one ablation arm end to end. ``dataset`` skips loading
    ``config.dataset_path``.
    """
    if not config.out:
        raise ParameterError("The pipeline needs an output directory")
    os.makedirs(os.path.join(config.out, 'checkpoints'), exist_ok=True)
    write_key_values(os.path.join(config.out, 'config.txt'), config.as_pairs())
    with train_log(config.out):
        return _run(config, dataset)


def _run(config, dataset):
    arm = ARMS[config.arm]
    real = load_input_dataset(config.dataset_path, config.w, config.n_time) if dataset is None else dataset
    audit = DatasetAccessAudit()
    private = audited(real, audit)
    n = len(real)
    budget = split_budget(config, arm, n, real.spec.width)

    train_config = None
    if budget.epsilon_sgd > 0:
        train_config = TrainConfig(epsilon=budget.epsilon_sgd, delta=config.delta, clip_norm=config.clip_norm,
                                   sigma=config.sigma, batch=config.batch, epochs=config.epochs, lr=config.lr,
                                   seed=derive_seed(config.seed, 'train'), threads=config.threads,
                                   checkpoint_dir=os.path.join(config.out, 'checkpoints'))
        if train_config.sigma is None:
            # fails on an infeasible budget before any trajectory is read
            q, _, max_steps = sampling_schedule(n, train_config.batch, train_config.epochs)
            train_config.sigma = plan_noise(budget.epsilon_sgd, config.delta, q, max_steps)
    else:
        logger.warning("No budget left for DP-SGD; the generator keeps its pretrained parameters")

    model = build_model(arm.kind, real.spec.depth, real.n_time, multitask=arm.multitask,
                        seed=derive_seed(config.seed, 'init'))
    logger.info("Arm %s: %s model with %d parameters, %d trajectories", config.arm, model.kind,
                model.parameter_count(), n)

    eps_pretrain = 0.0
    if arm.pretrain:
        with audit.phase('transition'):
            tran = build_transition_matrix(private, config.i_res, first_only=config.first_only)
        dptran = privatize_transition(tran, budget.epsilon_pretrain, make_rng(derive_seed(config.seed, 'dptran')))
        save_dptran(dptran, os.path.join(config.out, 'dptran.txt'))
        eps_pretrain = dptran.epsilon
        with audit.phase('pretrain'):
            pretrain(model, dptran, steps=config.pretrain_steps, seed=derive_seed(config.seed, 'pretrain'))

    eps_sgd, train_report = 0.0, None
    if train_config is not None:
        tracker = None
        if config.track_epochs:
            tracker = EpochTracker(private, audit, os.path.join(config.out, 'epochs.csv'),
                                   derive_seed(config.seed, 'epochs'), min(n, 1000))
        with audit.phase('train'):
            train_report = dpsgd_train(model, private, train_config, epoch_callback=tracker).report
        eps_sgd = train_report.epsilon_sgd
    save_model(model, os.path.join(config.out, 'checkpoints', 'final.ck'))

    with audit.phase('generate'):
        count = n if config.gen_count is None else config.gen_count
        synthetic = generate_dataset(model, GenConfig(count=count, seed=derive_seed(config.seed, 'generate'),
                                                      threads=config.threads), spec=real.spec)
    save_dataset(synthetic, os.path.join(config.out, 'synthetic.traj'))

    with audit.phase('evaluate'):
        metrics = full_report(private, synthetic, EvalConfig(seed=derive_seed(config.seed, 'queries')))
    with open(os.path.join(config.out, 'metrics.csv'), 'w') as stream:
        stream.write(MetricReport.csv_header() + '\n' + metrics.as_csv_row() + '\n')

    privacy = PrivacyReport(epsilon_sgd=eps_sgd, epsilon_pretrain=eps_pretrain, delta=config.delta,
                            sigma=train_report.sigma if train_report else 0.0,
                            clip_norm=train_report.clip_norm if train_report else 0.0,
                            steps=train_report.steps if train_report else 0,
                            sampling_rate=train_report.sampling_rate if train_report else 0.0)
    with open(os.path.join(config.out, 'privacy.txt'), 'w') as stream:
        stream.write(privacy.as_text())
    logger.info("Privacy: (%.6g, %g)-DP (sgd %.6g + pretrain %.6g); reads per phase: %s",
                privacy.epsilon_total, config.delta, eps_sgd, eps_pretrain, dict(audit.counts))
    return PipelineResult(model, synthetic, metrics, privacy, budget, audit)


def run_sweep(config, axis, values, dataset=None):
    """One run per value of ``axis``; rows go to ``sweep.csv`` in ``config.out``."""
    if axis not in SWEEP_AXES:
        raise ParameterError("Cannot sweep over %r (expected one of %s)" % (axis, ', '.join(SWEEP_AXES)))
    real = load_input_dataset(config.dataset_path, config.w, config.n_time) if dataset is None else dataset
    os.makedirs(config.out, exist_ok=True)
    results = []
    path = os.path.join(config.out, 'sweep.csv')
    with open(path, 'w') as stream:
        stream.write('%s,epsilon_total,%s\n' % (axis, MetricReport.csv_header()))
        for value in values:
            run_config = replace(config, out=os.path.join(config.out, '%s-%s' % (axis, value)), **{axis: value})
            result = run_pipeline(run_config, dataset=real)
            stream.write('%r,%r,%s\n' % (float(value), float(result.privacy.epsilon_total),
                                         result.metrics.as_csv_row()))
            stream.flush()
            results.append(result)
    logger.info("Sweep over %s (%d runs) written to %s", axis, len(results), path)
    return results
