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


from django.core.management.base import CommandError

from mobility_synth.cli import MobilityCommand, add_common_flags, add_privacy_flags, add_training_flags, option
from mobility_synth.pipeline import PipelineConfig, run_pipeline, run_sweep


def parse_sweep(text):
    """``axis=v1,v2,...`` -> (axis, [floats])."""
    axis, sep, values = text.partition('=')
    try:
        parsed = [float(v) for v in values.split(',') if v.strip()]
    except ValueError:
        parsed = []
    if not sep or not parsed:
        raise CommandError("--sweep expects axis=v1,v2,..., got '%s'" % text)
    return axis.strip().replace('-', '_'), parsed


class Command(MobilityCommand):
    """
    Runs the whole private synthesis for one ablation arm: budget split,
    private transition matrix and pretraining, DP-SGD, generation and
    evaluation. ``--sweep epsilon=0.5,1,2`` repeats the run per value and
    collects the metrics in ``sweep.csv``.
    """

    help = 'Runs the full private synthesis pipeline'
    subcommand = 'run'

    def add_command_arguments(self, parser):
        self.flag(parser, '--data', help='Dataset file (.traj) or raw trace CSV')
        self.flag(parser, '--w', int, help='Grid width for raw traces')
        self.flag(parser, '--n-time', int, help='Time slots for raw traces')
        add_privacy_flags(self, parser)
        add_training_flags(self, parser)
        self.flag(parser, '--i-res', int, help='Transition matrix resolution')
        self.flag(parser, '--first-only', bool, help='Pretrain on first transitions only')
        self.flag(parser, '--epsilon-pretrain', float, help='Fixed pretraining budget instead of the heuristic')
        self.flag(parser, '--pretrain-steps', int, help='Pretraining steps')
        self.flag(parser, '--gen-count', int, help='Number of generated trajectories')
        self.flag(parser, '--track-epochs', bool, help='Write per-epoch metrics to epochs.csv')
        self.flag(parser, '--sweep', help='axis=v1,v2,... over epsilon or epsilon_pretrain')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'data', 'out')
        config = PipelineConfig(
            dataset_path=options['data'], out=options['out'], w=options.get('w'), n_time=options.get('n_time'),
            epsilon=options.get('epsilon'), delta=options.get('delta'), arm=option(options, 'arm', default='full'),
            clip_norm=options.get('clip_norm'), sigma=options.get('sigma'), batch=options.get('batch'),
            epochs=options.get('epochs'), lr=options.get('lr'), seed=option(options, 'seed', default=0),
            threads=options.get('threads'), i_res=options.get('i_res'),
            first_only=bool(options.get('first_only')), epsilon_pretrain=options.get('epsilon_pretrain'),
            pretrain_steps=options.get('pretrain_steps'), gen_count=options.get('gen_count'),
            track_epochs=bool(options.get('track_epochs')))
        if options.get('sweep'):
            self.snapshot(options['out'], options)
            axis, values = parse_sweep(options['sweep'])
            for result in run_sweep(config, axis, values):
                self.stdout.write('epsilon_total=%r %s' % (result.privacy.epsilon_total, result.metrics.as_csv_row()))
            return
        result = run_pipeline(config)
        self.stdout.write(result.privacy.as_text().rstrip('\n'))
        self.stdout.write(result.metrics.as_text().rstrip('\n'))
