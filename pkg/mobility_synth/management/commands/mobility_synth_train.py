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


import os

from django.core.management.base import CommandError

from mobility_synth.cli import MobilityCommand, add_common_flags, add_privacy_flags, add_training_flags, option
from mobility_synth.fileformats import load_dataset, load_model, save_model
from mobility_synth.model import build_model
from mobility_synth.pipeline import ARMS, train_log
from mobility_synth.seeding import derive_seed
from mobility_synth.train import TrainConfig, dpsgd_train


class Command(MobilityCommand):
    """
    Trains a generator with DP-SGD, spending ``--epsilon`` entirely on
    training. Starts from ``--checkpoint`` (e.g. a pretrained model) or from
    a fresh model of the ``--arm`` kind.
    """

    help = 'Trains a generator with DP-SGD'
    subcommand = 'train'

    def add_command_arguments(self, parser):
        self.flag(parser, '--data', help='Dataset file (.traj)')
        self.flag(parser, '--checkpoint', help='Initial parameters')
        add_privacy_flags(self, parser)
        add_training_flags(self, parser)
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'data', 'out')
        out = options['out']
        seed = option(options, 'seed', default=0)
        dataset = load_dataset(options['data'])
        if options.get('checkpoint'):
            model = load_model(options['checkpoint'])
        else:
            arm_name = option(options, 'arm', default='full')
            if arm_name not in ARMS:
                raise CommandError("Unknown arm '%s'" % arm_name)
            arm = ARMS[arm_name]
            model = build_model(arm.kind, dataset.spec.depth, dataset.n_time, multitask=arm.multitask,
                                seed=derive_seed(seed, 'init'))
        config = TrainConfig(epsilon=options.get('epsilon'), delta=options.get('delta'),
                             clip_norm=options.get('clip_norm'), sigma=options.get('sigma'),
                             batch=options.get('batch'), epochs=options.get('epochs'), lr=options.get('lr'),
                             seed=derive_seed(seed, 'train'), threads=options.get('threads'),
                             checkpoint_dir=os.path.join(out, 'checkpoints'))
        self.snapshot(out, options)
        with train_log(out):
            result = dpsgd_train(model, dataset, config)
        save_model(model, os.path.join(out, 'checkpoints', 'final.ck'))
        text = result.report.as_text()
        with open(os.path.join(out, 'privacy.txt'), 'w') as stream:
            stream.write(text)
        self.stdout.write(text.rstrip('\n'))
