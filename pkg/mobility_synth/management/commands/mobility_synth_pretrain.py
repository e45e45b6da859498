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

from mobility_synth.cli import MobilityCommand, add_common_flags, add_privacy_flags, option
from mobility_synth.dp import allocate_budget
from mobility_synth.fileformats import load_dataset, load_dptran, save_dptran, save_model
from mobility_synth.model import build_model
from mobility_synth.pipeline import ARMS
from mobility_synth.pretrain import build_transition_matrix, pretrain, privatize_transition
from mobility_synth.seeding import derive_seed, make_rng


class Command(MobilityCommand):
    """
    Builds and privatizes the transition matrix of a dataset (or reuses a
    saved one with ``--dptran``, spending no further budget) and pretrains a
    fresh generator on it.

    Writes ``dptran.txt`` and ``pretrained.ck`` into ``--out``.
    """

    help = 'Pretrains a generator on a differentially private transition matrix'
    subcommand = 'pretrain'

    def add_command_arguments(self, parser):
        self.flag(parser, '--data', help='Dataset file (.traj)')
        self.flag(parser, '--dptran', help='Reuse a saved DP transition matrix')
        self.flag(parser, '--arm', help='Ablation arm deciding the model kind')
        add_privacy_flags(self, parser)
        self.flag(parser, '--epsilon-pretrain', float, help='Fixed budget of the transition matrix')
        self.flag(parser, '--i-res', int, help='Transition matrix resolution')
        self.flag(parser, '--first-only', bool, help='Count only the first transition of every trajectory')
        self.flag(parser, '--steps', int, help='Pretraining steps')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'data', 'out')
        arm_name = option(options, 'arm', default='full')
        if arm_name not in ARMS:
            raise CommandError("Unknown arm '%s'" % arm_name)
        arm = ARMS[arm_name]
        seed = option(options, 'seed', default=0)
        dataset = load_dataset(options['data'])
        self.snapshot(options['out'], options)
        if options.get('dptran'):
            dptran = load_dptran(options['dptran'])
        else:
            i_res = option(options, 'i_res', 'PRETRAIN_RES')
            eps = options.get('epsilon_pretrain')
            if eps is None:
                eps = allocate_budget(option(options, 'epsilon', 'EPSILON'), dataset.spec.width, len(dataset),
                                      i_res=i_res, delta=options.get('delta')).epsilon_pretrain
            tran = build_transition_matrix(dataset, i_res, first_only=bool(options.get('first_only')))
            dptran = privatize_transition(tran, eps, make_rng(derive_seed(seed, 'dptran')))
            save_dptran(dptran, os.path.join(options['out'], 'dptran.txt'))
        model = build_model(arm.kind, dataset.spec.depth, dataset.n_time, multitask=arm.multitask,
                            seed=derive_seed(seed, 'init'))
        result = pretrain(model, dptran, steps=options.get('steps'), seed=derive_seed(seed, 'pretrain'))
        save_model(model, os.path.join(options['out'], 'pretrained.ck'))
        self.stdout.write('epsilon_pretrain=%r' % dptran.epsilon)
        if result.losses:
            self.stdout.write('kl_first=%.6f kl_last=%.6f' % (result.losses[0], result.losses[-1]))
