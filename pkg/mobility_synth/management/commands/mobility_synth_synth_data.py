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

from mobility_synth.cli import MobilityCommand, add_common_flags, option
from mobility_synth.fileformats import save_dataset
from mobility_synth.preprocess import gen_random_dataset, gen_straight_dataset


class Command(MobilityCommand):

    help = 'Writes a synthetic Random or Straight dataset'
    subcommand = 'synth-data'

    def add_command_arguments(self, parser):
        self.flag(parser, '--kind', help='random or straight')
        self.flag(parser, '--w', int, help='Grid width (power of two)')
        self.flag(parser, '--count', int, help='Number of trajectories')
        self.flag(parser, '--n-time', int, help='Number of time slots')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'kind', 'out')
        kind, w, count = options['kind'], option(options, 'w', 'W'), option(options, 'count', default=10000)
        extra = {} if options.get('n_time') is None else {'n_time': options['n_time']}
        if kind == 'random':
            dataset = gen_random_dataset(w, count, seed=options.get('seed'), **extra)
        elif kind == 'straight':
            dataset = gen_straight_dataset(w, count, seed=options.get('seed'), **extra)
        else:
            raise CommandError("Unknown dataset kind '%s' (expected random or straight)" % kind)
        self.snapshot(options['out'], options)
        path = os.path.join(options['out'], 'dataset.traj')
        save_dataset(dataset, path)
        self.stdout.write('%d %s trajectories written to %s' % (len(dataset), kind, path))
