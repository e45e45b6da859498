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


from mobility_synth.cli import MobilityCommand, add_privacy_flags, option
from mobility_synth.dp import allocate_budget


class Command(MobilityCommand):
    """
    Prints how a total budget is split between the private transition
    matrix and DP-SGD for a grid width and dataset size.
    """

    help = 'Prints the pretraining / DP-SGD split of a privacy budget'
    subcommand = 'budget'

    def add_command_arguments(self, parser):
        add_privacy_flags(self, parser)
        self.flag(parser, '--w', int, help='Grid width')
        self.flag(parser, '--n-records', int, help='Number of trajectories')
        self.flag(parser, '--i-res', int, help='Transition matrix resolution')
        self.flag(parser, '--c', float, help='Signal-to-noise constant')

    def run(self, options):
        self.require(options, 'w', 'n_records')
        budget = allocate_budget(option(options, 'epsilon', 'EPSILON'), options['w'], options['n_records'],
                                 i_res=options.get('i_res'), c=options.get('c'), delta=options.get('delta'))
        self.stdout.write('epsilon_pretrain=%.6f' % budget.epsilon_pretrain)
        self.stdout.write('epsilon_sgd=%.6f' % budget.epsilon_sgd)
        self.stdout.write('epsilon_total=%.6f' % budget.epsilon_total)
        self.stdout.write('delta=%g' % budget.delta)
