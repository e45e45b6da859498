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

from mobility_synth.cli import MobilityCommand, add_common_flags, option
from mobility_synth.evaluate import EvalConfig, MetricReport, full_report
from mobility_synth.fileformats import load_dataset


class Command(MobilityCommand):

    help = 'Compares a generated dataset against a real one'
    subcommand = 'evaluate'

    def add_command_arguments(self, parser):
        self.flag(parser, '--real', help='Real dataset (.traj)')
        self.flag(parser, '--gen', help='Generated dataset (.traj)')
        self.flag(parser, '--n-bin', int, help='Histogram bins')
        self.flag(parser, '--phi', float, help='ARE floor')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'real', 'gen')
        config = EvalConfig(n_bin=options.get('n_bin'), phi=options.get('phi'),
                            seed=option(options, 'seed', default=0))
        report = full_report(load_dataset(options['real']), load_dataset(options['gen']), config)
        if options.get('out'):
            self.snapshot(options['out'], options)
            with open(os.path.join(options['out'], 'metrics.csv'), 'w') as stream:
                stream.write(MetricReport.csv_header() + '\n' + report.as_csv_row() + '\n')
        self.stdout.write(report.as_text().rstrip('\n'))
