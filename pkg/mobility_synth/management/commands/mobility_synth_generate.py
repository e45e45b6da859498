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

from mobility_synth.cli import MobilityCommand, add_common_flags
from mobility_synth.fileformats import load_dataset, load_model, save_dataset
from mobility_synth.generate import GenConfig, generate_dataset


class Command(MobilityCommand):

    help = 'Samples synthetic trajectories from a trained generator'
    subcommand = 'generate'

    def add_command_arguments(self, parser):
        self.flag(parser, '--checkpoint', help='Trained model')
        self.flag(parser, '--count', int, help='Number of trajectories')
        self.flag(parser, '--max-length', int, help='Maximal trajectory length')
        self.flag(parser, '--no-mask', bool, help='Allow the previous cell to be sampled again')
        self.flag(parser, '--data', help='Dataset whose grid the output uses')
        self.flag(parser, '--threads', int, help='Sampling threads')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'checkpoint', 'count', 'out')
        model = load_model(options['checkpoint'])
        # only the bounding box of the reference dataset is used
        spec = load_dataset(options['data']).spec if options.get('data') else None
        config = GenConfig(count=options['count'], max_length=options.get('max_length'), seed=options.get('seed'),
                           mask_current=not options.get('no_mask'), threads=options.get('threads'))
        synthetic = generate_dataset(model, config, spec=spec)
        self.snapshot(options['out'], options)
        path = os.path.join(options['out'], 'synthetic.traj')
        save_dataset(synthetic, path)
        self.stdout.write('%d trajectories written to %s' % (len(synthetic), path))
