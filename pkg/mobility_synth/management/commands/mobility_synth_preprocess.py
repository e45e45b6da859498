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

import numpy as np

from mobility_synth.cli import MobilityCommand, add_common_flags, option
from mobility_synth.fileformats import save_dataset
from mobility_synth.geo import GridSpec
from mobility_synth.preprocess import build_dataset, load_raw_csv


class Command(MobilityCommand):
    """
    Turns a raw GPS CSV (traj_id, lat, lon, unix_timestamp) into a
    discretized dataset file on a ``w x w`` grid spanning the traces.
    """

    help = 'Extracts stay points from raw GPS traces and writes a discretized dataset'
    subcommand = 'preprocess'

    def add_command_arguments(self, parser):
        self.flag(parser, '--input', help='Raw trace CSV')
        self.flag(parser, '--w', int, help='Grid width (power of two)')
        self.flag(parser, '--n-time', int, help='Number of time slots per day')
        self.flag(parser, '--stay-radius', float, help='Stay point radius in meters')
        self.flag(parser, '--stay-min-duration', float, help='Minimal stay in minutes')
        add_common_flags(self, parser)

    def run(self, options):
        self.require(options, 'input', 'out')
        raws = load_raw_csv(options['input'])
        points = np.concatenate([raw.points[:, :2] for raw in raws]) if raws else np.zeros((0, 2))
        spec = GridSpec.from_points(points, GridSpec.unit(option(options, 'w', 'W')).depth)
        dataset = build_dataset(raws, spec, option(options, 'n_time', 'N_TIME'),
                                radius_m=options.get('stay_radius'), min_duration=options.get('stay_min_duration'))
        self.snapshot(options['out'], options)
        path = os.path.join(options['out'], 'dataset.traj')
        save_dataset(dataset, path)
        self.stdout.write('%d trajectories written to %s' % (len(dataset), path))
