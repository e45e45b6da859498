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
Exception hierarchy of mobility_synth.

Every error raised on purpose by the library derives from
``MobilitySynthError``; the management commands turn these into
``CommandError`` with the message as diagnostic.
"""


class MobilitySynthError(Exception):
    pass


class OutOfDomainError(MobilitySynthError, ValueError):
    """A coordinate lies outside the bounding box of the grid."""


class InvalidResolutionError(MobilitySynthError, ValueError):
    """A resolution level is outside [0, d] or coarsening goes the wrong way."""


class CellRangeError(MobilitySynthError, ValueError):
    """A cell id is not valid at its resolution."""


class CapacityError(MobilitySynthError, ValueError):
    """More scattered POIs than grid cells."""


class EmptyTrajectoryError(MobilitySynthError):
    """Discretization left no visit; callers drop the trajectory."""


class TrajectoryError(MobilitySynthError, ValueError):
    """A trajectory violates its representation invariants."""


class DimensionError(MobilitySynthError, ValueError):
    pass


class GraphError(MobilitySynthError):
    """The computation graph is malformed (e.g. contains a cycle)."""


class ParameterError(MobilitySynthError, ValueError):
    """A mechanism or configuration parameter is out of range."""


class InfeasibleNoiseError(MobilitySynthError):
    """No noise multiplier on the search grid meets the privacy target."""


class FileFormatError(MobilitySynthError):
    pass
