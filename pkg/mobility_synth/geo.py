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
Grid discretization of geographic space.

A ``GridSpec`` divides a bounding box into ``w x w`` cells with ``w = 2**d``.
Cells are numbered row-major from the south-west corner: latitude selects the
row, longitude the column, and ``value = row * 2**level + col``. Every
resolution ``level`` in ``[0, d]`` uses the same numbering on its own
``2**level x 2**level`` division, so coarsening a cell is a pair of bit
shifts (see ``up_res``).

Cell intervals are half-open ``[low, high)``; the north and east edges of the
bounding box fold into the last row and column so that every point of the
box maps to exactly one cell.
"""

import logging
import math

from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from scipy.optimize import linear_sum_assignment

from mobility_synth.exceptions import CapacityError, CellRangeError, \
    InvalidResolutionError, OutOfDomainError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6371008.8

LatLng = namedtuple('LatLng', ['lat', 'lon'])


@dataclass(frozen=True)
class GridSpec:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    depth: int

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise InvalidResolutionError("Grid depth must be a non-negative integer, got %r" % (self.depth,))
        if not (self.max_lat > self.min_lat and self.max_lon > self.min_lon):
            raise OutOfDomainError("Bounding box must have positive area: %r" % (self.bbox,))

    @classmethod
    def from_width(cls, min_lat, min_lon, max_lat, max_lon, w):
        depth = int(w).bit_length() - 1
        if w < 1 or 2 ** depth != w:
            raise InvalidResolutionError("Grid width must be a power of 2, got %r" % (w,))
        return cls(float(min_lat), float(min_lon), float(max_lat), float(max_lon), depth)

    @classmethod
    def from_points(cls, points, depth, pad=1e-6):
        """
        Grid whose bounding box is the extent of ``points`` (lat/lon pairs),
        widened by ``pad`` degrees on every side.
        """
        arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(arr) == 0:
            raise OutOfDomainError("Cannot derive a bounding box from zero points")
        return cls(float(arr[:, 0].min() - pad), float(arr[:, 1].min() - pad),
                   float(arr[:, 0].max() + pad), float(arr[:, 1].max() + pad),
                   int(depth))

    @classmethod
    def unit(cls, w):
        """Grid over the abstract unit square, used by the synthetic datasets."""
        return cls.from_width(0.0, 0.0, 1.0, 1.0, w)

    @property
    def width(self):
        return 2 ** self.depth

    @property
    def n_poi(self):
        return 4 ** self.depth

    @property
    def bbox(self):
        return (self.min_lat, self.min_lon, self.max_lat, self.max_lon)

    def contains(self, lat, lon):
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon

    def header(self):
        """Key-value header block shared by every dataset file."""
        return [('min_lat', repr(self.min_lat)),
                ('min_lon', repr(self.min_lon)),
                ('max_lat', repr(self.max_lat)),
                ('max_lon', repr(self.max_lon)),
                ('w', str(self.width))]


class CellId(namedtuple('CellId', ['value', 'level'])):
    """A grid cell at resolution ``level``."""

    __slots__ = ()

    def __new__(cls, value, level):
        value, level = int(value), int(level)
        if level < 0:
            raise InvalidResolutionError("Negative resolution %d" % level)
        if not 0 <= value < 4 ** level:
            raise CellRangeError("Cell %d is not valid at resolution %d" % (value, level))
        return super(CellId, cls).__new__(cls, value, level)

    @property
    def side(self):
        return 2 ** self.level

    @property
    def row(self):
        return self.value // self.side

    @property
    def col(self):
        return self.value % self.side


def up_res_value(value, level, target):
    """Integer form of ``up_res`` used on hot paths."""
    shift = level - target
    if shift < 0:
        raise InvalidResolutionError("Cannot refine resolution %d to %d" % (level, target))
    side = 1 << level
    row, col = divmod(value, side)
    return ((row >> shift) << target) + (col >> shift)


def up_res(cell, target):
    """
    The cell at resolution ``target`` that contains ``cell``.
    """
    if target < 0 or target > cell.level:
        raise InvalidResolutionError("Cannot map resolution %d to %d" % (cell.level, target))
    return CellId(up_res_value(cell.value, cell.level, target), target)


def latlng_to_cell(spec, point):
    lat, lon = point
    if not spec.contains(lat, lon):
        raise OutOfDomainError("Point (%r, %r) lies outside %r" % (lat, lon, spec.bbox))
    w = spec.width
    row = int(math.floor((lat - spec.min_lat) / (spec.max_lat - spec.min_lat) * w))
    col = int(math.floor((lon - spec.min_lon) / (spec.max_lon - spec.min_lon) * w))
    return CellId(min(row, w - 1) * w + min(col, w - 1), spec.depth)


def _check_cell(spec, cell):
    if cell.level > spec.depth:
        raise CellRangeError("Cell at resolution %d is finer than the grid (d=%d)" % (cell.level, spec.depth))


def cell_rect(spec, cell):
    """(min_lat, min_lon, max_lat, max_lon) of ``cell``."""
    _check_cell(spec, cell)
    dlat = (spec.max_lat - spec.min_lat) / cell.side
    dlon = (spec.max_lon - spec.min_lon) / cell.side
    return (spec.min_lat + cell.row * dlat, spec.min_lon + cell.col * dlon,
            spec.min_lat + (cell.row + 1) * dlat, spec.min_lon + (cell.col + 1) * dlon)


def cell_center(spec, cell):
    _check_cell(spec, cell)
    side = cell.side
    lat = spec.min_lat + (cell.row + 0.5) * (spec.max_lat - spec.min_lat) / side
    lon = spec.min_lon + (cell.col + 0.5) * (spec.max_lon - spec.min_lon) / side
    return LatLng(lat, lon)


def cell_centers(spec, level=None):
    """Array of shape (4**level, 2) with the centers of all cells at ``level``."""
    level = spec.depth if level is None else level
    side = 2 ** level
    rows, cols = np.divmod(np.arange(side * side), side)
    lat = spec.min_lat + (rows + 0.5) * (spec.max_lat - spec.min_lat) / side
    lon = spec.min_lon + (cols + 0.5) * (spec.max_lon - spec.min_lon) / side
    return np.stack([lat, lon], axis=1)


def distance_m(a, b):
    """Equirectangular distance in meters between two lat/lon points."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    x = (lon2 - lon1) * math.cos(0.5 * (lat1 + lat2))
    y = lat2 - lat1
    return EARTH_RADIUS_M * math.hypot(x, y)


def pairwise_distance_m(a, b):
    """Equirectangular distance matrix between two arrays of lat/lon rows."""
    a = np.radians(np.asarray(a, dtype=np.float64).reshape(-1, 2))
    b = np.radians(np.asarray(b, dtype=np.float64).reshape(-1, 2))
    mean_lat = 0.5 * (a[:, None, 0] + b[None, :, 0])
    x = (b[None, :, 1] - a[:, None, 1]) * np.cos(mean_lat)
    y = b[None, :, 0] - a[:, None, 0]
    return EARTH_RADIUS_M * np.hypot(x, y)


@dataclass(frozen=True)
class POIAssignment:
    spec: GridSpec
    cells: tuple
    cost_shape: tuple
    total_cost: float

    def cell_of(self, poi_index):
        return self.cells[poi_index]


def minimal_depth(n_pois):
    depth = 0
    while 4 ** depth < n_pois:
        depth += 1
    return depth


def assign_scattered_pois(pois, depth=None, bbox=None):
    """
    Assign each scattered POI to a distinct finest-resolution cell so that the
    summed POI-to-cell-center distance is minimal.

    ``depth=None`` picks the smallest depth with enough cells. ``bbox`` may be
    a ``GridSpec`` (its depth is then overridden), a (min_lat, min_lon,
    max_lat, max_lon) tuple, or ``None`` for the extent of the POIs.
    """
    pois = np.asarray(pois, dtype=np.float64).reshape(-1, 2)
    n = len(pois)
    if depth is None:
        depth = minimal_depth(n)
    if n > 4 ** depth:
        raise CapacityError("%d POIs do not fit in the %d cells of depth %d" % (n, 4 ** depth, depth))

    if isinstance(bbox, GridSpec):
        spec = GridSpec(bbox.min_lat, bbox.min_lon, bbox.max_lat, bbox.max_lon, depth)
    elif bbox is not None:
        spec = GridSpec(*[float(x) for x in bbox], depth=depth)
    else:
        spec = GridSpec.from_points(pois, depth)

    cost = pairwise_distance_m(pois, cell_centers(spec))
    rows, cols = linear_sum_assignment(cost)
    cells = [None] * n
    for r, c in zip(rows, cols):
        cells[r] = CellId(c, depth)
    total = float(cost[rows, cols].sum())
    logger.debug("Assigned %d POIs to depth-%d grid, total cost %.3f m", n, depth, total)
    return POIAssignment(spec=spec, cells=tuple(cells), cost_shape=cost.shape, total_cost=total)
