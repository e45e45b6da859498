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
From raw GPS traces to discretized stay-point trajectories, plus the two
synthetic datasets used by the ablation experiments.

The pipeline for real data is::

    raws = load_raw_csv('traces.csv')
    dataset = build_dataset(raws, spec, n_time=24)

``build_dataset`` runs ``extract_stay_points`` and ``discretize`` on every
trace and drops traces that leave no visit.
"""

import logging

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from mobility_synth.conf import get_setting
from mobility_synth.exceptions import EmptyTrajectoryError, FileFormatError, \
    OutOfDomainError, ParameterError, TrajectoryError
from mobility_synth.geo import GridSpec, distance_m, latlng_to_cell, pairwise_distance_m
from mobility_synth.seeding import make_rng

logger = logging.getLogger(__name__)

RAW_COLUMNS = ['traj_id', 'lat', 'lon', 'unix_timestamp']

SECONDS_PER_DAY = 86400


@dataclass
class RawTrajectory:
    """
    A GPS trace: ``points`` is an (n, 3) float array of lat, lon and unix
    timestamp in seconds, strictly increasing in time.
    """
    traj_id: str
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) > 1 and not np.all(np.diff(self.points[:, 2]) > 0):
            raise TrajectoryError("Timestamps of trace %s are not strictly increasing" % self.traj_id)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class StayPoint:
    lat: float
    lon: float
    arrival: float
    departure: float


@dataclass(frozen=True)
class Trajectory:
    """
    A sequence of visits ``(cell, slot)``; cells are finest-resolution cell
    values, slots index the discretized time axis.
    """
    visits: tuple

    def __post_init__(self):
        object.__setattr__(self, 'visits', tuple((int(c), int(t)) for c, t in self.visits))

    def __len__(self):
        return len(self.visits)

    def __iter__(self):
        return iter(self.visits)

    @property
    def cells(self):
        return [c for c, _ in self.visits]

    @property
    def slots(self):
        return [t for _, t in self.visits]

    def validate(self, n_cells=None, n_time=None):
        if not self.visits:
            raise TrajectoryError("Empty trajectory")
        previous = None
        for cell, slot in self.visits:
            if n_cells is not None and not 0 <= cell < n_cells:
                raise TrajectoryError("Cell %d outside [0, %d)" % (cell, n_cells))
            if n_time is not None and not 0 <= slot < n_time:
                raise TrajectoryError("Slot %d outside [0, %d)" % (slot, n_time))
            if previous is not None:
                if cell == previous[0]:
                    raise TrajectoryError("Consecutive repeated cell %d" % cell)
                if slot < previous[1]:
                    raise TrajectoryError("Time slots decrease (%d after %d)" % (slot, previous[1]))
            previous = (cell, slot)
        return self


@dataclass
class Dataset:
    spec: GridSpec
    n_time: int
    trajectories: list = field(default_factory=list)

    def __len__(self):
        return len(self.trajectories)

    def validate(self):
        for traj in self.trajectories:
            traj.validate(self.spec.n_poi, self.n_time)
        return self


def load_raw_csv(path):
    """
    Read a CSV with columns traj_id, lat, lon, unix_timestamp into a list of
    ``RawTrajectory`` ordered by trajectory id. Repeated timestamps within a
    trace keep their first sample.
    """
    frame = pd.read_csv(path)
    missing = [c for c in RAW_COLUMNS if c not in frame.columns]
    if missing:
        raise FileFormatError("Raw trace file %s lacks columns %s" % (path, ', '.join(missing)))
    frame = frame[RAW_COLUMNS].dropna()
    frame['traj_id'] = frame['traj_id'].astype(str)
    frame = frame.sort_values(['traj_id', 'unix_timestamp'], kind='mergesort')
    frame = frame.drop_duplicates(subset=['traj_id', 'unix_timestamp'], keep='first')
    raws = []
    for traj_id, group in frame.groupby('traj_id', sort=True):
        raws.append(RawTrajectory(traj_id, group[['lat', 'lon', 'unix_timestamp']].to_numpy(dtype=np.float64)))
    logger.info("Read %d raw traces (%d samples) from %s", len(raws), len(frame), path)
    return raws


def extract_stay_points(raw, radius_m=None, min_duration=None):
    """
    Forward-scan stay point detection.

    From an anchor sample, the window grows while samples stay within
    ``radius_m`` of the anchor; it is then trimmed from the end until every
    member lies within ``radius_m`` of the window centroid. A window lasting
    at least ``min_duration`` minutes becomes a stay point and scanning
    resumes after it, otherwise the anchor advances by one sample.
    """
    radius_m = get_setting('STAY_RADIUS_M') if radius_m is None else radius_m
    min_duration = get_setting('STAY_MIN_DURATION_MIN') if min_duration is None else min_duration
    min_seconds = 60.0 * min_duration
    pts = raw.points
    n = len(pts)
    stays = []
    i = 0
    while i < n:
        j = i + 1
        while j < n and distance_m(pts[i, :2], pts[j, :2]) <= radius_m:
            j += 1
        k = j
        centroid = pts[i:k, :2].mean(axis=0)
        while k - i > 1:
            centroid = pts[i:k, :2].mean(axis=0)
            if pairwise_distance_m(pts[i:k, :2], centroid).max() <= radius_m:
                break
            k -= 1
        else:
            centroid = pts[i, :2]
        span = pts[k - 1, 2] - pts[i, 2]
        if span > 0 and span >= min_seconds:
            stays.append(StayPoint(float(centroid[0]), float(centroid[1]),
                                   float(pts[i, 2]), float(pts[k - 1, 2])))
            i = k
        else:
            i += 1
    return stays


def time_slot(timestamp, horizon, n_time):
    start, end = horizon
    if not start <= timestamp <= end:
        raise OutOfDomainError("Timestamp %r outside horizon %r" % (timestamp, horizon))
    slot = int((timestamp - start) / (end - start) * n_time)
    return min(slot, n_time - 1)


def discretize(stays, spec, n_time, horizon):
    """
    Map stay points to (cell, slot) visits, collapsing runs of the same cell
    into their first visit.
    """
    visits = []
    for stay in stays:
        cell = latlng_to_cell(spec, (stay.lat, stay.lon)).value
        if visits and visits[-1][0] == cell:
            continue
        visits.append((cell, time_slot(stay.arrival, horizon, n_time)))
    if not visits:
        raise EmptyTrajectoryError("No visit survived discretization")
    return Trajectory(tuple(visits))


def day_horizon(timestamp):
    start = (int(timestamp) // SECONDS_PER_DAY) * SECONDS_PER_DAY
    return (float(start), float(start + SECONDS_PER_DAY))


def build_dataset(raws, spec, n_time, radius_m=None, min_duration=None, horizon=None):
    """
    Extract and discretize every raw trace. Without an explicit ``horizon``
    each trace uses the UTC day of its first stay; stays outside the horizon
    or the bounding box are dropped.
    """
    trajectories = []
    dropped = 0
    for raw in raws:
        stays = extract_stay_points(raw, radius_m, min_duration)
        if not stays:
            dropped += 1
            continue
        window = horizon if horizon is not None else day_horizon(stays[0].arrival)
        kept = [s for s in stays
                if window[0] <= s.arrival <= window[1] and spec.contains(s.lat, s.lon)]
        try:
            trajectories.append(discretize(kept, spec, n_time, window))
        except EmptyTrajectoryError:
            dropped += 1
    logger.info("Built %d trajectories, dropped %d traces without visits", len(trajectories), dropped)
    return Dataset(spec, n_time, trajectories).validate()


def gen_random_dataset(w, n, seed=None, n_time=2):
    """
    ``n`` length-2 trajectories whose two cells are uniform over the grid and
    distinct.
    """
    spec = GridSpec.unit(w)
    n_cells = spec.n_poi
    if n_cells < 2:
        raise ParameterError("A Random dataset needs at least two cells")
    rng = make_rng(seed)
    first = rng.integers(0, n_cells, size=n)
    # uniform over the other n_cells - 1 cells
    second = rng.integers(0, n_cells - 1, size=n)
    second = second + (second >= first)
    trajectories = [Trajectory(((int(a), 0), (int(b), 1))) for a, b in zip(first, second)]
    return Dataset(spec, n_time, trajectories)


def straight_start_rows(w):
    return [row for row in range(0, w - 2, 2)]


def gen_straight_dataset(w, n, seed=None, n_time=3):
    """
    ``n`` length-3 trajectories moving two rows north in a fixed column:
    ``l2 = l1 + w`` and ``l3 = l2 + w``. First cells come from even rows
    with room for the two further steps.
    """
    if w < 4:
        raise ParameterError("A Straight dataset needs w >= 4, got %d" % w)
    spec = GridSpec.unit(w)
    rows = np.asarray(straight_start_rows(w))
    rng = make_rng(seed)
    start_rows = rows[rng.integers(0, len(rows), size=n)]
    cols = rng.integers(0, w, size=n)
    trajectories = []
    for row, col in zip(start_rows, cols):
        first = int(row) * w + int(col)
        trajectories.append(Trajectory(((first, 0), (first + w, 1), (first + 2 * w, 2))))
    return Dataset(spec, n_time, trajectories)
