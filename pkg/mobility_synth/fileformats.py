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
On-disk formats.

Discretized dataset (``.traj``)::

    MOBSYN-DATASET 1
    min_lat=0.0
    min_lon=0.0
    max_lat=1.0
    max_lon=1.0
    w=16
    n_time=3
    count=2
    17:0 33:1 49:2
    4:0 20:1 36:2

Floats are written with ``repr`` so a save/load cycle is bit-exact.

Checkpoint: the 8 bytes ``MOBSYNCK``, a little-endian uint32 version, a
uint32 header length, a JSON header (model kind, hyperparameters, parameter
names and shapes) and the parameters as raw little-endian float64 in header
order.

DP transition matrix: ``key=value`` header lines (``i_res``, ``n_poi``,
``epsilon``, ``smoothing``), a blank line, then one line of
whitespace-separated noised values per coarse region.

Config files and the privacy report are flat ``key = value`` text.
"""

import io
import json
import logging
import struct

from collections import OrderedDict

import numpy as np

from mobility_synth.exceptions import FileFormatError
from mobility_synth.geo import GridSpec
from mobility_synth.preprocess import Dataset, Trajectory

logger = logging.getLogger(__name__)

DATASET_MAGIC = 'MOBSYN-DATASET 1'
DATASET_KEYS = ('min_lat', 'min_lon', 'max_lat', 'max_lon', 'w', 'n_time', 'count')

CHECKPOINT_MAGIC = b'MOBSYNCK'
CHECKPOINT_VERSION = 1

DPTRAN_KEYS = ('i_res', 'n_poi', 'epsilon', 'smoothing')


# datasets

def dump_dataset(dataset, stream):
    stream.write(DATASET_MAGIC + '\n')
    for key, value in dataset.spec.header():
        stream.write('%s=%s\n' % (key, value))
    stream.write('n_time=%d\n' % dataset.n_time)
    stream.write('count=%d\n' % len(dataset))
    for traj in dataset.trajectories:
        stream.write(' '.join('%d:%d' % visit for visit in traj) + '\n')


def save_dataset(dataset, path):
    with open(path, 'w', encoding='ascii', newline='\n') as stream:
        dump_dataset(dataset, stream)
    logger.info("Wrote %d trajectories to %s", len(dataset), path)


def _parse_visit(token, lineno):
    try:
        cell, slot = token.split(':')
        return int(cell), int(slot)
    except ValueError:
        raise FileFormatError("Line %d: malformed visit '%s'" % (lineno, token))


def parse_dataset(stream, source='<stream>'):
    lines = stream.read().splitlines()
    if not lines or lines[0].strip() != DATASET_MAGIC:
        raise FileFormatError("%s is not a mobility_synth dataset file" % source)
    header = {}
    for lineno, line in enumerate(lines[1:1 + len(DATASET_KEYS)], start=2):
        key, sep, value = line.partition('=')
        if not sep:
            raise FileFormatError("%s line %d: expected key=value" % (source, lineno))
        header[key.strip()] = value.strip()
    missing = [k for k in DATASET_KEYS if k not in header]
    if missing:
        raise FileFormatError("%s lacks header keys %s" % (source, ', '.join(missing)))
    try:
        spec = GridSpec.from_width(float(header['min_lat']), float(header['min_lon']),
                                   float(header['max_lat']), float(header['max_lon']), int(header['w']))
        n_time, count = int(header['n_time']), int(header['count'])
    except ValueError as e:
        raise FileFormatError("%s: bad header (%s)" % (source, e))
    body = lines[1 + len(DATASET_KEYS):]
    if len(body) != count:
        raise FileFormatError("%s declares %d trajectories but holds %d" % (source, count, len(body)))
    trajectories = []
    for lineno, line in enumerate(body, start=2 + len(DATASET_KEYS)):
        visits = [_parse_visit(token, lineno) for token in line.split()]
        trajectories.append(Trajectory(visits))
    return Dataset(spec, n_time, trajectories).validate()


def load_dataset(path):
    with open(path, 'r', encoding='ascii') as stream:
        dataset = parse_dataset(stream, source=path)
    logger.info("Read %d trajectories from %s", len(dataset), path)
    return dataset


def dataset_bytes(dataset):
    buf = io.StringIO()
    dump_dataset(dataset, buf)
    return buf.getvalue().encode('ascii')


# checkpoints

def save_checkpoint(path, meta, arrays):
    """Write ``meta`` (JSON-serializable) and the name -> array mapping ``arrays``."""
    header = OrderedDict(meta)
    header['parameters'] = [[name, list(np.shape(value))] for name, value in arrays.items()]
    blob = json.dumps(header).encode('utf-8')
    with open(path, 'wb') as stream:
        stream.write(CHECKPOINT_MAGIC)
        stream.write(struct.pack('<II', CHECKPOINT_VERSION, len(blob)))
        stream.write(blob)
        for value in arrays.values():
            stream.write(np.ascontiguousarray(value, dtype='<f8').tobytes())


def load_checkpoint(path):
    with open(path, 'rb') as stream:
        data = stream.read()
    if data[:8] != CHECKPOINT_MAGIC or len(data) < 16:
        raise FileFormatError("%s is not a mobility_synth checkpoint" % path)
    version, size = struct.unpack('<II', data[8:16])
    if version != CHECKPOINT_VERSION:
        raise FileFormatError("%s: unsupported checkpoint version %d" % (path, version))
    try:
        header = json.loads(data[16:16 + size].decode('utf-8'), object_pairs_hook=OrderedDict)
    except ValueError as e:
        raise FileFormatError("%s: corrupt checkpoint header (%s)" % (path, e))
    offset = 16 + size
    arrays = OrderedDict()
    for name, shape in header.pop('parameters'):
        n = int(np.prod(shape)) if shape else 1
        end = offset + 8 * n
        if end > len(data):
            raise FileFormatError("%s: truncated at parameter %s" % (path, name))
        arrays[name] = np.frombuffer(data[offset:end], dtype='<f8').astype(np.float64).reshape(shape)
        offset = end
    if offset != len(data):
        raise FileFormatError("%s: %d trailing bytes" % (path, len(data) - offset))
    return header, arrays


def save_model(model, path):
    meta, arrays = model.state()
    save_checkpoint(path, meta, arrays)
    logger.info("Saved %s checkpoint (%d parameters) to %s", model.kind, model.parameter_count(), path)


def load_model(path):
    from mobility_synth.model import model_from_state

    meta, arrays = load_checkpoint(path)
    return model_from_state(meta, arrays)


# DP transition matrices

def save_dptran(dptran, path):
    with open(path, 'w', encoding='ascii', newline='\n') as stream:
        stream.write('i_res=%d\n' % dptran.i_res)
        stream.write('n_poi=%d\n' % dptran.n_poi)
        stream.write('epsilon=%r\n' % float(dptran.epsilon))
        stream.write('smoothing=%r\n' % float(dptran.smoothing))
        stream.write('\n')
        for row in dptran.noised:
            stream.write(' '.join(repr(float(x)) for x in row) + '\n')
    logger.info("Wrote DP transition matrix (%d x %d) to %s", dptran.noised.shape[0], dptran.n_poi, path)


def load_dptran(path):
    from mobility_synth.pretrain import DPTransitionMatrix

    with open(path, 'r', encoding='ascii') as stream:
        head, _, body = stream.read().partition('\n\n')
    header = parse_key_value_lines(head.splitlines(), source=path)
    missing = [k for k in DPTRAN_KEYS if k not in header]
    if missing:
        raise FileFormatError("%s lacks header keys %s" % (path, ', '.join(missing)))
    try:
        i_res, n_poi = int(header['i_res']), int(header['n_poi'])
        rows = [[float(x) for x in line.split()] for line in body.splitlines() if line.strip()]
        noised = np.array(rows, dtype=np.float64)
    except ValueError as e:
        raise FileFormatError("%s: %s" % (path, e))
    if noised.shape != (4 ** i_res, n_poi):
        raise FileFormatError("%s: expected a %d x %d matrix, found shape %s"
                              % (path, 4 ** i_res, n_poi, noised.shape))
    return DPTransitionMatrix(i_res, noised, float(header['epsilon']), float(header['smoothing']))


# key = value text

def normalize_key(key):
    return key.strip().lstrip('-').replace('-', '_').lower()


def parse_key_value_lines(lines, source='<config>'):
    values = OrderedDict()
    for lineno, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise FileFormatError("%s line %d: expected 'key = value'" % (source, lineno))
        values[normalize_key(key)] = value.strip()
    return values


def parse_key_values(path):
    with open(path, 'r', encoding='utf-8') as stream:
        return parse_key_value_lines(stream.read().splitlines(), source=path)


def write_key_values(path, pairs):
    with open(path, 'w', encoding='utf-8', newline='\n') as stream:
        for key, value in pairs:
            stream.write('%s = %s\n' % (key, value))
