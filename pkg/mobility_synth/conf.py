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
Settings for mobility_synth.

All defaults live in ``DEFAULTS``. A Django project overrides any subset of
them with a ``MOBILITY_SYNTH`` dictionary in its settings module::

    MOBILITY_SYNTH = {
        'N_DIM': 32,
        'EPSILON': 1.0,
    }

Values are looked up at call time, so ``override_settings`` in tests takes
effect immediately.
"""

from django.conf import settings


DEFAULTS = {
    # grid and time discretization
    'W': 32,
    'N_TIME': 24,

    # stay point extraction
    'STAY_RADIUS_M': 200.0,
    'STAY_MIN_DURATION_MIN': 10.0,

    # generator architecture
    'N_DIM': 64,
    'N_HIDDEN': 128,
    'N_KEY': 64,
    'N_TIME_DIM': 16,
    'N_FF_HIDDEN': 64,

    # privacy and DP-SGD
    'EPSILON': 2.0,
    'DELTA': 1e-5,
    'CLIP_NORM': 1.0,
    'BATCH': 64,
    'EPOCHS': 10,
    'LR': 0.1,
    'BUDGET_C': 0.018,
    'PRETRAIN_RES': 2,

    # private pretraining
    'PRETRAIN_STEPS': 3000,
    'PRETRAIN_BATCH': 32,
    'PRETRAIN_LR': 0.05,
    'SMOOTHING': 1e-4,

    # generation
    'GEN_MAX_LENGTH': 20,

    # evaluation
    'N_BIN': 20,
    'PHI': 5.0,
    'N_DENSITY_QUERIES': 500,
    'N_PATTERNS': 200,
    'N_START': 30,

    # runtime
    'THREADS': 1,
    'CHECKPOINT_EVERY': 100,
}


def get_setting(name):
    """
    Return the configured value of ``name``, falling back to ``DEFAULTS``.
    """
    if name not in DEFAULTS:
        raise KeyError("Unknown mobility_synth setting '%s'" % name)
    overrides = {}
    if settings.configured:
        overrides = getattr(settings, 'MOBILITY_SYNTH', None) or {}
    return overrides.get(name, DEFAULTS[name])
