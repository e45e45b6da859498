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


import hashlib

import numpy as np


def derive_seed(master_seed, *labels):
    """
    Derive a 64-bit seed from ``master_seed`` and a path of labels.

    The same (seed, labels) always yields the same value, and distinct label
    paths give unrelated streams, so phases and samples can be re-run in
    isolation.
    """
    text = '/'.join([str(master_seed)] + [str(label) for label in labels])
    digest = hashlib.sha256(text.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def make_rng(seed=None):
    """
    Return a numpy Generator over the counter-based Philox bit generator.

    ``seed=None`` draws the key from OS entropy.
    """
    return np.random.Generator(np.random.Philox(seed))
