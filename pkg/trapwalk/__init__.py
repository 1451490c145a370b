# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
from . import analysis
from . import checkpoint
from . import config
from . import dynamics
from . import ensemble
from . import hamiltonian
from . import network
from . import sink
from . import spectra

VERSION = '1.0.0'

__all__ = [
    'analysis',
    'checkpoint',
    'config',
    'dynamics',
    'ensemble',
    'hamiltonian',
    'network',
    'sink',
    'spectra',
    'VERSION',
]
