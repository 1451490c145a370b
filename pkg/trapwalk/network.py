# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Node geometries of the quantum networks.

Two kinds of geometry exist: N nodes placed uniformly at random in the cube
[0, N]³ (the disordered network) and N equally spaced nodes on a line (the
regular chain used as an analytic control). Each geometry knows its trap nodes;
by default the trap is the first node (index 0).

Random configurations are drawn from a Philox generator (a counter-based
64-bit PRNG from numpy). Each realization of an ensemble gets its own seed,
derived from the master seed and the realization label through a numpy
SeedSequence, so that a realization can be reproduced on its own, regardless
of how many workers computed the ensemble.
"""

import dataclasses
import enum
import logging

import numpy as np
from scipy.spatial import distance

logger = logging.getLogger(__name__)

#: minimum distance between two nodes of a random configuration
DEFAULT_DELTA_MIN = 1e-2
#: redraws allowed per node before a configuration is given up
RESAMPLE_BUDGET_PER_NODE = 100
DEFAULT_TRAP = 0


class InvalidArgument(ValueError):
    """Raised whenever a parameter lies outside of its permitted range."""


class IndexOutOfRange(IndexError):
    """A node or eigenstate index does not exist.

    Attributes: index - offending index, size - number of valid indices.
    """

    def __init__(self, index, size):
        self.index = index
        self.size = size
        super().__init__(
            'index %s out of range, expected 0 <= index < %d' % (index, size)
        )


class GeometryInfeasible(Exception):
    """Too many points had to be redrawn to respect the minimum distance.

    Attributes: n_nodes, delta_min and attempts (number of redraws when the
    generator gave up).
    """

    def __init__(self, n_nodes, delta_min, attempts):
        self.n_nodes = n_nodes
        self.delta_min = delta_min
        self.attempts = attempts
        super().__init__(
            'could not place %d nodes with a minimum distance of %g after %d '
            'redraws' % (n_nodes, delta_min, attempts)
        )


class GeometryKind(enum.Enum):
    """Kind of node geometry."""

    disordered3d = 'disordered3d'
    chain1d = 'chain1d'

    @staticmethod
    def parse(string):
        string = string.strip().lower()
        for kind in GeometryKind:
            if kind.value == string:
                return kind
        raise ValueError('unrecognised geometry: %s' % string)


def check_index(index, size):
    """Raise IndexOutOfRange unless 0 <= index < size; return the index as int."""
    if isinstance(index, (bool, np.bool_)) or not isinstance(
        index, (int, np.integer)
    ):
        raise IndexOutOfRange(index, size)
    if not 0 <= index < size:
        raise IndexOutOfRange(index, size)
    return int(index)


@dataclasses.dataclass(frozen=True)
class NodeConfiguration:
    """N node positions plus the set of trap nodes.

    `coords` is a read-only (N, 3) array. `seed` is the 64-bit seed the
    coordinates were drawn with (0 for the deterministic chain) and
    `resample_count` the number of points which had to be redrawn because
    they came closer than `delta_min` to an already placed node.
    """

    coords: np.ndarray
    trap_nodes: tuple = (DEFAULT_TRAP,)
    geometry_kind: GeometryKind = GeometryKind.disordered3d
    seed: int = 0
    resample_count: int = 0
    delta_min: float = 0.0

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 3 or coords.shape[0] < 2:
            raise InvalidArgument(
                'coordinates must be an (N, 3) array with N >= 2, got shape %s'
                % (coords.shape,)
            )
        coords.setflags(write=False)
        object.__setattr__(self, 'coords', coords)
        n = coords.shape[0]
        traps = tuple(sorted({check_index(t, n) for t in self.trap_nodes}))
        if not traps:
            raise InvalidArgument('at least one trap node is required')
        if len(traps) >= n:
            raise InvalidArgument('at least one node must not be a trap')
        object.__setattr__(self, 'trap_nodes', traps)
        if self.geometry_kind == GeometryKind.disordered3d and (
            coords.min() < 0 or coords.max() > n
        ):
            raise InvalidArgument('coordinates must lie within [0, %d]' % n)

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    def is_trap(self, node):
        return check_index(node, self.n_nodes) in self.trap_nodes

    def distances(self):
        """Return the symmetric (N, N) matrix of all pairwise distances."""
        return distance.squareform(distance.pdist(self.coords))


def realization_seed(master_seed, realization):
    """Derive the 64-bit seed of a realization from the master seed.

    The derivation depends on nothing but its two arguments, hence every
    worker computes the same seed for the same realization.
    """
    if not 0 <= master_seed < 2**64:
        raise InvalidArgument('master seed must be an unsigned 64 bit integer')
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(realization,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed):
    """Return the numpy Generator used for all random geometries."""
    return np.random.Generator(np.random.Philox(seed))


def generate_configuration(n, seed, delta_min=DEFAULT_DELTA_MIN):
    """Place n nodes uniformly at random in [0, n]³.

    Nodes are placed one after another. A node closer than delta_min to an
    already placed node is redrawn; after RESAMPLE_BUDGET_PER_NODE * n redraws
    GeometryInfeasible is raised. The trap is node 0.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidArgument('a network needs at least two nodes, got %r' % (n,))
    if delta_min < 0:
        raise InvalidArgument('delta_min must not be negative')
    if not 0 <= seed < 2**64:
        raise InvalidArgument('seed must be an unsigned 64 bit integer, got %r' % seed)
    rng = make_generator(seed)
    coords = rng.uniform(0.0, n, size=(n, 3))
    budget = RESAMPLE_BUDGET_PER_NODE * n
    resampled = 0
    if delta_min > 0:
        for i in range(1, n):
            while np.min(np.linalg.norm(coords[:i] - coords[i], axis=1)) < delta_min:
                resampled += 1
                if resampled > budget:
                    raise GeometryInfeasible(n, delta_min, resampled)
                coords[i] = rng.uniform(0.0, n, size=3)
    if resampled:
        logger.warning(
            'seed %d: redrew %d node(s) closer than %g to another node',
            seed,
            resampled,
            delta_min,
        )
    return NodeConfiguration(
        coords=coords,
        trap_nodes=(DEFAULT_TRAP,),
        geometry_kind=GeometryKind.disordered3d,
        seed=seed,
        resample_count=resampled,
        delta_min=delta_min,
    )


def generate_chain(n, spacing=1.0):
    """Return n nodes on the x axis, node j (counting from 1) at j * spacing.

    The trap sits at the end node with index 0.
    """
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidArgument('a chain needs at least two nodes, got %r' % (n,))
    if not spacing > 0:
        raise InvalidArgument('chain spacing must be positive, got %r' % (spacing,))
    coords = np.zeros((n, 3))
    coords[:, 0] = spacing * np.arange(1, n + 1)
    return NodeConfiguration(
        coords=coords,
        trap_nodes=(DEFAULT_TRAP,),
        geometry_kind=GeometryKind.chain1d,
    )


def pairwise_distance(config, j, k):
    """Euclidean distance between nodes j and k."""
    j = check_index(j, config.n_nodes)
    k = check_index(k, config.n_nodes)
    if j == k:
        return 0.0
    return float(np.linalg.norm(config.coords[j] - config.coords[k]))
