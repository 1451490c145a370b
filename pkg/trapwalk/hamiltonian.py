# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Construction of the network Hamiltonians.

The trap-free Hamiltonian H₀ is a graph Laplacian: off-diagonal elements are
minus the coupling between two nodes and each diagonal element is the sum of
the couplings of its node. For the disordered network the coupling decays as
Δ^(-σ) with the distance Δ (σ = 3 for dipolar interactions), the chain couples
nearest neighbours only.

The trapped Hamiltonian is H = H₀ - iΓ_r Σ_m |m⟩⟨m|, the sum running over the
trap nodes. Γ_r is realization dependent: it is the dimensionless base
strength Γ times the diagonal element of H₀ at the trap.
"""

import dataclasses

import numpy as np

from .network import GeometryKind, InvalidArgument, check_index

DEFAULT_SIGMA = 3.0


class DegenerateGeometry(ValueError):
    """Two distinct nodes share a position; `pair` names them."""

    def __init__(self, pair):
        self.pair = pair
        super().__init__('nodes %d and %d coincide, coupling diverges' % pair)


class InvalidGeometry(ValueError):
    """The Hamiltonian builder does not fit the geometry it was given."""


def _read_only(array):
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True)
class CouplingMatrix:
    """Real symmetric trap-free Hamiltonian H₀ (ħ = 1)."""

    entries: np.ndarray
    geometry_kind: GeometryKind = GeometryKind.disordered3d
    interaction_exponent: float = DEFAULT_SIGMA

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgument('H0 must be a square matrix')
        object.__setattr__(self, 'entries', _read_only(entries))

    @property
    def dim(self):
        return self.entries.shape[0]

    def diagonal(self, node):
        node = check_index(node, self.dim)
        return float(self.entries[node, node])

    def norm(self):
        """Spectral norm of H₀."""
        return float(np.linalg.norm(self.entries, 2))


@dataclasses.dataclass(frozen=True)
class TrapSpec:
    """Trap nodes together with the base (Γ) and realization (Γ_r) strength."""

    trap_nodes: tuple
    base_strength: float
    realization_strength: float

    def __post_init__(self):
        object.__setattr__(self, 'trap_nodes', tuple(sorted(set(self.trap_nodes))))
        if not self.trap_nodes:
            raise InvalidArgument('at least one trap node is required')
        if not self.base_strength > 0:
            raise InvalidArgument('trapping strength Γ must be positive')
        # Γ_r = 0 is the Hermitian limit, only useful for testing
        if self.realization_strength < 0:
            raise InvalidArgument('realization trap strength must not be negative')

    @property
    def n_traps(self):
        return len(self.trap_nodes)


@dataclasses.dataclass(frozen=True)
class TrappedHamiltonian:
    """H = H₀ - iΓ: complex symmetric, imaginary part on the trap diagonal."""

    real_part: CouplingMatrix
    imag_diagonal: np.ndarray
    trap: TrapSpec

    def __post_init__(self):
        imag = np.array(self.imag_diagonal, dtype=float)
        if imag.shape != (self.real_part.dim,):
            raise InvalidArgument('imaginary diagonal must have one entry per node')
        if np.any(imag > 0):
            raise InvalidArgument('imaginary part must be negative semidefinite')
        object.__setattr__(self, 'imag_diagonal', _read_only(imag))

    @property
    def dim(self):
        return self.real_part.dim

    @property
    def trap_nodes(self):
        return self.trap.trap_nodes

    def matrix(self):
        """Return H as a dense complex array."""
        h = self.real_part.entries.astype(complex)
        h[np.diag_indices(self.dim)] += 1j * self.imag_diagonal
        return h


def _laplacian(couplings, geometry_kind, sigma):
    """Turn a symmetric matrix of couplings with zero diagonal into H₀."""
    h0 = -couplings
    np.fill_diagonal(h0, couplings.sum(axis=1))
    return CouplingMatrix(h0, geometry_kind=geometry_kind, interaction_exponent=sigma)


def build_h0_long_range(config, sigma=DEFAULT_SIGMA):
    """Couple every pair of nodes with Δ^(-sigma)."""
    dist = config.distances()
    off_diagonal = ~np.eye(config.n_nodes, dtype=bool)
    if np.any(dist[off_diagonal] == 0):
        j, k = np.argwhere((dist == 0) & off_diagonal)[0]
        raise DegenerateGeometry((int(j), int(k)))
    couplings = np.zeros_like(dist)
    couplings[off_diagonal] = dist[off_diagonal] ** (-sigma)
    return _laplacian(couplings, config.geometry_kind, sigma)


def build_h0_chain(config):
    """Nearest-neighbour Laplacian of a chain: -1 between neighbours."""
    if config.geometry_kind != GeometryKind.chain1d:
        raise InvalidGeometry(
            'nearest-neighbour couplings need a chain, got %s'
            % config.geometry_kind.value
        )
    n = config.n_nodes
    couplings = np.zeros((n, n))
    idx = np.arange(n - 1)
    couplings[idx, idx + 1] = couplings[idx + 1, idx] = 1.0
    return _laplacian(couplings, GeometryKind.chain1d, DEFAULT_SIGMA)


def build_h0(config, sigma=DEFAULT_SIGMA):
    """Build H₀ with the couplings matching the geometry kind."""
    if config.geometry_kind == GeometryKind.chain1d:
        return build_h0_chain(config)
    return build_h0_long_range(config, sigma)


def realization_trap_strength(h0, gamma, trap):
    """Γ_r = Γ ⟨trap|H₀|trap⟩."""
    if not gamma > 0:
        raise InvalidArgument('trapping strength Γ must be positive, got %r' % gamma)
    return gamma * h0.diagonal(trap)


def make_trap(h0, gamma, trap_nodes):
    """Return the TrapSpec of a realization.

    With several traps, Γ_r is taken from the lowest trap index; all traps
    share it.
    """
    trap_nodes = tuple(sorted({check_index(t, h0.dim) for t in trap_nodes}))
    if not trap_nodes:
        raise InvalidArgument('at least one trap node is required')
    gamma_r = realization_trap_strength(h0, gamma, trap_nodes[0])
    return TrapSpec(trap_nodes, gamma, gamma_r)


def build_full_hamiltonian(h0, trap):
    """Add -iΓ_r on the diagonal of every trap node."""
    imag = np.zeros(h0.dim)
    for node in trap.trap_nodes:
        imag[check_index(node, h0.dim)] = -trap.realization_strength
    return TrappedHamiltonian(real_part=h0, imag_diagonal=imag, trap=trap)
