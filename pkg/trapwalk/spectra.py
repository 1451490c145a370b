# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Eigendecompositions of the trap-free and the trapped Hamiltonian.

H₀ is real symmetric and decomposed with LAPACK's symmetric solver. The trapped
Hamiltonian H = H₀ - iΓ is complex symmetric (Hᵀ = H, not Hermitian), so its
left eigenvectors are the transposes of its right eigenvectors once these are
normalized with the bilinear form Σ_k (Ψ_l)_k² = 1. Should that normalization
be impossible or fail to yield a biorthonormal pair of bases (degenerate
eigenvalues), the left vectors are taken from the inverse of the matrix of
right eigenvectors instead.

The module further provides the first-order perturbative decay rates
γ_l = Γ_r |⟨trap|Ψ_l⁰⟩|² and the tools to compare them with the exact ones.
"""

import dataclasses
import enum
import logging

import numpy as np
import scipy.linalg

from .network import InvalidArgument, check_index

logger = logging.getLogger(__name__)

#: maximum deviation from ⟨Ψ̃_l|Ψ_l'⟩ = δ_ll' accepted for the transpose route
BIORTHONORMALITY_TOL = 1e-8
#: negative rates above -RATE_FLOOR_FACTOR * Γ_r count as roundoff
RATE_FLOOR_FACTOR = 1e-12
#: near-degeneracy threshold in units of Γ_r for perturbative comparisons
DEGENERACY_FACTOR = 1e3


class ConvergenceFailure(Exception):
    """The eigensolver did not converge."""


class NonPositiveDecayRate(Exception):
    """A decay rate came out clearly negative, which signals a solver failure.

    Attributes: index (position in solver order), rate and the floor below
    which rates are rejected.
    """

    def __init__(self, index, rate, floor):
        self.index = index
        self.rate = rate
        self.floor = floor
        super().__init__(
            'decay rate %d is %.3e, below the roundoff floor -%.3e'
            % (index, rate, floor)
        )


class SortOrder(enum.Enum):
    by_gamma_ascending = 'by_gamma_ascending'
    by_epsilon_ascending = 'by_epsilon_ascending'


def _read_only(*arrays):
    for array in arrays:
        array.setflags(write=False)


@dataclasses.dataclass(frozen=True)
class RealSpectrum:
    """Eigenvalues (ascending) and orthonormal eigenvectors (columns) of H₀."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        _read_only(self.eigenvalues, self.eigenvectors)

    @property
    def dim(self):
        return len(self.eigenvalues)


@dataclasses.dataclass(frozen=True)
class TrappedSpectrum:
    """Eigenvalues E_l = ε_l - iγ_l of H with biorthonormal eigenvectors.

    `right_vectors[:, l]` is |Ψ_l⟩ and `left_vectors[l, :]` is ⟨Ψ̃_l|, hence
    left_vectors @ right_vectors is the identity.
    """

    real_parts: np.ndarray
    decay_rates: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    sort_order: SortOrder = SortOrder.by_gamma_ascending

    def __post_init__(self):
        _read_only(
            self.real_parts, self.decay_rates, self.right_vectors, self.left_vectors
        )

    @property
    def dim(self):
        return len(self.real_parts)

    @property
    def eigenvalues(self):
        return self.real_parts - 1j * self.decay_rates

    def sorted(self, order):
        """Return the spectrum reordered by `order` (a SortOrder)."""
        if order == SortOrder.by_gamma_ascending:
            perm = np.lexsort((self.real_parts, self.decay_rates))
        else:
            perm = np.lexsort((self.decay_rates, self.real_parts))
        return TrappedSpectrum(
            real_parts=self.real_parts[perm],
            decay_rates=self.decay_rates[perm],
            right_vectors=self.right_vectors[:, perm],
            left_vectors=self.left_vectors[perm, :],
            sort_order=order,
        )

    def reconstruct(self):
        """Return Σ_l E_l |Ψ_l⟩⟨Ψ̃_l|, which equals H up to roundoff."""
        return (self.right_vectors * self.eigenvalues) @ self.left_vectors


def decompose_hermitian(h0):
    """Full eigendecomposition of H₀, eigenvalues ascending."""
    entries = h0.entries if hasattr(h0, 'entries') else np.asarray(h0)
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(entries)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceFailure('symmetric eigensolver failed: %s' % e) from e
    return RealSpectrum(eigenvalues, eigenvectors)


def _transpose_left_vectors(right):
    """Normalize right eigenvectors of a complex symmetric matrix so that their
    transposes are the left eigenvectors; return None if that does not yield a
    biorthonormal pair."""
    norms = np.sum(right * right, axis=0)
    if np.any(np.abs(norms) < BIORTHONORMALITY_TOL):
        return None
    right = right / np.sqrt(norms)
    gram = right.T @ right
    if np.max(np.abs(gram - np.eye(len(gram)))) > BIORTHONORMALITY_TOL:
        return None
    return right, right.T.copy()


def rate_floor(h, gamma_r):
    """Magnitude up to which negative decay rates are considered roundoff."""
    roundoff = 10 * h.dim * np.finfo(float).eps * np.linalg.norm(h.matrix())
    return max(RATE_FLOOR_FACTOR * gamma_r, roundoff)


def trap_weighted_rates(h, right):
    """γ_l = Σ_m Γ_m |(Ψ_l)_m|² / ‖Ψ_l‖² for the right eigenvectors (columns).

    For an eigenvector ψ of H = H₀ - iΓ, Im(ψ†Hψ) = -ψ†Γψ, so these equal
    -Im E_l exactly. Unlike the imaginary parts returned by the eigensolver,
    whose absolute error is set by ‖H‖, they keep their relative precision
    when the trap weights are many orders of magnitude below the couplings.
    """
    power = np.abs(right) ** 2
    return (-np.asarray(h.imag_diagonal) @ power) / power.sum(axis=0)


def decompose_trapped(h, sort_order=SortOrder.by_gamma_ascending):
    """Eigendecomposition of the trapped Hamiltonian.

    Decay rates are taken from trap_weighted_rates() and are non-negative by
    construction. Eigenvalues whose imaginary part -Im E_l lies above
    rate_floor() raise NonPositiveDecayRate, as the solver has then failed.
    """
    matrix = h.matrix()
    try:
        eigenvalues, right = scipy.linalg.eig(matrix)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise ConvergenceFailure('general eigensolver failed: %s' % e) from e
    pair = _transpose_left_vectors(right)
    if pair is not None:
        right, left = pair
    else:
        logger.debug('transposed eigenvectors not biorthonormal, inverting instead')
        try:
            left = scipy.linalg.inv(right)
        except (scipy.linalg.LinAlgError, ValueError) as e:
            raise ConvergenceFailure(
                'eigenvectors do not form a basis: %s' % e
            ) from e
    solver_rates = -eigenvalues.imag
    floor = rate_floor(h, h.trap.realization_strength)
    if np.any(solver_rates < -floor):
        index = int(np.argmin(solver_rates))
        raise NonPositiveDecayRate(index, float(solver_rates[index]), floor)
    rates = trap_weighted_rates(h, right)
    spectrum = TrappedSpectrum(
        real_parts=eigenvalues.real.copy(),
        decay_rates=rates,
        right_vectors=right,
        left_vectors=left,
        sort_order=None,
    )
    return spectrum.sorted(sort_order)


def perturbative_rates(spec0, trap, gamma_r):
    """γ_l = Γ_r |⟨trap|Ψ_l⁰⟩|² in the eigenvalue order of spec0."""
    trap = check_index(trap, spec0.dim)
    return gamma_r * spec0.eigenvectors[trap, :] ** 2


@dataclasses.dataclass(frozen=True)
class SpectralPairing:
    """Levels of H paired with levels of H₀ by order of their real parts.

    Pair p joins trapped level `trapped_indices[p]` with H₀ level
    `real_indices[p]`; `gaps[p]` is |ε - λ| of that pair.
    """

    trapped_indices: np.ndarray
    real_indices: np.ndarray
    gaps: np.ndarray

    def __len__(self):
        return len(self.gaps)


def match_spectra(trapped, spec0):
    """Pair the levels of both spectra after sorting by real part."""
    if trapped.dim != spec0.dim:
        raise InvalidArgument(
            'spectra differ in dimension: %d vs %d' % (trapped.dim, spec0.dim)
        )
    trapped_order = np.argsort(trapped.real_parts, kind='stable')
    real_order = np.argsort(spec0.eigenvalues, kind='stable')
    gaps = np.abs(trapped.real_parts[trapped_order] - spec0.eigenvalues[real_order])
    return SpectralPairing(trapped_order, real_order, gaps)


def near_degenerate(eigenvalues, threshold):
    """Flag levels whose distance to the closest other level is < threshold.

    The returned mask is aligned with `eigenvalues`.
    """
    eigenvalues = np.asarray(eigenvalues)
    order = np.argsort(eigenvalues, kind='stable')
    spacing = np.diff(eigenvalues[order])
    closest = np.full(len(eigenvalues), np.inf)
    closest[:-1] = spacing
    closest[1:] = np.minimum(closest[1:], spacing)
    mask = np.empty(len(eigenvalues), dtype=bool)
    mask[order] = closest < threshold
    return mask


@dataclasses.dataclass(frozen=True)
class PerturbationReport:
    """Exact vs. first-order decay rates, one entry per pair of levels."""

    pairing: SpectralPairing
    exact: np.ndarray
    predicted: np.ndarray
    relative_errors: np.ndarray
    flagged: np.ndarray

    @property
    def max_relative_error(self):
        errors = self.relative_errors[~self.flagged]
        return float(errors.max()) if len(errors) else 0.0


def compare_perturbative(
    trapped, spec0, trap, gamma_r, degeneracy_factor=DEGENERACY_FACTOR
):
    """Compare exact rates with Γ_r |⟨trap|Ψ_l⁰⟩|².

    Levels of H₀ closer than degeneracy_factor * Γ_r to a neighbour are
    flagged and left out of the maximum relative error.
    """
    pairing = match_spectra(trapped, spec0)
    exact = trapped.decay_rates[pairing.trapped_indices]
    predicted = perturbative_rates(spec0, trap, gamma_r)[pairing.real_indices]
    with np.errstate(divide='ignore', invalid='ignore'):
        errors = np.where(
            exact > 0,
            np.abs(exact - predicted) / exact,
            np.where(predicted == 0, 0.0, np.inf),
        )
    flagged = near_degenerate(spec0.eigenvalues, degeneracy_factor * gamma_r)[
        pairing.real_indices
    ]
    if np.any(flagged):
        logger.warning(
            '%d near-degenerate level(s) excluded from the perturbative comparison',
            int(flagged.sum()),
        )
    return PerturbationReport(pairing, exact, predicted, errors, flagged)
