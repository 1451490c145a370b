# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Time-domain observables of the trapped network.

All survival curves live on a TimeGrid, which starts at t = 0 and continues
with points equally spaced in log τ, τ = tΓ/N³ being the rescaled time (Γ is
the dimensionless base strength, not the realization strength Γ_r).

Curves come in five kinds:

exact
    Π_M(t) = 1/(N-M) Σ_{j,k ∉ traps} π_kj(t), summing transition
    probabilities obtained from the full propagator. Population returning
    from the trap nodes makes it rise at times.
exact_norm
    The same sum with k running over the trap nodes too; non-increasing.
spectral
    Π(t) = 1/N Σ_l exp(-2γ_l t); normalized to Π(0) = 1 for every N.
spectral_trap_excluded
    The same sum normalized by 1/(N-M), the approximation of Π_M(t) for
    intermediate and long times.
jensen_bound
    1/N Σ_l exp(-2t⟨γ_l⟩_R), a lower bound of the ensemble average of the
    spectral curves.
"""

import dataclasses
import enum

import numpy as np

from .network import InvalidArgument, check_index

DEFAULT_TAU_MIN = 1e-4
DEFAULT_TAU_MAX = 1e2
DEFAULT_POINTS_PER_DECADE = 200


class CurveKind(enum.Enum):
    exact = 'exact'
    exact_norm = 'exact_norm'
    spectral = 'spectral'
    spectral_trap_excluded = 'spectral_trap_excluded'
    jensen_bound = 'jensen_bound'


@dataclasses.dataclass(frozen=True)
class TimeGrid:
    """Times t (starting with 0) and the aligned rescaled times τ."""

    points: np.ndarray
    rescaled: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        rescaled = np.asarray(self.rescaled, dtype=float)
        if points.shape != rescaled.shape or points.ndim != 1 or len(points) < 2:
            raise InvalidArgument('time grid needs at least two aligned points')
        if points[0] != 0 or np.any(np.diff(points) <= 0):
            raise InvalidArgument('time grid must start at 0 and increase strictly')
        points.setflags(write=False)
        rescaled.setflags(write=False)
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'rescaled', rescaled)

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_times(cls, times, n_nodes, gamma):
        """Grid of the given positive times, prefixed with t = 0."""
        points = np.concatenate(([0.0], np.asarray(times, dtype=float)))
        return cls(points, points * gamma / n_nodes**3)


def make_time_grid(
    n_nodes,
    gamma,
    tau_min=DEFAULT_TAU_MIN,
    tau_max=DEFAULT_TAU_MAX,
    points_per_decade=DEFAULT_POINTS_PER_DECADE,
):
    """Return t = 0 followed by log-spaced rescaled times in [tau_min, tau_max]."""
    if not 0 < tau_min < tau_max:
        raise InvalidArgument('expected 0 < tau_min < tau_max')
    if points_per_decade < 1:
        raise InvalidArgument('points_per_decade must be positive')
    if not gamma > 0:
        raise InvalidArgument('Γ must be positive')
    decades = np.log10(tau_max) - np.log10(tau_min)
    count = int(round(decades * points_per_decade)) + 1
    tau = np.logspace(np.log10(tau_min), np.log10(tau_max), max(count, 2))
    rescaled = np.concatenate(([0.0], tau))
    return TimeGrid(rescaled * n_nodes**3 / gamma, rescaled)


@dataclasses.dataclass(frozen=True)
class Provenance:
    """Where a curve came from; `seed` is None for ensemble averages."""

    n_nodes: int
    gamma: float
    seed: int = None
    realizations: int = 1


@dataclasses.dataclass(frozen=True)
class SurvivalCurve:
    grid: TimeGrid
    values: np.ndarray
    kind: CurveKind
    provenance: Provenance = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.points.shape:
            raise InvalidArgument('one survival value per grid point expected')
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def is_monotone(self, slack=1e-12):
        """Whether the curve does not increase by more than slack anywhere."""
        return bool(np.all(np.diff(self.values) <= slack))

    def in_window(self, window, rescaled=True):
        """Boolean mask of positive grid points inside [lo, hi]."""
        lo, hi = window
        axis = self.grid.rescaled if rescaled else self.grid.points
        return (axis >= lo) & (axis <= hi) & (self.grid.points > 0)


def propagator(spec, t):
    """U(t) = Σ_l exp(-iE_l t) |Ψ_l⟩⟨Ψ̃_l|."""
    if t < 0:
        raise InvalidArgument('time must not be negative')
    if t == 0:
        return np.eye(spec.dim, dtype=complex)
    phases = np.exp(-1j * spec.eigenvalues * t)
    return (spec.right_vectors * phases) @ spec.left_vectors


def transition_probability(spec, j, k, t):
    """π_kj(t) = |⟨k|U(t)|j⟩|² for a scalar time or an array of times."""
    j = check_index(j, spec.dim)
    k = check_index(k, spec.dim)
    times = np.asarray(t, dtype=float)
    if np.any(times < 0):
        raise InvalidArgument('time must not be negative')
    weights = spec.right_vectors[k, :] * spec.left_vectors[:, j]
    phases = np.exp(-1j * np.multiply.outer(times, spec.eigenvalues))
    amplitude = phases @ weights
    # U(0) is the identity; avoid the roundoff of the biorthonormal basis there
    amplitude = np.where(times == 0, float(j == k), amplitude)
    result = np.abs(amplitude) ** 2
    return float(result) if result.ndim == 0 else result


def _non_trap_mask(spec, traps):
    traps = {check_index(m, spec.dim) for m in traps}
    if not traps or len(traps) >= spec.dim:
        raise InvalidArgument('need at least one trap and one non-trap node')
    return np.array([i not in traps for i in range(spec.dim)])


def mean_survival_exact(spec, traps, grid, provenance=None):
    """Π_M(t) from the full propagator at every grid point."""
    keep = _non_trap_mask(spec, traps)
    values = np.empty(len(grid))
    for i, t in enumerate(grid.points):
        u = propagator(spec, t)[np.ix_(keep, keep)]
        values[i] = np.sum(np.abs(u) ** 2) / keep.sum()
    return SurvivalCurve(grid, values, CurveKind.exact, provenance)


def mean_norm_exact(spec, traps, grid, provenance=None):
    """1/(N-M) Σ_{j ∉ traps} Σ_k π_kj(t), the population left anywhere,
    trap nodes included, after starting on a non-trap node.

    Unlike Π_M(t), which drops the population sitting on the trap and may rise
    when it flows back, this norm never increases.
    """
    keep = _non_trap_mask(spec, traps)
    values = np.empty(len(grid))
    for i, t in enumerate(grid.points):
        u = propagator(spec, t)[:, keep]
        values[i] = np.sum(np.abs(u) ** 2) / keep.sum()
    return SurvivalCurve(grid, values, CurveKind.exact_norm, provenance)


def _exponential_sum(rates, grid, normalization):
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise InvalidArgument('decay rates must not be negative')
    return np.exp(-2.0 * np.multiply.outer(grid.points, rates)).sum(axis=1) / (
        normalization
    )


def mean_survival_spectral(rates, grid, provenance=None):
    """Π(t) = 1/N Σ_l exp(-2γ_l t)."""
    values = _exponential_sum(rates, grid, len(rates))
    values[0] = 1.0
    return SurvivalCurve(grid, values, CurveKind.spectral, provenance)


def mean_survival_trap_excluded(rates, grid, n_traps=1, provenance=None):
    """Π_M(t) ≈ 1/(N-M) Σ_l exp(-2γ_l t); exceeds 1 at short times."""
    if not 0 < n_traps < len(rates):
        raise InvalidArgument('need 0 < M < N')
    values = _exponential_sum(rates, grid, len(rates) - n_traps)
    return SurvivalCurve(grid, values, CurveKind.spectral_trap_excluded, provenance)


def jensen_lower_bound(avg_rates, grid, provenance=None):
    """1/N Σ_l exp(-2t⟨γ_l⟩_R) from the index-wise averaged sorted rates."""
    values = _exponential_sum(avg_rates, grid, len(avg_rates))
    values[0] = 1.0
    return SurvivalCurve(grid, values, CurveKind.jensen_bound, provenance)
