# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""Post-processing of survival curves and decay-rate spectra.

Power laws are fitted as straight lines in double-logarithmic coordinates.
The survival exponent η is stored positive, i.e. a fit describes Π ∼ t^(-η);
fits of other quantities (rates against their index, densities against the
rate) use the same machinery and report their slope as `-exponent`.

The density ρ(γ) = dx/dγ of the index fraction x = l/N over the decay rates
comes from the sorted spectrum, either as a histogram over log-spaced bins or
by differentiating the inverse function x(γ) on the same bins. Its Laplace
transform ∫ρ(γ)exp(-2γt)dγ reproduces the spectral survival curve, which
laplace_consistency checks.
"""

import dataclasses
import enum
import logging

import numpy as np
from scipy import stats

from . import dynamics, hamiltonian, network, spectra
from .network import InvalidArgument

logger = logging.getLogger(__name__)

MIN_FIT_POINTS = 10
#: fraction of rates dropped at either end of the spectrum before binning
TAIL_FRACTION = 0.02
#: index-fraction window (x_lo, x_hi] over which γ_l grows as a power of l
GROWTH_WINDOW = (0.02, 1.0 / 3.0)
#: points of the moving fit used to compute local slopes
LOCAL_SLOPE_POINTS = 5
#: relative variation of local slopes tolerated within an automatic window
AUTO_WINDOW_TOLERANCE = 0.2
#: default fit window in rescaled time τ, inside the power-law regime of the
#: disordered networks
DEFAULT_FIT_WINDOW = (1e-3, 1e-2)
#: resolution of densities restricted to a rate window
WINDOW_BINS_PER_DECADE = 10


class WindowTooNarrow(ValueError):
    """Fewer than MIN_FIT_POINTS points fall into a fit window."""

    def __init__(self, window, n_points):
        self.window = window
        self.n_points = n_points
        super().__init__(
            'fit window [%g, %g] contains %d point(s), at least %d needed'
            % (window[0], window[1], n_points, MIN_FIT_POINTS)
        )


class NonPositiveValues(ValueError):
    """Values to fit in log-log coordinates are not all positive."""


class InsufficientPoints(ValueError):
    """A size scaling needs at least two distinct system sizes."""


class InsufficientData(ValueError):
    """A density needs at least two distinct positive rates."""


@dataclasses.dataclass(frozen=True)
class PowerLawFit:
    """y ≈ amplitude · x^(-exponent) over window, fitted in log-log.

    `amplitude` is exp(intercept); `residual` is the RMS of the residuals of
    log y; `exponent_err` the standard error of the slope.
    """

    exponent: float
    amplitude: float
    window: tuple
    residual: float
    n_points: int
    exponent_err: float = 0.0

    def __post_init__(self):
        if not self.window[0] < self.window[1]:
            raise InvalidArgument('fit window must satisfy lo < hi')

    @property
    def slope(self):
        return -self.exponent


def fit_log_log(x, y, window=None):
    """Fit log y = log amplitude + slope · log x; return a PowerLawFit.

    `window` defaults to the range of x and is only reported.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is None:
        window = (float(x.min()), float(x.max())) if len(x) else (0.0, 0.0)
    if len(x) < MIN_FIT_POINTS:
        raise WindowTooNarrow(window, len(x))
    if np.any(y <= 0) or np.any(x <= 0):
        raise NonPositiveValues('power laws can only be fitted to positive values')
    log_x, log_y = np.log(x), np.log(y)
    fit = stats.linregress(log_x, log_y)
    residuals = log_y - (fit.intercept + fit.slope * log_x)
    return PowerLawFit(
        exponent=-float(fit.slope),
        amplitude=float(np.exp(fit.intercept)),
        window=(float(window[0]), float(window[1])),
        residual=float(np.sqrt(np.mean(residuals**2))),
        n_points=len(x),
        exponent_err=float(fit.stderr),
    )


def fit_power_law(curve, window, rescaled=True):
    """Fit ⟨Π(t)⟩ ∼ t^(-η) over window.

    The window is given in rescaled time τ unless rescaled is False. The
    exponent does not depend on the choice; the amplitude refers to t.
    """
    mask = curve.in_window(window, rescaled)
    if mask.sum() < MIN_FIT_POINTS:
        raise WindowTooNarrow(window, int(mask.sum()))
    return fit_log_log(curve.grid.points[mask], curve.values[mask], window)


def local_slopes(x, y, points=LOCAL_SLOPE_POINTS):
    """Slopes of moving least-squares fits over `points` neighbours in log-log.

    The result is aligned with x; the borders repeat the nearest full fit.
    """
    log_x, log_y = np.log(x), np.log(y)
    half = points // 2
    slopes = np.empty(len(x))
    for i in range(len(x)):
        lo = min(max(i - half, 0), max(len(x) - points, 0))
        sl = slice(lo, lo + points)
        slopes[i] = np.polyfit(log_x[sl], log_y[sl], 1)[0]
    return slopes


def auto_fit_window(curve, rescaled=True, tolerance=AUTO_WINDOW_TOLERANCE):
    """Longest window of decaying points whose local slopes vary by less than
    tolerance (relative to their mean).

    Returns the window on the τ axis (or t axis if rescaled is False).
    """
    positive = (curve.grid.points > 0) & (curve.values > 0)
    x = curve.grid.points[positive]
    axis = (curve.grid.rescaled if rescaled else curve.grid.points)[positive]
    if len(x) < MIN_FIT_POINTS:
        raise WindowTooNarrow((float('nan'), float('nan')), len(x))
    slopes = local_slopes(x, curve.values[positive])
    best = (0, 0)
    for start in range(len(slopes)):
        if slopes[start] >= 0:
            continue
        lo = hi = slopes[start]
        total = 0.0
        stop = start
        for stop in range(start, len(slopes)):
            s = slopes[stop]
            if s >= 0:
                stop -= 1
                break
            lo, hi = min(lo, s), max(hi, s)
            total += s
            mean = total / (stop - start + 1)
            if (hi - lo) > tolerance * abs(mean):
                stop -= 1
                break
        if stop - start > best[1] - best[0]:
            best = (start, stop)
        if best[1] - best[0] + 1 >= len(slopes) - start:
            break
    if best[1] - best[0] + 1 < MIN_FIT_POINTS:
        raise WindowTooNarrow(
            (float(axis[best[0]]), float(axis[best[1]])), best[1] - best[0] + 1
        )
    window = (float(axis[best[0]]), float(axis[best[1]]))
    logger.debug('automatic fit window [%g, %g]', *window)
    return window


@dataclasses.dataclass(frozen=True)
class ScalingReport:
    """η(N) = η₀ N^μ at fixed Γ."""

    points: tuple
    eta0: float
    mu: float
    gamma_value: float


def size_scaling(points, gamma_value=float('nan')):
    """Fit η(N) = η₀ N^μ to (N, η) pairs.

    Two sizes give μ = [ln η(N₂) - ln η(N₁)] / [ln N₂ - ln N₁] exactly; more
    sizes are fitted by least squares in (ln N, ln η).
    """
    points = tuple((int(n), float(eta)) for n, eta in points)
    sizes = sorted({n for n, _ in points})
    if len(sizes) < 2:
        raise InsufficientPoints('size scaling needs at least two distinct N')
    if any(eta <= 0 for _, eta in points) or any(n <= 0 for n, _ in points):
        raise NonPositiveValues('exponents and sizes must be positive')
    if len(points) == 2:
        (n1, eta1), (n2, eta2) = points
        mu = (np.log(eta2) - np.log(eta1)) / (np.log(n2) - np.log(n1))
        eta0 = eta1 / n1**mu
    else:
        log_n = np.log([n for n, _ in points])
        log_eta = np.log([eta for _, eta in points])
        fit = stats.linregress(log_n, log_eta)
        mu, eta0 = fit.slope, np.exp(fit.intercept)
    return ScalingReport(points, float(eta0), float(mu), gamma_value)


@dataclasses.dataclass(frozen=True)
class DensityEstimate:
    """Piecewise constant density ρ(γ) of the index fraction over the rates.

    Bin b spans [bin_edges[b], bin_edges[b + 1]] and carries the index
    fraction `weights[b]`; `densities` is weights divided by the bin width. A
    bin of zero width is a point mass (infinite density).
    """

    bin_edges: np.ndarray
    weights: np.ndarray
    method: str = 'histogram'

    @property
    def bin_centers(self):
        return np.sqrt(self.bin_edges[:-1] * self.bin_edges[1:])

    @property
    def widths(self):
        return np.diff(self.bin_edges)

    @property
    def densities(self):
        with np.errstate(divide='ignore', invalid='ignore'):
            return np.where(self.widths > 0, self.weights / self.widths, np.inf)

    @property
    def normalization(self):
        """∫ρ dγ, i.e. Σ ρ·Δγ."""
        return float(self.weights.sum())

    @classmethod
    def from_point_masses(cls, rates):
        """Density Σ_l δ(γ - γ_l)/N, the limit of infinitely narrow bins."""
        rates = np.sort(np.asarray(rates, dtype=float))
        edges = np.repeat(rates, 2)
        # consecutive bins [γ_l, γ_l] separated by empty bins [γ_l, γ_l+1]
        weights = np.zeros(len(edges) - 1)
        weights[::2] = 1.0 / len(rates)
        return cls(edges, weights, 'point_masses')


def _kept_rates(sorted_rates, tail_fraction):
    rates = np.asarray(sorted_rates, dtype=float)
    if np.any(np.diff(rates) < 0):
        raise InvalidArgument('rates must be sorted ascending')
    cut = int(np.floor(tail_fraction * len(rates)))
    kept = rates[cut : len(rates) - cut]
    kept = kept[kept > 0]
    if len(np.unique(kept)) < 2:
        raise InsufficientData('a density needs at least two distinct positive rates')
    return kept


def default_bin_count(n_rates):
    return max(10, n_rates // 25)


def estimate_rate_density(
    sorted_rates, n_bins=None, method='histogram', tail_fraction=TAIL_FRACTION
):
    """Estimate ρ(γ) = dx/dγ from ascending rates.

    method is 'histogram' (count rates per log-spaced bin) or 'inverse'
    (finite differences of the interpolated inverse function x(γ) over the
    same bins). The extreme tail_fraction of rates at either end is dropped;
    the result is normalized to unit integral.
    """
    kept = _kept_rates(sorted_rates, tail_fraction)
    if n_bins is None:
        n_bins = default_bin_count(len(sorted_rates))
    if n_bins < 1:
        raise InvalidArgument('at least one bin is required')
    edges = np.logspace(np.log10(kept[0]), np.log10(kept[-1]), n_bins + 1)
    # the logspace end points are not guaranteed to be bit-identical
    edges[0], edges[-1] = kept[0], kept[-1]
    if method == 'histogram':
        counts, _ = np.histogram(kept, bins=edges)
        weights = counts / len(kept)
    elif method == 'inverse':
        fraction = (np.arange(len(kept)) + 0.5) / len(kept)
        x_at_edges = np.interp(edges, kept, fraction, left=0.0, right=1.0)
        x_at_edges[0], x_at_edges[-1] = 0.0, 1.0
        weights = np.diff(x_at_edges)
    else:
        raise InvalidArgument('unknown density method: %s' % method)
    return DensityEstimate(edges, weights.astype(float), method)


def windowed_rate_density(rates, window, bins_per_decade=WINDOW_BINS_PER_DECADE):
    """Histogram ρ(γ) over log-spaced bins covering the rate window only.

    `rates` need not be sorted; pooling the spectra of all realizations gives
    enough rates inside a window of a decade or two. Weights are fractions of
    all rates, so the bins keep the normalization of the full spectrum. At
    least MIN_FIT_POINTS bins are used.
    """
    lo, hi = window
    if not 0 < lo < hi:
        raise InvalidArgument('rate window must satisfy 0 < lo < hi')
    if bins_per_decade <= 0:
        raise InvalidArgument('bins_per_decade must be positive')
    rates = np.asarray(rates, dtype=float)
    n_bins = max(MIN_FIT_POINTS, int(np.ceil(np.log10(hi / lo) * bins_per_decade)))
    edges = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
    edges[0], edges[-1] = lo, hi
    counts, _ = np.histogram(rates, bins=edges)
    if np.count_nonzero(counts) < 2:
        raise InsufficientData(
            '%d rate(s) in [%g, %g], a density needs two bins'
            % (counts.sum(), lo, hi)
        )
    return DensityEstimate(edges, counts / len(rates), 'windowed')


def density_slope(density, window=None):
    """Fit ρ(γ) ∼ γ^slope over the bins whose centres lie in window.

    Empty bins are left out. Returns a PowerLawFit; its `slope` is the
    density exponent.
    """
    centers = density.bin_centers
    rho = density.densities
    mask = (rho > 0) & np.isfinite(rho)
    if window is not None:
        mask &= (centers >= window[0]) & (centers <= window[1])
    return fit_log_log(
        centers[mask],
        rho[mask],
        window if window is not None else None,
    )


def rate_growth_fit(sorted_rates, fraction_window=GROWTH_WINDOW):
    """Fit γ_l ∼ l^slope for l/N inside fraction_window (exclusive lower end).

    A slope s implies a survival decay Π ∼ t^(-1/s).
    """
    rates = np.asarray(sorted_rates, dtype=float)
    l = np.arange(1, len(rates) + 1)
    x = l / len(rates)
    mask = (x > fraction_window[0]) & (x <= fraction_window[1]) & (rates > 0)
    return fit_log_log(l[mask], rates[mask], fraction_window)


def rate_window(sorted_rates, fraction_window=GROWTH_WINDOW):
    """Range of rates whose index fraction lies in fraction_window."""
    rates = np.asarray(sorted_rates, dtype=float)
    x = np.arange(1, len(rates) + 1) / len(rates)
    inside = rates[(x > fraction_window[0]) & (x <= fraction_window[1])]
    return float(inside.min()), float(inside.max())


def matched_rate_window(fit):
    """Rates [1/(2 t_hi), 1/(2 t_lo)] dominating Π over the time window of fit.

    The fit window has to be on the t axis.
    """
    t_lo, t_hi = fit.window
    return 1.0 / (2.0 * t_hi), 1.0 / (2.0 * t_lo)


def laplace_transform(density, times):
    """∫ρ(γ)exp(-2γt)dγ, integrating the exponential exactly over each bin."""
    times = np.asarray(times, dtype=float)
    lo = density.bin_edges[:-1]
    widths = density.widths
    two_t = 2.0 * times[:, np.newaxis]
    decay = np.exp(-two_t * lo)
    with np.errstate(divide='ignore', invalid='ignore'):
        # mean of exp(-2γt) over a bin; 1 for t = 0 or zero width
        bin_mean = np.where(
            (two_t * widths) > 0,
            -np.expm1(-two_t * widths) / (two_t * widths),
            1.0,
        )
    return (decay * bin_mean) @ density.weights


def laplace_consistency(density, curve, window=None, rescaled=True):
    """Maximum relative deviation |L{ρ}(t) - Π(t)| / Π(t) over window.

    Without a window all positive grid points with Π > 0 are compared.
    """
    if window is None:
        mask = (curve.grid.points > 0) & (curve.values > 0)
    else:
        mask = curve.in_window(window, rescaled) & (curve.values > 0)
    if not mask.any():
        raise WindowTooNarrow(window or (0.0, 0.0), 0)
    times = curve.grid.points[mask]
    transformed = laplace_transform(density, times)
    return float(np.max(np.abs(transformed - curve.values[mask]) / curve.values[mask]))


#: below this size the chain benchmark doubles its tolerances
CHAIN_SMALL_N = 30
CHAIN_BENCH_BINS = 30


class CheckStatus(enum.Enum):
    passed = 'PASS'
    failed = 'FAIL'
    skipped = 'SKIP'


@dataclasses.dataclass(frozen=True)
class BenchCheck:
    name: str
    value: float
    expected: float
    tolerance: float
    status: CheckStatus
    note: str = ''

    @classmethod
    def judge(cls, name, value, expected, tolerance):
        status = (
            CheckStatus.passed
            if abs(value - expected) <= tolerance
            else CheckStatus.failed
        )
        return cls(name, value, expected, tolerance, status)

    @classmethod
    def skip(cls, name, expected, tolerance, note):
        return cls(name, float('nan'), expected, tolerance, CheckStatus.skipped, note)

    def format(self):
        line = '%-14s %-4s value %.4g, expected %g ± %g' % (
            self.name,
            self.status.value,
            self.value,
            self.expected,
            self.tolerance,
        )
        return line + (' (%s)' % self.note if self.note else '')


@dataclasses.dataclass(frozen=True)
class ChainBenchReport:
    n_nodes: int
    gamma: float
    small_n: bool
    window: tuple
    checks: tuple

    @property
    def failed(self):
        return any(c.status == CheckStatus.failed for c in self.checks)

    def check(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def format(self):
        lines = [
            'chain benchmark, n = %d, Γ = %g, fit window τ ∈ [%.3g, %.3g]%s'
            % (
                self.n_nodes,
                self.gamma,
                self.window[0],
                self.window[1],
                ', small n: tolerances doubled' if self.small_n else '',
            )
        ]
        lines.extend(c.format() for c in self.checks)
        lines.append('result: %s' % ('FAIL' if self.failed else 'PASS'))
        return '\n'.join(lines)


def chain_fit_window(n_nodes):
    """Rescaled-time window in which the trapped chain decays as t^(-1/2).

    It starts once the slowest resolved modes (l ≳ 3) have decayed and ends
    before the lowest mode dominates.
    """
    lo = 9.0 / (np.pi**2 * n_nodes**2)
    return lo, max(1.0 / (36.0 * np.pi**2), 30.0 * lo)


def chain_benchmark(n_nodes, gamma, spacing=1.0):
    """Run the linear chain with a trap at one end and compare its survival
    exponent, the growth of its decay rates and their density with
    Π ∼ t^(-1/2), γ_l ∼ l² and ρ ∼ γ^(-1/2)."""
    if n_nodes < 10:
        raise InvalidArgument('the chain benchmark needs n >= 10')
    small_n = n_nodes < CHAIN_SMALL_N
    widen = 2.0 if small_n else 1.0
    if small_n:
        logger.warning('chain of %d nodes is small, tolerances doubled', n_nodes)
    geometry = network.generate_chain(n_nodes, spacing)
    h0 = hamiltonian.build_h0_chain(geometry)
    trap = hamiltonian.make_trap(h0, gamma, geometry.trap_nodes)
    spectrum = spectra.decompose_trapped(hamiltonian.build_full_hamiltonian(h0, trap))
    window = chain_fit_window(n_nodes)
    grid = dynamics.make_time_grid(n_nodes, gamma, window[0] / 2.0, window[1] * 2.0)
    curve = dynamics.mean_survival_spectral(
        spectrum.decay_rates, grid, dynamics.Provenance(n_nodes, gamma)
    )
    rates = spectrum.decay_rates
    checks = []

    def attempt(name, expected, tolerance, compute):
        try:
            checks.append(BenchCheck.judge(name, compute(), expected, tolerance))
        except (WindowTooNarrow, InsufficientData) as e:
            checks.append(BenchCheck.skip(name, expected, tolerance, str(e)))

    attempt('eta', 0.5, 0.1 * widen, lambda: fit_power_law(curve, window).exponent)
    attempt('rate_growth', 2.0, 0.2 * widen, lambda: rate_growth_fit(rates).slope)

    def rate_density_slope():
        density = estimate_rate_density(rates, CHAIN_BENCH_BINS, 'inverse')
        return density_slope(density, rate_window(rates)).slope

    attempt('density_slope', -0.5, 0.15 * widen, rate_density_slope)
    return ChainBenchReport(n_nodes, gamma, small_n, window, tuple(checks))
