# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
"""
Ensembles of disorder realizations.

A realization r is a deterministic function of the configuration and r: it
draws a geometry from the seed derived for r, builds and decomposes the
trapped Hamiltonian and returns the ascending decay rates with the survival
curve. Realizations run concurrently; their results are reduced strictly in
the order r = 1, 2, …, R, whichever finishes first, so that averages do not
depend on the number of workers. Completed realizations can be stored in a
CheckpointStore so that an interrupted ensemble resumes where it stopped.
"""

import concurrent.futures
import dataclasses
import logging
import multiprocessing
import time

import numpy as np

from . import checkpoint, dynamics, hamiltonian, network, sink, spectra
from .network import GeometryKind, InvalidArgument

logger = logging.getLogger(__name__)


class RealizationFailure(Exception):
    """This exception is raised whenever a realization could not be computed.

    Example:
    f = RealizationFailure(cause, 17, 'decomposition', seed)
    assert f.cause is cause # original exception
    assert f.realization == 17 # realization label, counting from 1
    assert f.stage == 'decomposition' # geometry, hamiltonian, decomposition, survival
    """

    def __init__(self, cause, realization, stage, seed=None):
        super().__init__(
            'realization %d failed during %s (seed %s): %s'
            % (realization, stage, seed, cause)
        )
        self.cause = cause
        self.realization = realization
        self.stage = stage
        self.seed = seed


class EnsembleFailure(Exception):
    """At least one realization failed; `failures` lists them by realization."""

    def __init__(self, failures):
        self.failures = sorted(failures, key=lambda f: f.realization)
        super().__init__(
            '%d realization(s) failed; first: %s'
            % (len(self.failures), self.failures[0])
        )


def point_label(n_nodes, gamma):
    """Directory-friendly name of the (N, Γ) point."""
    return 'n%d_gamma%s' % (n_nodes, ('%g' % gamma).replace('+', ''))


@dataclasses.dataclass(frozen=True)
class EnsembleConfig:
    """Everything that determines an ensemble (one (N, Γ) point)."""

    n_nodes: int
    realizations: int
    gamma: float
    sigma: float = hamiltonian.DEFAULT_SIGMA
    geometry_kind: GeometryKind = GeometryKind.disordered3d
    master_seed: int = 0
    tau_min: float = dynamics.DEFAULT_TAU_MIN
    tau_max: float = dynamics.DEFAULT_TAU_MAX
    points_per_decade: int = dynamics.DEFAULT_POINTS_PER_DECADE
    delta_min: float = network.DEFAULT_DELTA_MIN
    spacing: float = 1.0
    exact_mode: bool = False
    keep_per_realization: bool = False

    def __post_init__(self):
        if self.n_nodes < 2:
            raise InvalidArgument('n must be at least 2, got %d' % self.n_nodes)
        if self.realizations < 1:
            raise InvalidArgument('r must be at least 1, got %d' % self.realizations)
        if not self.gamma > 0:
            raise InvalidArgument('gamma must be positive, got %r' % self.gamma)
        if not 0 <= self.master_seed < 2**64:
            raise InvalidArgument('seed must be an unsigned 64 bit integer')
        if self.delta_min < 0:
            raise InvalidArgument('delta_min must not be negative')
        if not self.spacing > 0:
            raise InvalidArgument('spacing must be positive')
        if not 0 < self.tau_min < self.tau_max:
            raise InvalidArgument('expected 0 < tau_min < tau_max')
        if self.points_per_decade < 1:
            raise InvalidArgument('points_per_decade must be positive')

    def time_grid(self):
        return dynamics.make_time_grid(
            self.n_nodes, self.gamma, self.tau_min, self.tau_max, self.points_per_decade
        )

    def realization_seed(self, realization):
        return network.realization_seed(self.master_seed, realization)

    def label(self):
        return point_label(self.n_nodes, self.gamma)

    def checkpoint_parameters(self):
        """Parameters besides size and seed which determine the rates."""
        return {
            'geometry': self.geometry_kind.value,
            'gamma': sink.FLOAT_FORMAT % self.gamma,
            'sigma': sink.FLOAT_FORMAT % self.sigma,
            'delta_min': sink.FLOAT_FORMAT % self.delta_min,
            'spacing': sink.FLOAT_FORMAT % self.spacing,
        }

    def as_dict(self):
        """Configuration as an ordered dict of config keys and values."""
        return {
            'geometry': self.geometry_kind.value,
            'n': self.n_nodes,
            'r': self.realizations,
            'gamma': float(self.gamma),
            'sigma': float(self.sigma),
            'seed': self.master_seed,
            'tau_min': float(self.tau_min),
            'tau_max': float(self.tau_max),
            'points_per_decade': self.points_per_decade,
            'delta_min': float(self.delta_min),
            'spacing': float(self.spacing),
            'exact_mode': self.exact_mode,
            'keep_per_realization': self.keep_per_realization,
        }


@dataclasses.dataclass(frozen=True)
class RealizationResult:
    realization: int
    seed: int
    gamma_r: float
    sorted_rates: np.ndarray
    survival: dynamics.SurvivalCurve
    exact_survival: dynamics.SurvivalCurve = None
    resample_count: int = 0


def _provenance(config, seed=None, realizations=1):
    return dynamics.Provenance(config.n_nodes, config.gamma, seed, realizations)


def _result_from_checkpoint(config, grid, entry):
    survival = dynamics.mean_survival_spectral(
        entry.sorted_rates, grid, _provenance(config, entry.seed)
    )
    return RealizationResult(
        realization=entry.realization,
        seed=entry.seed,
        gamma_r=entry.gamma_r,
        sorted_rates=entry.sorted_rates,
        survival=survival,
        resample_count=entry.resample_count,
    )


def build_geometry(config, seed):
    if config.geometry_kind == GeometryKind.chain1d:
        return network.generate_chain(config.n_nodes, config.spacing)
    return network.generate_configuration(config.n_nodes, seed, config.delta_min)


def run_realization(config, realization, grid=None):
    """Compute realization `realization` (1 <= realization <= R) of config.

    Failures are re-raised as RealizationFailure, naming the stage.
    """
    if not 1 <= realization <= config.realizations:
        raise InvalidArgument(
            'realization must be in 1..%d, got %d' % (config.realizations, realization)
        )
    grid = grid if grid is not None else config.time_grid()
    seed = config.realization_seed(realization)
    stage = 'geometry'
    try:
        geometry = build_geometry(config, seed)
        stage = 'hamiltonian'
        h0 = hamiltonian.build_h0(geometry, config.sigma)
        trap = hamiltonian.make_trap(h0, config.gamma, geometry.trap_nodes)
        h = hamiltonian.build_full_hamiltonian(h0, trap)
        stage = 'decomposition'
        spectrum = spectra.decompose_trapped(h)
        stage = 'survival'
        provenance = _provenance(config, seed)
        rates = spectrum.decay_rates
        survival = dynamics.mean_survival_spectral(rates, grid, provenance)
        exact = None
        if config.exact_mode:
            exact = dynamics.mean_survival_exact(
                spectrum, geometry.trap_nodes, grid, provenance
            )
    except (
        network.GeometryInfeasible,
        InvalidArgument,
        hamiltonian.DegenerateGeometry,
        spectra.ConvergenceFailure,
        spectra.NonPositiveDecayRate,
    ) as e:
        raise RealizationFailure(e, realization, stage, seed) from e
    logger.debug(
        'realization %d done, Γ_r = %g', realization, trap.realization_strength
    )
    return RealizationResult(
        realization=realization,
        seed=seed,
        gamma_r=trap.realization_strength,
        sorted_rates=rates,
        survival=survival,
        exact_survival=exact,
        resample_count=geometry.resample_count,
    )


@dataclasses.dataclass(frozen=True)
class EnsembleResult:
    config: EnsembleConfig
    avg_survival: dynamics.SurvivalCurve
    min_survival: np.ndarray
    max_survival: np.ndarray
    survival_stderr: np.ndarray
    avg_sorted_rates: np.ndarray
    jensen_curve: dynamics.SurvivalCurve
    mean_gamma_r: float
    avg_exact_survival: dynamics.SurvivalCurve = None
    min_exact_survival: np.ndarray = None
    max_exact_survival: np.ndarray = None
    per_realization: list = None
    metadata: dict = None


class _OrderedReduction:
    """Accumulate realization results in increasing realization order.

    Results may be added in any order; each is folded into the sums as soon
    as all realizations before it have been folded.
    """

    def __init__(self, config, grid):
        self.__config = config
        self.__grid = grid
        self.__pending = {}
        self.__next = 1
        size = len(grid)
        self.__sum = np.zeros(size)
        self.__sum_sq = np.zeros(size)
        self.__min = np.full(size, np.inf)
        self.__max = np.full(size, -np.inf)
        self.__rates = np.zeros(config.n_nodes)
        self.__gamma_r = 0.0
        self.__resampled = 0
        self.__exact = None
        self.__kept = []

    def add(self, result):
        self.__pending[result.realization] = result
        while self.__next in self.__pending:
            self.__fold(self.__pending.pop(self.__next))
            self.__next += 1

    @property
    def folded(self):
        return self.__next - 1

    def __fold(self, result):
        values = result.survival.values
        self.__sum += values
        self.__sum_sq += values * values
        self.__min = np.minimum(self.__min, values)
        self.__max = np.maximum(self.__max, values)
        self.__rates += result.sorted_rates
        self.__gamma_r += result.gamma_r
        self.__resampled += result.resample_count
        if result.exact_survival is not None:
            exact = result.exact_survival.values
            if self.__exact is None:
                self.__exact = [np.zeros_like(exact), exact.copy(), exact.copy()]
            self.__exact[0] += exact
            self.__exact[1] = np.minimum(self.__exact[1], exact)
            self.__exact[2] = np.maximum(self.__exact[2], exact)
        if self.__config.keep_per_realization:
            self.__kept.append(result)

    def result(self, metadata):
        count = self.folded
        if count != self.__config.realizations:
            raise RuntimeError(
                'only %d of %d realizations reduced'
                % (count, self.__config.realizations)
            )
        provenance = _provenance(self.__config, None, count)
        mean = self.__sum / count
        mean[0] = 1.0
        if count > 1:
            variance = np.maximum(self.__sum_sq / count - mean**2, 0.0)
            stderr = np.sqrt(variance / (count - 1))
        else:
            stderr = np.zeros_like(mean)
        rates = self.__rates / count
        exact = {}
        if self.__exact is not None:
            exact = dict(
                avg_exact_survival=dynamics.SurvivalCurve(
                    self.__grid,
                    self.__exact[0] / count,
                    dynamics.CurveKind.exact,
                    provenance,
                ),
                min_exact_survival=self.__exact[1],
                max_exact_survival=self.__exact[2],
            )
        metadata = dict(metadata)
        metadata['total_resample_count'] = self.__resampled
        metadata['mean_gamma_r'] = self.__gamma_r / count
        return EnsembleResult(
            config=self.__config,
            avg_survival=dynamics.SurvivalCurve(
                self.__grid, mean, dynamics.CurveKind.spectral, provenance
            ),
            min_survival=self.__min,
            max_survival=self.__max,
            survival_stderr=stderr,
            avg_sorted_rates=rates,
            jensen_curve=dynamics.jensen_lower_bound(rates, self.__grid, provenance),
            mean_gamma_r=self.__gamma_r / count,
            per_realization=self.__kept if self.__config.keep_per_realization else None,
            metadata=metadata,
            **exact
        )


class EnsembleRunner:
    """Compute all realizations of an ensemble concurrently.

    runner = EnsembleRunner(config, workers=4, checkpoint_dir='run/checkpoints')
    result = runner.run()

    :param config         EnsembleConfig to compute
    :param workers        number of worker threads (default: number of CPUs);
                          the eigensolvers release the GIL
    :param checkpoint_dir directory for per-realization checkpoints; None
                          disables checkpointing
    :param keep_old_checkpoints If existing checkpoints cannot be read or belong
        to another configuration and the flag is set, the run fails (default).
        If unset, the old checkpoints are removed and recomputed.
    """

    def __init__(
        self, config, workers=None, checkpoint_dir=None, keep_old_checkpoints=True
    ):
        self.__config = config
        self.__workers = workers or multiprocessing.cpu_count()
        if self.__workers < 1:
            raise InvalidArgument('at least one worker is required')
        self.__store = None
        if checkpoint_dir is not None:
            self.__store = checkpoint.CheckpointStore(
                checkpoint_dir, keep_old_checkpoints=keep_old_checkpoints
            )
            self.__store.check(
                config.n_nodes,
                config.realization_seed,
                config.checkpoint_parameters(),
            )
            completed = self.__store.completed()
            if completed:
                logger.info(
                    '%s: %d checkpoint(s) found, realizations %d to %d',
                    config.label(),
                    len(completed),
                    completed[0],
                    completed[-1],
                )
        self.__grid = config.time_grid()

    def run(self):
        """Compute (or resume) the ensemble and return its EnsembleResult.

        :raises EnsembleFailure if any realization failed; completed
            realizations are checkpointed nevertheless
        """
        start = time.monotonic()
        reduction = _OrderedReduction(self.__config, self.__grid)
        pending = self._get_pending_realizations(reduction)
        if pending:
            self._run_concurrently(pending, reduction)
        wall_time = time.monotonic() - start
        logger.info(
            'ensemble %s: %d realizations (%d resumed) in %.1f s',
            self.__config.label(),
            self.__config.realizations,
            self.__config.realizations - len(pending),
            wall_time,
        )
        metadata = dict(self.__config.as_dict())
        metadata['resumed_realizations'] = self.__config.realizations - len(pending)
        metadata['wall_time_s'] = wall_time
        return reduction.result(metadata)

    def _get_pending_realizations(self, reduction):
        """Fold checkpointed realizations and return the ones left to compute.

        Exact survival curves need the eigenvectors, which are not
        checkpointed; in exact mode every realization is computed.
        """
        pending = []
        for realization in range(1, self.__config.realizations + 1):
            if (
                self.__store is not None
                and not self.__config.exact_mode
                and self.__store.contains(realization)
            ):
                entry = self.__store.load(realization)
                reduction.add(
                    _result_from_checkpoint(self.__config, self.__grid, entry)
                )
            else:
                pending.append(realization)
        return pending

    def _run_concurrently(self, pending, reduction):
        """Run the pending realizations on a thread pool."""
        failures = []
        with concurrent.futures.ThreadPoolExecutor(
            max_workers=self.__workers
        ) as executor:
            jobs = {
                executor.submit(run_realization, self.__config, r, self.__grid): r
                for r in pending
            }
            for future in concurrent.futures.as_completed(jobs):
                if future.cancelled():
                    continue
                failure = self._handle_job_output(future, reduction)
                if failure:
                    failures.append(failure)
                    # running realizations finish and are checkpointed
                    for other in jobs:
                        other.cancel()
        if failures:
            raise EnsembleFailure(failures)

    def _handle_job_output(self, future, reduction):
        """Fold a finished realization and checkpoint it; return the failure
        if the realization failed."""
        try:
            result = future.result()
        except RealizationFailure as e:
            logger.error('%s', e)
            return e
        if self.__store is not None:
            self.__store.save(
                checkpoint.CheckpointEntry(
                    realization=result.realization,
                    seed=result.seed,
                    gamma_r=result.gamma_r,
                    sorted_rates=result.sorted_rates,
                    resample_count=result.resample_count,
                    parameters=self.__config.checkpoint_parameters(),
                )
            )
        reduction.add(result)
        return None


def run_ensemble(config, workers=None, checkpoint_dir=None, keep_old_checkpoints=True):
    """Compute the ensemble average of config; see EnsembleRunner."""
    return EnsembleRunner(config, workers, checkpoint_dir, keep_old_checkpoints).run()
