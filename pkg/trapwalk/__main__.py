# (c) 2024 The trapwalk developers
# This code is licenced under the terms of the LGPL-3+, see the file COPYING for
# more details.
import argparse
import dataclasses
import datetime
import logging
import multiprocessing
import os
import sys

import numpy as np

from . import (
    analysis,
    checkpoint,
    config,
    dynamics,
    ensemble,
    hamiltonian,
    network,
    sink,
    spectra,
    VERSION,
)
from .network import InvalidArgument

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_COMPUTE = 2
EXIT_BENCH_FAILED = 3

CHECKPOINT_DIRECTORY = 'checkpoints'
REALIZATION_DIRECTORY = 'realizations'


class HelpfulCmdParser(argparse.ArgumentParser):
    """This variant of arg parser always prints the full help whenever an error
    occurs."""

    def error(self, message):
        sys.stderr.write('error: %s\n' % message)
        self.print_help()
        sys.exit(EXIT_VALIDATION)


def window_argument(value):
    """Parse lo:hi, or auto (None) for the automatic window."""
    try:
        return config.parse_window(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def artifact_schemas():
    """Describe the tables written by trapwalk, for the help epilog."""
    lines = ['output files (comma separated, `#` lines carry metadata):']
    for artifact, header in sink.HEADERS.items():
        lines.append('  %-22s %s' % (artifact.value, ','.join(header)))
    lines.append('  %-22s key = value lines' % sink.Artifact.metadata.value)
    lines.append('  %-22s key = value lines' % sink.Artifact.manifest.value)
    lines.append(
        '  %-22s configuration of one sweep point'
        % sink.Artifact.resolved_config.value
    )
    return '\n'.join(lines)


def now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')


class Main:
    """This class parses command line arguments and dispatches to the
    subcommands.

    Only the run method needs to be called.
    """

    def _parse_args(self, args):
        """Parse command line arguments and return option instance."""
        epilog = 'trapwalk %s\n\n%s' % (VERSION, artifact_schemas())
        description = (
            'trapwalk computes the survival probability of coherent excitons '
            'on disordered networks with long-range couplings and a trap, '
            'averaged over ensembles of random node configurations, and '
            'analyses its power-law decay.'
        )
        cmd = HelpfulCmdParser(
            prog='trapwalk',
            epilog=epilog,
            description=description,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        cmd.add_argument(
            '-v',
            '--verbose',
            action='store_true',
            help='log debugging output, e.g. every finished realization',
        )
        cmd.add_argument(
            '-q', '--quiet', action='store_true', help='only log warnings and errors'
        )
        commands = cmd.add_subparsers(dest='command', metavar='COMMAND')
        commands.required = True

        run = commands.add_parser(
            'run',
            help='compute the ensembles of a configuration',
            epilog=artifact_schemas(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        run.add_argument('--config', required=True, help='configuration file')
        run.add_argument(
            '--out',
            required=True,
            help='output directory; a sweep writes one subdirectory per (n, gamma)',
        )
        run.add_argument(
            '--workers',
            type=int,
            default=None,
            help='number of concurrent realizations (default: number of CPUs)',
        )
        run.add_argument(
            '--resume',
            action='store_true',
            help='continue an interrupted run in a non-empty output directory',
        )
        run.add_argument(
            '--exact',
            action='store_true',
            help='also compute the exact survival from the eigenvectors',
        )
        run.add_argument(
            '-n',
            action='store_true',
            dest='discard_checkpoints',
            help=(
                'Remove unreadable or stale checkpoints and compute those '
                'realizations again. If this option is unset, trapwalk will '
                'simply fail when a checkpoint does not fit the configuration.'
            ),
        )

        analyze = commands.add_parser(
            'analyze',
            help='fit power laws to finished runs',
            epilog=artifact_schemas(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        analyze.add_argument('runs', nargs='+', help='run directories')
        analyze.add_argument(
            '--windows',
            type=window_argument,
            action='append',
            metavar='LO:HI',
            help=(
                'fit window in rescaled time, or auto; may be repeated '
                '(default: the fit_window of the run)'
            ),
        )
        analyze.add_argument(
            '--out', default='.', help='directory for the analysis tables'
        )

        bench = commands.add_parser(
            'chain-bench',
            help='check the trapped linear chain against its known exponents',
        )
        bench.add_argument('--n', type=int, default=100, dest='n_nodes')
        bench.add_argument('--gamma', type=float, default=1e-3)
        bench.add_argument('--spacing', type=float, default=1.0)

        spectrum = commands.add_parser(
            'spectrum',
            help=(
                'write configuration, trapped spectrum and survival of a '
                'single realization'
            ),
        )
        spectrum.add_argument('--config', required=True, help='configuration file')
        spectrum.add_argument('--out', required=True, help='output directory')
        spectrum.add_argument(
            '--realization',
            type=int,
            default=1,
            help='realization to dump, counting from 1 (default 1)',
        )
        spectrum.add_argument(
            '--exact',
            action='store_true',
            help='write the exact survival instead of the spectral one',
        )
        return cmd.parse_args(args)

    def exit(self, text, status):
        """Exit function.

        Could be used to register any clean up action.
        """
        sys.stderr.write(text)
        if not text.endswith('\n'):
            sys.stderr.write('\n')
        sys.exit(status)

    def fail(self, error, text, status):
        """Exit with text, or re-raise the error if DEBUG=1 is set."""
        if 'DEBUG' in os.environ and os.environ['DEBUG'] == '1':
            raise error
        self.exit(text, status)

    def run(self, args):
        options = self._parse_args(args[1:])
        level = logging.INFO
        if options.verbose:
            level = logging.DEBUG
        elif options.quiet:
            level = logging.WARNING
        logging.basicConfig(level=level, format='%(levelname)s: %(message)s')
        handler = {
            'run': self.cmd_run,
            'analyze': self.cmd_analyze,
            'chain-bench': self.cmd_chain_bench,
            'spectrum': self.cmd_spectrum,
        }[options.command]
        return handler(options)

    def load_config(self, path):
        try:
            return config.load_config(path)
        except config.ConfigError as e:
            self.fail(e, 'Error in configuration %s: %s' % (path, e), EXIT_VALIDATION)

    ############################################################
    # run

    def cmd_run(self, options):
        run_config = self.load_config(options.config)
        points = run_config.points
        if options.exact:
            points = tuple(dataclasses.replace(p, exact_mode=True) for p in points)
        out = options.out
        if len(points) == 1:
            directories = [(points[0], out)]
        else:
            directories = [(p, os.path.join(out, p.label())) for p in points]
        if all(is_complete(p, d) for p, d in directories):
            logger.info('%s is complete, nothing to compute', out)
            return 0
        if os.path.isdir(out) and os.listdir(out) and not options.resume:
            self.exit(
                'Error: output directory %s is not empty; pass --resume to '
                'continue an interrupted run.' % out,
                EXIT_VALIDATION,
            )
        os.makedirs(out, exist_ok=True)
        manifest = {
            'config': os.path.abspath(options.config),
            'out': os.path.abspath(out),
            'version': VERSION,
            'points': ' '.join(p.label() for p in points),
            'started': now(),
        }
        sink.write_key_values(sink.Artifact.manifest.path(out), manifest)
        for point, directory in directories:
            if is_complete(point, directory):
                logger.info('%s is complete, skipping', directory)
                continue
            os.makedirs(directory, exist_ok=True)
            with open(
                sink.Artifact.resolved_config.path(directory), 'w', encoding='UTF-8'
            ) as file:
                file.write(config.format_config(point, run_config.fit_window))
            result = self.run_point(point, directory, options)
            write_results(result, directory, run_config.fit_window)
        manifest['finished'] = now()
        sink.write_key_values(sink.Artifact.manifest.path(out), manifest)
        return 0

    def run_point(self, point, directory, options):
        logger.info(
            'computing %d realizations of n = %d, Γ = %g',
            point.realizations,
            point.n_nodes,
            point.gamma,
        )
        try:
            return ensemble.run_ensemble(
                point,
                workers=options.workers,
                checkpoint_dir=os.path.join(directory, CHECKPOINT_DIRECTORY),
                keep_old_checkpoints=not options.discard_checkpoints,
            )
        except checkpoint.CheckpointParserException as e:
            self.fail(e, str(e), EXIT_VALIDATION)
        except InvalidArgument as e:
            self.fail(e, 'Error: %s' % e, EXIT_VALIDATION)
        except ensemble.EnsembleFailure as e:
            msg = ['Error while computing %s:' % point.label()]
            msg.extend(
                '  realization %d, stage %s, seed %s: %s'
                % (f.realization, f.stage, f.seed, f.cause)
                for f in e.failures
            )
            self.fail(e, '\n'.join(msg), EXIT_COMPUTE)

    ############################################################
    # analyze

    def cmd_analyze(self, options):
        runs = []
        for directory in options.runs:
            try:
                runs.append(load_run(directory))
            except sink.MissingArtifacts as e:
                self.fail(
                    e,
                    'Error: %s is not a finished run: %s' % (directory, e),
                    EXIT_VALIDATION,
                )
            except (ValueError, KeyError) as e:
                self.fail(
                    e, 'Error while reading %s: %s' % (directory, e), EXIT_VALIDATION
                )
        os.makedirs(options.out, exist_ok=True)
        fit_rows, consistency_rows, etas = [], [], {}
        labels = set()
        for run in runs:
            windows = options.windows or [run.fit_window]
            try:
                fits = [fit_survival(run.curve, w) for w in windows]
            except (analysis.WindowTooNarrow, analysis.NonPositiveValues) as e:
                self.fail(
                    e,
                    'Error while fitting %s: %s' % (run.directory, e),
                    EXIT_VALIDATION,
                )
            for fit in fits:
                logger.info(
                    '%s: η = %.4f ± %.4f over τ ∈ [%g, %g]',
                    run.directory,
                    fit.exponent,
                    fit.exponent_err,
                    fit.window[0],
                    fit.window[1],
                )
                fit_rows.append(
                    (
                        run.n_nodes,
                        run.gamma,
                        fit.exponent,
                        fit.exponent_err,
                        fit.window[0],
                        fit.window[1],
                        fit.residual,
                    )
                )
            etas.setdefault(run.gamma, []).append((run.n_nodes, fits[0].exponent))
            label = unique_label(labels, ensemble.point_label(run.n_nodes, run.gamma))
            consistency_rows.append(self.analyze_rates(run, fits[0], label, options))
        sink.write_table(
            sink.Artifact.fits.path(options.out), sink.Artifact.fits, fit_rows
        )
        sink.write_table(
            sink.Artifact.consistency.path(options.out),
            sink.Artifact.consistency,
            consistency_rows,
        )
        scaling_rows = []
        for gamma, points in sorted(etas.items()):
            try:
                report = analysis.size_scaling(points, gamma)
            except analysis.InsufficientPoints:
                logger.warning(
                    'scaling at Γ = %g skipped: fewer than two system sizes', gamma
                )
                continue
            logger.info('Γ = %g: η(N) = %.4g N^%.4f', gamma, report.eta0, report.mu)
            scaling_rows.append((gamma, report.eta0, report.mu))
        if scaling_rows:
            sink.write_table(
                sink.Artifact.scaling.path(options.out),
                sink.Artifact.scaling,
                scaling_rows,
            )
        return 0

    def analyze_rates(self, run, fit, label, options):
        """Write the rate density of a run and return its consistency row."""
        try:
            density = analysis.estimate_rate_density(run.rates)
        except (analysis.InsufficientData, InvalidArgument) as e:
            self.fail(
                e, 'Error in rates of %s: %s' % (run.directory, e), EXIT_VALIDATION
            )
        directory = os.path.join(options.out, label)
        os.makedirs(directory, exist_ok=True)
        sink.write_density(sink.Artifact.density.path(directory), density)
        deviation = analysis.laplace_consistency(density, run.curve, fit.window)
        scale = run.n_nodes**3 / run.gamma
        time_fit = dataclasses.replace(
            fit, window=(fit.window[0] * scale, fit.window[1] * scale)
        )
        rates = run.rates if run.pooled_rates is None else run.pooled_rates
        logger.debug('%s: density slope from %d rates', run.directory, len(rates))
        try:
            slope = analysis.density_slope(
                analysis.windowed_rate_density(
                    rates, analysis.matched_rate_window(time_fit)
                )
            ).slope
        except (
            analysis.WindowTooNarrow,
            analysis.NonPositiveValues,
            analysis.InsufficientData,
        ) as e:
            logger.warning('%s: no density slope: %s', run.directory, e)
            slope = float('nan')
        return (run.n_nodes, run.gamma, deviation, slope, fit.exponent - 1.0)

    ############################################################
    # chain benchmark

    def cmd_chain_bench(self, options):
        try:
            report = analysis.chain_benchmark(
                options.n_nodes, options.gamma, options.spacing
            )
        except InvalidArgument as e:
            self.fail(e, 'Error: %s' % e, EXIT_VALIDATION)
        except (spectra.ConvergenceFailure, spectra.NonPositiveDecayRate) as e:
            self.fail(e, 'Error while computing the chain: %s' % e, EXIT_COMPUTE)
        print(report.format())
        return EXIT_BENCH_FAILED if report.failed else 0

    ############################################################
    # spectrum

    def cmd_spectrum(self, options):
        run_config = self.load_config(options.config)
        point = run_config.points[0]
        if len(run_config.points) > 1:
            logger.info('using the first sweep point %s', point.label())
        if not 1 <= options.realization <= point.realizations:
            self.exit(
                'Error: realization must be in 1..%d' % point.realizations,
                EXIT_VALIDATION,
            )
        seed = point.realization_seed(options.realization)
        stage = 'geometry'
        try:
            geometry = ensemble.build_geometry(point, seed)
            stage = 'decomposition'
            h0 = hamiltonian.build_h0(geometry, point.sigma)
            trap = hamiltonian.make_trap(h0, point.gamma, geometry.trap_nodes)
            spectrum = spectra.decompose_trapped(
                hamiltonian.build_full_hamiltonian(h0, trap)
            )
        except (
            network.GeometryInfeasible,
            InvalidArgument,
            hamiltonian.DegenerateGeometry,
            spectra.ConvergenceFailure,
            spectra.NonPositiveDecayRate,
        ) as e:
            self.fail(
                e,
                'Error in realization %d during %s: %s'
                % (options.realization, stage, e),
                EXIT_COMPUTE,
            )
        grid = point.time_grid()
        provenance = dynamics.Provenance(point.n_nodes, point.gamma, seed)
        if options.exact or point.exact_mode:
            curve = dynamics.mean_survival_exact(
                spectrum, geometry.trap_nodes, grid, provenance
            )
        else:
            curve = dynamics.mean_survival_spectral(
                spectrum.decay_rates, grid, provenance
            )
        os.makedirs(options.out, exist_ok=True)
        sink.write_configuration(
            sink.Artifact.configuration.path(options.out), geometry
        )
        sink.write_spectrum(sink.Artifact.spectrum.path(options.out), spectrum)
        sink.write_survival(sink.Artifact.survival.path(options.out), curve)
        if curve.kind == dynamics.CurveKind.exact:
            approximation = dynamics.mean_survival_trap_excluded(
                spectrum.decay_rates, grid, len(geometry.trap_nodes), provenance
            )
            sink.write_survival(
                sink.Artifact.survival_trap_excluded.path(options.out), approximation
            )
        logger.info(
            'realization %d: Γ_r = %g, slowest rate %g',
            options.realization,
            trap.realization_strength,
            spectrum.decay_rates[0],
        )
        return 0


def is_complete(point, directory):
    """Whether directory holds the finished results of point."""
    try:
        metadata = sink.read_metadata(directory)
    except sink.MissingArtifacts:
        return False
    expected = {k: sink.format_key_value(v) for k, v in point.as_dict().items()}
    return all(metadata.get(key) == value for key, value in expected.items())


def write_results(result, directory, fit_window):
    """Write the artifacts of an ensemble; the metadata file comes last and
    marks the directory as complete."""
    sink.write_ensemble_survival(sink.Artifact.survival_avg.path(directory), result)
    sink.write_rates(sink.Artifact.gamma_avg.path(directory), result)
    if result.avg_exact_survival is not None:
        sink.write_exact_survival(
            sink.Artifact.survival_exact_avg.path(directory), result
        )
    if result.per_realization:
        per_realization = os.path.join(directory, REALIZATION_DIRECTORY)
        os.makedirs(per_realization, exist_ok=True)
        for realization in result.per_realization:
            sink.write_survival(
                os.path.join(
                    per_realization, 'survival_%d.csv' % realization.realization
                ),
                realization.survival,
            )
    metadata = dict(result.metadata)
    metadata['fit_window'] = config.format_window(fit_window)
    metadata['max_stderr'] = float(np.max(result.survival_stderr))
    metadata['version'] = VERSION
    sink.write_key_values(sink.Artifact.metadata.path(directory), metadata)
    logger.info('results written to %s', directory)


@dataclasses.dataclass(frozen=True)
class FinishedRun:
    directory: str
    n_nodes: int
    gamma: float
    curve: dynamics.SurvivalCurve
    rates: np.ndarray
    fit_window: tuple = analysis.DEFAULT_FIT_WINDOW
    #: rates of all checkpointed realizations, unsorted
    pooled_rates: np.ndarray = None


def load_run(directory):
    """Read the averaged survival curve and rates of a finished run."""
    metadata = sink.read_metadata(directory)
    n_nodes, gamma = int(metadata['n']), float(metadata['gamma'])
    table = sink.read_table(
        sink.Artifact.survival_avg.path(directory), sink.Artifact.survival_avg
    )
    grid = dynamics.TimeGrid(table['t'], table['tau'])
    curve = dynamics.SurvivalCurve(
        grid,
        table['pi_mean'],
        dynamics.CurveKind.spectral,
        dynamics.Provenance(n_nodes, gamma, None, int(metadata.get('r', 1))),
    )
    rates = sink.read_table(
        sink.Artifact.gamma_avg.path(directory), sink.Artifact.gamma_avg
    )['gamma_mean']
    if 'fit_window' in metadata:
        fit_window = config.parse_window(metadata['fit_window'])
    else:
        fit_window = analysis.DEFAULT_FIT_WINDOW
    return FinishedRun(
        directory,
        n_nodes,
        gamma,
        curve,
        rates,
        fit_window,
        pooled_rates(directory, n_nodes, int(metadata.get('r', 1))),
    )


def pooled_rates(directory, n_nodes, realizations):
    """Rates of all checkpointed realizations of a run, None without any."""
    path = os.path.join(directory, CHECKPOINT_DIRECTORY)
    if not os.path.isdir(path):
        return None
    try:
        store = checkpoint.CheckpointStore(path)
    except checkpoint.CheckpointParserException as e:
        logger.warning('%s: checkpoints not used: %s', directory, e)
        return None
    rates = [
        store.load(r).sorted_rates
        for r in store.completed()
        if r <= realizations and len(store.load(r).sorted_rates) == n_nodes
    ]
    return np.concatenate(rates) if rates else None


def fit_survival(curve, window):
    """Fit η over window (rescaled time); None selects the window automatically."""
    if window is None:
        window = analysis.auto_fit_window(curve)
    return analysis.fit_power_law(curve, window)


def unique_label(labels, label):
    candidate, count = label, 1
    while candidate in labels:
        count += 1
        candidate = '%s_%d' % (label, count)
    labels.add(candidate)
    return candidate


def main():
    """Entry point for setuptools."""
    # enable multiprocessing on Windows, see python docs
    multiprocessing.freeze_support()
    m = Main()
    sys.exit(m.run(sys.argv))


if __name__ == '__main__':
    main()
