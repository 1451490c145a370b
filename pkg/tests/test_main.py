# pylint: disable=too-many-public-methods,import-error,too-few-public-methods,missing-docstring,unused-variable
import contextlib
import io
import os
import shutil
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from trapwalk import __main__ as cli
from trapwalk import checkpoint, config, sink, spectra
from trapwalk.sink import Artifact

FIXTURE = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures', 'synthetic_run')

SMALL = """
n = 6
r = 3
gamma = 1
seed = 1
delta_min = 0.5
points_per_decade = 4
"""


def write(path, content):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(content)


def call(*args):
    """Run the command line interface; return the exit status and stderr."""
    stderr = io.StringIO()
    with contextlib.redirect_stderr(stderr), contextlib.redirect_stdout(io.StringIO()):
        try:
            status = cli.Main().run(['trapwalk', '-q'] + list(args))
        except SystemExit as e:
            status = e.code
    return status, stderr.getvalue()


@patch.dict(os.environ, {'DEBUG': '0'})
class TestRun(unittest.TestCase):
    def setUp(self):
        self.original_directory = os.getcwd()
        self.tmpdir = tempfile.mkdtemp()
        os.chdir(self.tmpdir)
        write('small.conf', SMALL)

    def tearDown(self):
        os.chdir(self.original_directory)
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_run_writes_all_artifacts(self):
        status, err = call('run', '--config', 'small.conf', '--out', 'out', '--workers', '2')
        self.assertEqual(status, 0, err)
        for artifact in (Artifact.survival_avg, Artifact.gamma_avg, Artifact.metadata):
            self.assertTrue(os.path.exists(artifact.path('out')), artifact)
        self.assertEqual(len(os.listdir(os.path.join('out', 'checkpoints'))), 3)
        metadata = sink.read_metadata('out')
        self.assertEqual(metadata['n'], '6')
        self.assertEqual(metadata['r'], '3')
        self.assertEqual(metadata['fit_window'], '0.001:0.01')
        with open(Artifact.resolved_config.path('out'), encoding='utf-8') as f:
            resolved = config.parse_config(f.read())
        self.assertEqual(resolved.points, config.load_config('small.conf').points)
        self.assertEqual(resolved.fit_window, (1e-3, 1e-2))
        self.assertIn('finished', sink.read_key_values(Artifact.manifest.path('out')))
        table = sink.read_table(Artifact.survival_avg.path('out'), Artifact.survival_avg)
        self.assertEqual(table['pi_mean'][0], 1.0)
        self.assertTrue(np.all(table['jensen_lb'] <= table['pi_mean'] + 1e-12))
        rates = sink.read_table(Artifact.gamma_avg.path('out'), Artifact.gamma_avg)
        self.assertEqual(list(rates['l']), [1, 2, 3, 4, 5, 6])

    def test_finished_run_is_not_computed_again(self):
        call('run', '--config', 'small.conf', '--out', 'out')
        with patch('trapwalk.ensemble.run_ensemble') as run_ensemble:
            status, err = call('run', '--config', 'small.conf', '--out', 'out')
        self.assertEqual(status, 0, err)
        run_ensemble.assert_not_called()

    def test_non_empty_directory_needs_resume(self):
        os.mkdir('out')
        write(os.path.join('out', 'notes'), 'x')
        status, err = call('run', '--config', 'small.conf', '--out', 'out')
        self.assertEqual(status, cli.EXIT_VALIDATION)
        self.assertIn('--resume', err)

    def test_resumed_run_uses_the_checkpoints(self):
        write('two.conf', SMALL.replace('r = 3', 'r = 2'))
        call('run', '--config', 'two.conf', '--out', 'out')
        write('four.conf', SMALL.replace('r = 3', 'r = 4'))
        status, err = call('run', '--config', 'four.conf', '--out', 'out', '--resume')
        self.assertEqual(status, 0, err)
        metadata = sink.read_metadata('out')
        self.assertEqual(metadata['r'], '4')
        self.assertEqual(metadata['resumed_realizations'], '2')

    def test_resume_with_another_coupling_strength(self):
        call('run', '--config', 'small.conf', '--out', 'out')
        strong = sink.read_metadata('out')
        write('weak.conf', SMALL.replace('gamma = 1', 'gamma = 1e-6'))
        status, err = call('run', '--config', 'weak.conf', '--out', 'out', '--resume')
        self.assertEqual(status, cli.EXIT_VALIDATION)
        self.assertIn('different configuration', err)
        status, err = call(
            'run', '--config', 'weak.conf', '--out', 'out', '--resume', '-n'
        )
        self.assertEqual(status, 0, err)
        weak = sink.read_metadata('out')
        self.assertEqual(weak['resumed_realizations'], '0')
        ratio = float(weak['mean_gamma_r']) / float(strong['mean_gamma_r'])
        self.assertAlmostEqual(ratio, 1e-6)

    def test_output_does_not_depend_on_workers(self):
        for workers in ('1', '4'):
            status, err = call(
                'run', '--config', 'small.conf', '--out', 'out' + workers,
                '--workers', workers,
            )
            self.assertEqual(status, 0, err)
        for artifact in (Artifact.survival_avg, Artifact.gamma_avg):
            with open(artifact.path('out1'), 'rb') as f:
                serial = f.read()
            with open(artifact.path('out4'), 'rb') as f:
                self.assertEqual(f.read(), serial, artifact)

    def test_hundred_node_ensemble_in_the_default_window(self):
        write(
            'hundred.conf',
            'n = 100\nr = 200\ngamma = 1\nseed = 3\npoints_per_decade = 50\n',
        )
        status, err = call('run', '--config', 'hundred.conf', '--out', 'out')
        self.assertEqual(status, 0, err)
        status, err = call('analyze', 'out', '--out', 'analysis')
        self.assertEqual(status, 0, err)
        fits = sink.read_table(Artifact.fits.path('analysis'), Artifact.fits)
        self.assertEqual((fits['window_lo'][0], fits['window_hi'][0]), (1e-3, 1e-2))
        eta = fits['eta'][0]
        self.assertGreater(eta, 0.005)
        self.assertLess(eta, 0.025)
        rows = sink.read_table(Artifact.consistency.path('analysis'), Artifact.consistency)
        self.assertLessEqual(rows['laplace_max_rel_dev'][0], 0.1)
        self.assertTrue(np.isfinite(rows['density_slope'][0]))
        self.assertAlmostEqual(rows['density_slope'][0], eta - 1.0, delta=0.2)

    def test_sweep_writes_one_directory_per_point(self):
        write('sweep.conf', SMALL.replace('n = 6', 'n = 6, 8'))
        status, err = call('run', '--config', 'sweep.conf', '--out', 'out')
        self.assertEqual(status, 0, err)
        for label in ('n6_gamma1', 'n8_gamma1'):
            self.assertTrue(os.path.exists(Artifact.metadata.path(os.path.join('out', label))))
        self.assertTrue(os.path.exists(Artifact.manifest.path('out')))

    def test_exact_flag(self):
        status, err = call('run', '--config', 'small.conf', '--out', 'out', '--exact')
        self.assertEqual(status, 0, err)
        self.assertTrue(os.path.exists(Artifact.survival_exact_avg.path('out')))
        self.assertEqual(sink.read_metadata('out')['exact_mode'], 'true')

    def test_per_realization_curves(self):
        write('keep.conf', SMALL + 'keep_per_realization = true\n')
        status, err = call('run', '--config', 'keep.conf', '--out', 'out')
        self.assertEqual(status, 0, err)
        self.assertEqual(
            sorted(os.listdir(os.path.join('out', 'realizations'))),
            ['survival_1.csv', 'survival_2.csv', 'survival_3.csv'],
        )

    def test_malformed_configuration(self):
        write('bad.conf', SMALL + 'gama = 3\n')
        status, err = call('run', '--config', 'bad.conf', '--out', 'out')
        self.assertEqual(status, cli.EXIT_VALIDATION)
        self.assertIn('gama', err)
        self.assertFalse(os.path.exists('out'))

    def test_missing_arguments(self):
        status, err = call('run', '--out', 'out')
        self.assertEqual(status, cli.EXIT_VALIDATION)

    def test_compute_failure(self):
        with patch(
            'trapwalk.spectra.decompose_trapped',
            side_effect=spectra.ConvergenceFailure('no convergence'),
        ):
            status, err = call('run', '--config', 'small.conf', '--out', 'out')
        self.assertEqual(status, cli.EXIT_COMPUTE)
        self.assertIn('stage decomposition', err)
        self.assertFalse(os.path.exists(Artifact.metadata.path('out')))


@patch.dict(os.environ, {'DEBUG': '0'})
class TestAnalyze(unittest.TestCase):
    def setUp(self):
        self.original_directory = os.getcwd()
        self.tmpdir = tempfile.mkdtemp()
        os.chdir(self.tmpdir)
        shutil.copytree(FIXTURE, 'run10')

    def tearDown(self):
        os.chdir(self.original_directory)
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_exponent_of_the_synthetic_run(self):
        status, err = call('analyze', 'run10', '--out', 'analysis')
        self.assertEqual(status, 0, err)
        fits = sink.read_table(Artifact.fits.path('analysis'), Artifact.fits)
        self.assertAlmostEqual(fits['eta'][0], 0.5, places=10)
        self.assertEqual(fits['n'][0], 10)
        self.assertAlmostEqual(fits['window_lo'][0], 1e-3)
        self.assertAlmostEqual(fits['window_hi'][0], 4194.304)
        self.assertTrue(os.path.exists(Artifact.consistency.path('analysis')))
        self.assertTrue(
            os.path.exists(Artifact.density.path(os.path.join('analysis', 'n10_gamma1')))
        )
        # a single size gives no scaling
        self.assertFalse(os.path.exists(Artifact.scaling.path('analysis')))

    def test_explicit_windows(self):
        status, err = call(
            'analyze', 'run10', '--windows', '1e-3:5000', '--windows', '0.0005:4200',
            '--out', 'analysis',
        )
        self.assertEqual(status, 0, err)
        fits = sink.read_table(Artifact.fits.path('analysis'), Artifact.fits)
        self.assertEqual(len(fits['eta']), 2)
        np.testing.assert_allclose(fits['eta'], 0.5, rtol=1e-10)

    def test_runs_without_a_fit_window_use_the_default(self):
        path = Artifact.metadata.path('run10')
        with open(path, encoding='utf-8') as f:
            text = f.read()
        write(path, text.replace('fit_window = auto\n', ''))
        self.assertEqual(cli.load_run('run10').fit_window, (1e-3, 1e-2))
        self.assertIsNone(cli.load_run('run10').pooled_rates)

    def test_automatic_window_on_request(self):
        status, err = call('analyze', 'run10', '--windows', 'auto', '--out', 'analysis')
        self.assertEqual(status, 0, err)
        fits = sink.read_table(Artifact.fits.path('analysis'), Artifact.fits)
        self.assertAlmostEqual(fits['window_lo'][0], 1e-3)

    def test_density_slope_from_checkpointed_rates(self):
        # log-uniform rates over eight decades have ρ(γ) ∼ 1/γ
        fractions = (np.arange(5000) + 0.5) / 5000
        pooled = 10.0 ** (-8.0 + 8.0 * fractions)
        path = Artifact.metadata.path('run10')
        with open(path, encoding='utf-8') as f:
            text = f.read()
        write(path, text.replace('\nr = 1\n', '\nr = 500\n'))
        store = checkpoint.CheckpointStore(os.path.join('run10', 'checkpoints'))
        for r in range(1, 501):
            store.save(checkpoint.CheckpointEntry(r, r, 1.0, pooled[r - 1 :: 500]))
        run = cli.load_run('run10')
        self.assertEqual(len(run.pooled_rates), 5000)
        status, err = call('analyze', 'run10', '--out', 'analysis')
        self.assertEqual(status, 0, err)
        rows = sink.read_table(Artifact.consistency.path('analysis'), Artifact.consistency)
        self.assertAlmostEqual(rows['density_slope'][0], -1.0, delta=0.02)
        self.assertAlmostEqual(rows['expected_slope'][0], -0.5, places=8)

    def test_two_sizes_give_the_scaling(self):
        shutil.copytree('run10', 'run20')
        path = Artifact.metadata.path('run20')
        with open(path, encoding='utf-8') as f:
            text = f.read()
        write(path, text.replace('n = 10', 'n = 20'))
        status, err = call('analyze', 'run10', 'run20', '--out', 'analysis')
        self.assertEqual(status, 0, err)
        scaling = sink.read_table(Artifact.scaling.path('analysis'), Artifact.scaling)
        self.assertEqual(len(scaling['mu']), 1)
        self.assertAlmostEqual(scaling['mu'][0], 0.0, places=8)
        self.assertAlmostEqual(scaling['eta0'][0], 0.5, places=8)

    def test_unfinished_run(self):
        os.remove(Artifact.metadata.path('run10'))
        status, err = call('analyze', 'run10', '--out', 'analysis')
        self.assertEqual(status, cli.EXIT_VALIDATION)
        self.assertIn('not a finished run', err)

    def test_malformed_window(self):
        status, err = call('analyze', 'run10', '--windows', '5:1')
        self.assertEqual(status, cli.EXIT_VALIDATION)


@patch.dict(os.environ, {'DEBUG': '0'})
class TestChainBenchAndSpectrum(unittest.TestCase):
    def setUp(self):
        self.original_directory = os.getcwd()
        self.tmpdir = tempfile.mkdtemp()
        os.chdir(self.tmpdir)
        write('small.conf', SMALL)

    def tearDown(self):
        os.chdir(self.original_directory)
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_chain_benchmark_passes(self):
        stdout = io.StringIO()
        with contextlib.redirect_stdout(stdout):
            status = cli.Main().run(['trapwalk', '-q', 'chain-bench', '--n', '100'])
        self.assertEqual(status, 0)
        self.assertIn('result: PASS', stdout.getvalue())

    def test_chain_benchmark_rejects_tiny_chains(self):
        status, err = call('chain-bench', '--n', '5')
        self.assertEqual(status, cli.EXIT_VALIDATION)

    def test_spectrum_of_a_realization(self):
        status, err = call(
            'spectrum', '--config', 'small.conf', '--out', 'dump', '--realization', '2'
        )
        self.assertEqual(status, 0, err)
        geometry = sink.read_table(Artifact.configuration.path('dump'), Artifact.configuration)
        self.assertEqual(list(geometry['is_trap']), [1, 0, 0, 0, 0, 0])
        spectrum = sink.read_table(Artifact.spectrum.path('dump'), Artifact.spectrum)
        self.assertTrue(np.all(np.diff(spectrum['gamma']) >= 0))
        survival = sink.read_table(Artifact.survival.path('dump'), Artifact.survival)
        self.assertEqual(survival['pi'][0], 1.0)

    def test_exact_spectrum_survival(self):
        status, err = call('spectrum', '--config', 'small.conf', '--out', 'dump', '--exact')
        self.assertEqual(status, 0, err)
        with open(Artifact.survival.path('dump'), encoding='utf-8') as f:
            self.assertIn('kind=exact', f.read())
        approximation = sink.read_table(
            Artifact.survival_trap_excluded.path('dump'), Artifact.survival_trap_excluded
        )
        # normalized by 1/(N - M) = 1/5
        self.assertAlmostEqual(approximation['pi'][0], 6 / 5)

    def test_realization_out_of_range(self):
        status, err = call(
            'spectrum', '--config', 'small.conf', '--out', 'dump', '--realization', '4'
        )
        self.assertEqual(status, cli.EXIT_VALIDATION)


if __name__ == '__main__':
    unittest.main()
