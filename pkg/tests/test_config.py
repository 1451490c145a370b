# pylint: disable=too-many-public-methods,import-error,too-few-public-methods,missing-docstring,unused-variable
import os
import shutil
import tempfile
import unittest

from trapwalk import config
from trapwalk.config import ConfigError
from trapwalk.network import GeometryKind


SWEEP = """
# two sizes, two trap strengths
geometry = disordered3d
n = 100, 1000
gamma = 1 1e-6
r = 500
seed = 42
fit_window = 1e-3:1e-1

[n=1000]
r = 100

[n=1000, gamma=1e-6]
r = 50
"""


class TestParseConfig(unittest.TestCase):
    def test_sweep_is_the_cartesian_product(self):
        run = config.parse_config(SWEEP)
        self.assertEqual(len(run), 4)
        self.assertEqual(
            [(p.n_nodes, p.gamma) for p in run],
            [(100, 1.0), (100, 1e-6), (1000, 1.0), (1000, 1e-6)],
        )
        self.assertTrue(all(p.master_seed == 42 for p in run))

    def test_sections_override_global_keys(self):
        run = config.parse_config(SWEEP)
        self.assertEqual([p.realizations for p in run], [500, 500, 100, 50])

    def test_fit_window(self):
        self.assertEqual(config.parse_config(SWEEP).fit_window, (1e-3, 1e-1))
        run = config.parse_config('n = 10\nr = 1\ngamma = 1\nfit_window = auto\n')
        self.assertIsNone(run.fit_window)

    def test_default_fit_window_is_intermediate(self):
        run = config.parse_config('n = 10\nr = 1\ngamma = 1\n')
        self.assertEqual(run.fit_window, (1e-3, 1e-2))

    def test_defaults(self):
        point = config.parse_config('n = 10\nr = 2\ngamma = 1\n').points[0]
        self.assertEqual(point.geometry_kind, GeometryKind.disordered3d)
        self.assertEqual(point.sigma, 3.0)
        self.assertEqual(point.master_seed, 0)
        self.assertEqual((point.tau_min, point.tau_max), (1e-4, 1e2))
        self.assertEqual(point.points_per_decade, 200)
        self.assertEqual(point.delta_min, 1e-2)
        self.assertFalse(point.exact_mode)

    def test_all_keys(self):
        text = (
            'geometry = chain1d\nn = 20\nr = 1\ngamma = 0.5\nsigma = 2\n'
            'seed = 0x10\ntau_min = 1e-3\ntau_max = 10\npoints_per_decade = 5\n'
            'delta_min = 0\nspacing = 2.5\nexact_mode = yes\n'
            'keep_per_realization = 1\n'
        )
        point = config.parse_config(text).points[0]
        self.assertEqual(point.geometry_kind, GeometryKind.chain1d)
        self.assertEqual(point.sigma, 2.0)
        self.assertEqual(point.master_seed, 16)
        self.assertEqual(point.points_per_decade, 5)
        self.assertEqual(point.spacing, 2.5)
        self.assertTrue(point.exact_mode)
        self.assertTrue(point.keep_per_realization)

    def test_unknown_key_is_named(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1\ngama = 1\n')
        self.assertEqual(ctx.exception.key, 'gama')
        self.assertEqual(ctx.exception.line_number, 3)
        self.assertIn('gama', str(ctx.exception))

    def test_duplicate_key(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1\nr = 2\ngamma = 1\n')
        self.assertEqual(ctx.exception.key, 'r')

    def test_malformed_value(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = many\ngamma = 1\n')
        self.assertEqual(ctx.exception.key, 'r')
        self.assertEqual(ctx.exception.line_number, 2)

    def test_list_for_a_scalar_key(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1, 2\ngamma = 1\n')
        self.assertEqual(ctx.exception.key, 'r')

    def test_missing_required_key(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1\n')
        self.assertEqual(ctx.exception.key, 'gamma')

    def test_line_without_assignment(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr 1\ngamma = 1\n')
        self.assertEqual(ctx.exception.line_number, 2)

    def test_sections_cannot_change_the_sweep(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1\ngamma = 1\n[n=10]\nn = 20\n')
        self.assertEqual(ctx.exception.key, 'n')

    def test_sections_select_by_n_and_gamma_only(self):
        with self.assertRaises(ConfigError) as ctx:
            config.parse_config('n = 10\nr = 1\ngamma = 1\n[seed=3]\nr = 2\n')
        self.assertEqual(ctx.exception.key, 'seed')

    def test_invalid_point(self):
        self.assertRaises(
            ConfigError, config.parse_config, 'n = 10\nr = 1\ngamma = -1\n'
        )

    def test_invalid_boolean_and_window(self):
        self.assertRaises(
            ConfigError,
            config.parse_config,
            'n = 10\nr = 1\ngamma = 1\nexact_mode = maybe\n',
        )
        self.assertRaises(
            ConfigError,
            config.parse_config,
            'n = 10\nr = 1\ngamma = 1\nfit_window = 1:0.1\n',
        )

    def test_formatted_config_parses_to_the_same_point(self):
        point = config.parse_config(SWEEP).points[3]
        reparsed = config.parse_config(config.format_config(point)).points[0]
        self.assertEqual(reparsed, point)

    def test_formatted_config_keeps_the_fit_window(self):
        point = config.parse_config(SWEEP).points[0]
        for window in (None, (1e-3, 1e-1)):
            run = config.parse_config(config.format_config(point, window))
            self.assertEqual(run.fit_window, window)
            self.assertEqual(run.points, (point,))


class TestLoadConfig(unittest.TestCase):
    def setUp(self):
        self.original_directory = os.getcwd()
        self.tmpdir = tempfile.mkdtemp()
        os.chdir(self.tmpdir)

    def tearDown(self):
        os.chdir(self.original_directory)
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_file_is_read(self):
        with open('run.conf', 'w', encoding='utf-8') as f:
            f.write(SWEEP)
        run = config.load_config('run.conf')
        self.assertEqual(run.source, 'run.conf')
        self.assertEqual(len(run.points), 4)

    def test_missing_file(self):
        self.assertRaises(ConfigError, config.load_config, 'missing.conf')


if __name__ == '__main__':
    unittest.main()
