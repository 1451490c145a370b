# pylint: disable=too-many-public-methods,import-error,too-few-public-methods,missing-docstring,unused-variable
import unittest

import numpy as np

from trapwalk import hamiltonian, network
from trapwalk.hamiltonian import TrapSpec
from trapwalk.network import NodeConfiguration


def configuration(coords):
    return NodeConfiguration(coords=np.array(coords, dtype=float))


def pair_h0():
    return hamiltonian.CouplingMatrix(
        np.array([[1.0, -1.0], [-1.0, 1.0]]), network.GeometryKind.chain1d
    )


class TestLongRangeCouplings(unittest.TestCase):
    def test_two_nodes_at_distance_two(self):
        h0 = hamiltonian.build_h0_long_range(configuration([[0, 0, 0], [2, 0, 0]]))
        np.testing.assert_allclose(
            h0.entries, [[1 / 8, -1 / 8], [-1 / 8, 1 / 8]], rtol=1e-15
        )
        np.testing.assert_allclose(
            np.linalg.eigvalsh(h0.entries), [0, 1 / 4], atol=1e-15
        )

    def test_rows_sum_to_zero(self):
        config = network.generate_configuration(40, 11)
        h0 = hamiltonian.build_h0_long_range(config)
        np.testing.assert_allclose(
            h0.entries @ np.ones(40), np.zeros(40), atol=1e-12 * h0.norm()
        )
        np.testing.assert_array_equal(h0.entries, h0.entries.T)

    def test_positive_semidefinite_and_connected(self):
        for seed in (1, 2, 3):
            h0 = hamiltonian.build_h0_long_range(
                network.generate_configuration(60, seed)
            )
            eigenvalues = np.linalg.eigvalsh(h0.entries)
            self.assertGreaterEqual(eigenvalues[0], -1e-12 * h0.norm())
            # a single zero mode, since every pair of nodes is coupled
            self.assertGreater(eigenvalues[1], 1e3 * np.finfo(float).eps * h0.norm())

    def test_equilateral_triangle(self):
        h0 = hamiltonian.build_h0_long_range(
            configuration([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
        )
        np.testing.assert_allclose(np.diag(h0.entries), [2, 2, 2], rtol=1e-12)
        np.testing.assert_allclose(h0.entries[0, 1], -1, rtol=1e-12)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(h0.entries), [0, 3, 3], atol=1e-12
        )

    def test_interaction_exponent(self):
        h0 = hamiltonian.build_h0_long_range(
            configuration([[0, 0, 0], [2, 0, 0]]), sigma=1.0
        )
        self.assertAlmostEqual(h0.entries[0, 1], -0.5)
        self.assertEqual(h0.interaction_exponent, 1.0)

    def test_coinciding_nodes_are_rejected(self):
        with self.assertRaises(hamiltonian.DegenerateGeometry) as ctx:
            hamiltonian.build_h0_long_range(
                configuration([[0, 0, 0], [1, 1, 1], [1, 1, 1]])
            )
        self.assertEqual(ctx.exception.pair, (1, 2))


class TestChainCouplings(unittest.TestCase):
    def test_three_nodes(self):
        h0 = hamiltonian.build_h0_chain(network.generate_chain(3))
        np.testing.assert_array_equal(
            h0.entries, [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]
        )

    def test_rows_sum_to_zero(self):
        for n in (2, 5, 17):
            h0 = hamiltonian.build_h0_chain(network.generate_chain(n))
            np.testing.assert_array_equal(h0.entries.sum(axis=1), np.zeros(n))

    def test_two_nodes_eigenvalues(self):
        h0 = hamiltonian.build_h0_chain(network.generate_chain(2))
        np.testing.assert_allclose(np.linalg.eigvalsh(h0.entries), [0, 2], atol=1e-15)

    def test_disordered_geometry_is_rejected(self):
        config = network.generate_configuration(4, 1)
        self.assertRaises(hamiltonian.InvalidGeometry, hamiltonian.build_h0_chain, config)

    def test_build_h0_dispatches_on_geometry(self):
        chain = network.generate_chain(4, spacing=0.5)
        np.testing.assert_array_equal(
            hamiltonian.build_h0(chain).entries,
            hamiltonian.build_h0_chain(chain).entries,
        )


class TestTrapStrength(unittest.TestCase):
    def test_pair_at_distance_two(self):
        h0 = hamiltonian.build_h0_long_range(configuration([[0, 0, 0], [2, 0, 0]]))
        self.assertEqual(hamiltonian.realization_trap_strength(h0, 1.0, 0), 1 / 8)

    def test_small_gamma(self):
        h0 = hamiltonian.CouplingMatrix(
            np.array([[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]])
        )
        self.assertAlmostEqual(
            hamiltonian.realization_trap_strength(h0, 1e-6, 0), 2e-6, places=18
        )

    def test_chain_end(self):
        h0 = hamiltonian.build_h0_chain(network.generate_chain(5))
        self.assertEqual(hamiltonian.realization_trap_strength(h0, 1.0, 0), 1.0)

    def test_gamma_must_be_positive(self):
        self.assertRaises(
            network.InvalidArgument,
            hamiltonian.realization_trap_strength,
            pair_h0(),
            0.0,
            0,
        )

    def test_trap_outside_the_network(self):
        self.assertRaises(
            network.IndexOutOfRange, hamiltonian.make_trap, pair_h0(), 1.0, (2,)
        )

    def test_make_trap(self):
        trap = hamiltonian.make_trap(pair_h0(), 0.5, (0,))
        self.assertEqual(trap.trap_nodes, (0,))
        self.assertEqual(trap.base_strength, 0.5)
        self.assertEqual(trap.realization_strength, 0.5)
        self.assertEqual(trap.n_traps, 1)


class TestFullHamiltonian(unittest.TestCase):
    def test_trap_entry(self):
        h = hamiltonian.build_full_hamiltonian(pair_h0(), TrapSpec((0,), 0.1, 0.1))
        np.testing.assert_array_equal(
            h.matrix(), [[1 - 0.1j, -1], [-1, 1]]
        )
        self.assertEqual(h.trap_nodes, (0,))

    def test_zero_strength_is_the_trap_free_hamiltonian(self):
        h = hamiltonian.build_full_hamiltonian(pair_h0(), TrapSpec((0,), 1.0, 0.0))
        np.testing.assert_array_equal(h.matrix(), pair_h0().entries)

    def test_trace(self):
        h0 = hamiltonian.build_h0_chain(network.generate_chain(6))
        h = hamiltonian.build_full_hamiltonian(h0, TrapSpec((0, 5), 1.0, 0.3))
        self.assertAlmostEqual(
            np.trace(h.matrix()), np.trace(h0.entries) - 2j * 0.3
        )

    def test_negative_strength_is_rejected(self):
        self.assertRaises(network.InvalidArgument, TrapSpec, (0,), 1.0, -0.1)


if __name__ == '__main__':
    unittest.main()
