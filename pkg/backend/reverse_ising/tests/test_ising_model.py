import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from backend.reverse_ising.ising_model import (
    AUX_FIXED, AUX_FREE_WRONG, AuxiliaryArray, HamiltonianCoefficients, SystemShape, TruthTable,
    bits_to_int, build_multiplier_truth_table, build_state_sets, constraints_satisfied,
    count_aux_arrays, count_constraints, energies, enumerate_states, feature_map, ground_aux_array,
    hamiltonian, int_to_bits, psi_dimension, spin_decode, spin_encode, state_index,
)


def one_input_table(alpha=1):
    """n=1, m=1: the output copies the input."""
    return TruthTable.from_rows([((-1,), (-1,)), ((1,), (1,))], alpha=alpha)


class EncodingTests(SimpleTestCase):

    def test_spin_encode(self):
        np.testing.assert_array_equal(spin_encode([0, 1]), [-1, 1])
        self.assertEqual(spin_encode([]).size, 0)

    def test_spin_decode_inverts_encode(self):
        bits = [1, 0, 0, 1, 1]
        np.testing.assert_array_equal(spin_decode(spin_encode(bits)), bits)

    def test_spin_decode_rejects_zero_spin(self):
        with self.assertRaises(ValidationError):
            spin_decode([1, 0, -1])

    def test_little_endian_bits(self):
        self.assertEqual(int_to_bits(6, 4), [0, 1, 1, 0])
        self.assertEqual(bits_to_int([0, 1, 1, 0]), 6)
        with self.assertRaises(ValueError):
            int_to_bits(16, 4)

    def test_enumerate_states_order(self):
        states = enumerate_states(3)
        self.assertEqual(states.shape, (8, 3))
        np.testing.assert_array_equal(states[0], [-1, -1, -1])
        np.testing.assert_array_equal(states[5], [1, -1, 1])
        for i, s in enumerate(states):
            self.assertEqual(state_index(s), i)

    def test_enumerate_zero_spins(self):
        self.assertEqual(enumerate_states(0).shape, (1, 0))


class HamiltonianTests(SimpleTestCase):

    def test_feature_map_products(self):
        np.testing.assert_array_equal(feature_map([-1, 1, -1]), [-1, 1, -1, -1, 1, -1])

    def test_psi_dimension(self):
        self.assertEqual(psi_dimension(3), 6)
        self.assertEqual(psi_dimension(9), 45)

    def test_field_only_energy(self):
        psi = HamiltonianCoefficients.from_fields([0, 0, 1])
        self.assertEqual(hamiltonian(psi, [-1, 1, -1]), -1.0)

    def test_zero_coefficients_give_zero_energy(self):
        psi = HamiltonianCoefficients.zeros(4)
        np.testing.assert_array_equal(energies(psi, enumerate_states(4)), np.zeros(16))

    def test_energy_equals_feature_dot_psi(self):
        rng = np.random.default_rng(3)
        psi = HamiltonianCoefficients(rng.uniform(-4, 4, psi_dimension(5)))
        for s in enumerate_states(5)[::7]:
            self.assertAlmostEqual(hamiltonian(psi, s), float(feature_map(s) @ psi.values), places=12)

    def test_full_coupling_matrix_is_read_in_pair_order(self):
        J = np.array([[0, 1, 2], [0, 0, 3], [0, 0, 0]], dtype=float)
        psi = HamiltonianCoefficients.from_fields([0, 0, 0], J)
        np.testing.assert_array_equal(psi.J, [1, 2, 3])

    def test_state_size_mismatch(self):
        with self.assertRaises(ValueError):
            hamiltonian(HamiltonianCoefficients.zeros(3), [1, -1])

    def test_invalid_dimension(self):
        with self.assertRaises(ValidationError):
            HamiltonianCoefficients(np.zeros(5))

    def test_projection_into_box(self):
        psi = HamiltonianCoefficients(np.array([-9.0, 0.5, 9.0]), box=(-4, 4))
        self.assertFalse(psi.within_box())
        np.testing.assert_array_equal(psi.projected().values, [-4.0, 0.5, 4.0])


class TruthTableTests(SimpleTestCase):

    def test_two_by_two_multiplier(self):
        table = build_multiplier_truth_table(2, 2, alpha=1)
        self.assertEqual((table.shape.n, table.shape.m, table.ell), (4, 4, 16))
        self.assertEqual(str(table.shape), '(9,4,1)')

    def test_one_by_one_multiplier(self):
        table = build_multiplier_truth_table(1, 1)
        self.assertEqual(table.ell, 4)
        u, v = table.rows[3]
        np.testing.assert_array_equal(u, [1, 1])
        self.assertEqual(bits_to_int(spin_decode(v)), 1)

    def test_two_by_three_multiplier_rows(self):
        self.assertEqual(build_multiplier_truth_table(2, 3).ell, 32)

    def test_row_index_is_the_input_pattern(self):
        table = build_multiplier_truth_table(2, 2)
        for r, (u, v) in enumerate(table.rows):
            self.assertEqual(state_index(u), r)
            x, y = r & 3, r >> 2
            self.assertEqual(bits_to_int(spin_decode(v)), x * y)

    def test_problem_four_shape(self):
        self.assertEqual(str(build_multiplier_truth_table(3, 3, alpha=3).shape), '(15,6,3)')

    def test_duplicate_inputs_rejected(self):
        with self.assertRaises(ValidationError):
            TruthTable.from_rows([((1,), (1,)), ((1,), (-1,))])

    def test_text_format(self):
        table = build_multiplier_truth_table(1, 2, alpha=2)
        text = table.to_text()
        self.assertIn('# n=3 m=3 alpha=2', text)
        parsed = TruthTable.from_text(text)
        self.assertEqual(parsed.shape, table.shape)
        np.testing.assert_array_equal(parsed.inputs, table.inputs)
        np.testing.assert_array_equal(parsed.outputs, table.outputs)

    def test_malformed_text(self):
        with self.assertRaises(ValidationError):
            TruthTable.from_text('# n=1 m=1\n0 1 1\n')

    def test_shape_from_counts(self):
        shape = SystemShape.from_counts(12, 4, 4)
        self.assertEqual((shape.n, shape.m, shape.alpha), (4, 4, 4))
        with self.assertRaises(ValidationError):
            SystemShape(n=0, m=1)


class StateSetTests(SimpleTestCase):

    def setUp(self):
        self.table = one_input_table()
        self.aux = AuxiliaryArray(np.array([[1], [-1]]))

    def test_aux_fixed_wrong_set(self):
        sets = build_state_sets(self.table, self.aux, AUX_FIXED)
        self.assertEqual(sets.wrong_per_row, 1)
        self.assertEqual(sets.correct_per_row, 1)
        np.testing.assert_array_equal(sets.correct_states[0, 0], [-1, -1, 1])
        np.testing.assert_array_equal(sets.wrong_states[0, 0], [-1, 1, 1])

    def test_aux_free_wrong_set(self):
        sets = build_state_sets(self.table, self.aux, AUX_FREE_WRONG)
        self.assertEqual(sets.wrong_per_row, 2)

    def test_correct_aux_free(self):
        sets = build_state_sets(self.table, self.aux, AUX_FIXED, correct_aux_free=True)
        self.assertEqual(sets.correct_per_row, 2)

    def test_correct_and_wrong_sets_are_disjoint(self):
        sets = build_state_sets(self.table, self.aux, AUX_FREE_WRONG)
        for i in range(sets.ell):
            correct = {tuple(s) for s in sets.correct_states[:, i]}
            wrong = {tuple(s) for s in sets.wrong_states[:, i]}
            self.assertFalse(correct & wrong)

    def test_problem_one_wrong_state_total(self):
        table = build_multiplier_truth_table(2, 2, alpha=1)
        aux = AuxiliaryArray.random(table.ell, 1, np.random.default_rng(0))
        sets = build_state_sets(table, aux, AUX_FIXED)
        self.assertEqual(sets.wrong_per_row * sets.ell, 240)
        self.assertEqual(sets.dimension, 45)

    def test_aux_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            build_state_sets(self.table, AuxiliaryArray(np.ones((2, 2))), AUX_FIXED)

    def test_constraints_satisfied(self):
        sets = build_state_sets(self.table, self.aux, AUX_FIXED)
        # Coupling u-v favours equal spins; the aux spin is left untouched.
        psi = HamiltonianCoefficients.from_fields([0, 0, 0], [-1, 0, 0])
        ok, margin = constraints_satisfied(psi, sets)
        self.assertTrue(ok)
        self.assertAlmostEqual(margin, 2.0)
        ok, margin = constraints_satisfied(HamiltonianCoefficients.zeros(3), sets)
        self.assertFalse(ok)
        self.assertEqual(margin, 0.0)

    def test_ground_aux_array(self):
        # h_3 > 0 makes a = -1 the lower-energy auxiliary spin on every row.
        psi = HamiltonianCoefficients.from_fields([0, 0, 2])
        ground = ground_aux_array(psi, self.table)
        np.testing.assert_array_equal(ground.values, [[-1], [-1]])


class CountingTests(SimpleTestCase):

    def test_six_spin_two_aux_system(self):
        shape = SystemShape(n=2, m=2, alpha=2)
        self.assertEqual(count_constraints(shape), 48)
        self.assertEqual(count_aux_arrays(shape), 256)

    def test_twelve_spin_four_aux_system(self):
        shape = SystemShape(n=4, m=4, alpha=4)
        self.assertEqual(count_constraints(shape), 3840)
        self.assertEqual(count_aux_arrays(shape), 2 ** 64)

    def test_no_auxiliary_spins(self):
        self.assertEqual(count_constraints(SystemShape(n=1, m=1)), 2)
        self.assertEqual(count_aux_arrays(SystemShape(n=3, m=3)), 1)

    def test_constraint_count_matches_enumeration(self):
        # Every (correct, wrong) pair over the 2^alpha auxiliary choices of every input.
        table = build_multiplier_truth_table(1, 1, alpha=2)
        total = 0
        for flat in enumerate_states(2):
            aux = AuxiliaryArray(np.tile(flat, (table.ell, 1)))
            sets = build_state_sets(table, aux, AUX_FIXED)
            total += sets.wrong_per_row * sets.ell
        self.assertEqual(total, count_constraints(table.shape))
