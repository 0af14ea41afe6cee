import math

import numpy as np
from django.test import SimpleTestCase, tag

from backend.reverse_ising import boltzmann
from backend.reverse_ising.boltzmann import ObjectiveConfig
from backend.reverse_ising.config import PROBLEMS, example_table
from backend.reverse_ising.exceptions import EnumerationLimitError
from backend.reverse_ising.ising_model import (
    AUX_FIXED, AUX_FREE_WRONG, AuxiliaryArray, HamiltonianCoefficients, TruthTable,
    build_multiplier_truth_table, build_state_sets, energies, enumerate_states, psi_dimension,
)


def problem_sets(problem, mode=AUX_FIXED, seed=0):
    preset = PROBLEMS[problem]
    table = build_multiplier_truth_table(preset.p_bits, preset.q_bits, preset.alpha)
    aux = AuxiliaryArray.random(table.ell, preset.alpha, np.random.default_rng(seed))
    return build_state_sets(table, aux, mode)


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class LogSumExpTests(SimpleTestCase):

    def test_equal_entries(self):
        self.assertAlmostEqual(boltzmann.log_sum_exp([0.0, 0.0]), math.log(2), places=12)

    def test_large_entries_do_not_overflow(self):
        self.assertAlmostEqual(boltzmann.log_sum_exp([1000.0, 1000.0]), 1000 + math.log(2), places=9)

    def test_empty_input(self):
        with self.assertRaises(ValueError):
            boltzmann.log_sum_exp([])


class ProbabilityTests(SimpleTestCase):

    def test_uniform_distribution_at_zero(self):
        psi = HamiltonianCoefficients.zeros(3)
        config = ObjectiveConfig()
        for s in enumerate_states(3):
            self.assertAlmostEqual(boltzmann.exact_state_probability(psi, s, config), 1 / 8, places=14)

    def test_partition_function_of_independent_spins(self):
        h = np.array([0.3, -1.2, 2.0, 0.0])
        psi = HamiltonianCoefficients.from_fields(h)
        expected = float(np.sum(np.log(2 * np.cosh(h))))
        self.assertAlmostEqual(boltzmann.log_partition(psi, ObjectiveConfig()), expected, places=10)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(11)
        config = ObjectiveConfig(beta=0.7)
        psi = HamiltonianCoefficients(rng.uniform(-2, 2, psi_dimension(10)))
        log_z = boltzmann.log_partition(psi, config)
        total = sum(float(np.exp(-config.beta * block - log_z).sum())
                    for _, _, block in boltzmann.iter_state_energies(psi, block_bits=6))
        self.assertAlmostEqual(total, 1.0, delta=1e-12)

    def test_enumeration_guard(self):
        with self.assertRaises(EnumerationLimitError):
            next(boltzmann.iter_state_energies(HamiltonianCoefficients.zeros(30)))

    def test_wrong_probability_at_zero(self):
        sets = problem_sets('1')
        config = ObjectiveConfig()
        for row in (0, 7, 15):
            self.assertAlmostEqual(boltzmann.wrong_probability(np.zeros(45), sets, row, config), 15 / 16)
            self.assertAlmostEqual(boltzmann.correct_probability(np.zeros(45), sets, row, config), 1 / 16)

    def test_wrong_probability_matches_two_state_closed_form(self):
        table = example_table()
        sets = build_state_sets(table, AuxiliaryArray.empty(1), AUX_FIXED)
        config = ObjectiveConfig()
        psi = HamiltonianCoefficients.from_fields([0.2, -0.4, -3.0], [0.5, 1.0, -0.25])
        correct, wrong = np.array([-1, 1, -1]), np.array([-1, 1, 1])
        gap = energies(psi, wrong[None])[0] - energies(psi, correct[None])[0]
        expected = 1 / (1 + math.exp(gap))
        self.assertAlmostEqual(boltzmann.wrong_probability(psi, sets, 0, config), expected, places=12)

    def test_wrong_probability_close_to_one_keeps_precision(self):
        sets = build_state_sets(example_table(), AuxiliaryArray.empty(1), AUX_FIXED)
        # The wrong state is 120 energy units below the correct one.
        psi = HamiltonianCoefficients.from_fields([0, 0, -60.0])
        log_pw = boltzmann.log_wrong_probabilities(psi, sets, ObjectiveConfig())[0]
        self.assertAlmostEqual(log_pw / -math.exp(-120.0), 1.0, places=10)


class ObjectiveTests(SimpleTestCase):

    def test_single_row_value_is_log_wrong_probability(self):
        sets = build_state_sets(example_table(), AuxiliaryArray.empty(1), AUX_FIXED)
        psi = np.array([0.5, -1.0, 2.0, 0.3, 0.1, -0.7])
        for lam in (1.0, 10.0, 1000.0):
            config = ObjectiveConfig(lam=lam)
            value = boltzmann.objective(psi, sets, config).value
            self.assertAlmostEqual(value, boltzmann.log_wrong_probabilities(psi, sets, config)[0], places=12)

    def test_zero_psi_value_bounds(self):
        sets = problem_sets('1')
        config = ObjectiveConfig()
        value = boltzmann.objective(np.zeros(45), sets, config).value
        low = math.log(15 / 16)
        self.assertGreaterEqual(value, low - 1e-12)
        self.assertLessEqual(value, low + math.log(16) / config.lam + 1e-12)

    def test_smoothed_max_sandwich(self):
        rng = np.random.default_rng(5)
        for problem in ('1', '2'):
            sets = problem_sets(problem, seed=1)
            lo, hi = PROBLEMS[problem].box
            for lam in (10.0, 100.0):
                config = ObjectiveConfig(lam=lam)
                for _ in range(50):
                    evaluation = boltzmann.objective(rng.uniform(lo, hi, sets.dimension), sets, config)
                    top = evaluation.max_log_pW
                    slack = 1e-12 * max(1.0, abs(top))
                    self.assertGreaterEqual(evaluation.value, top - slack)
                    self.assertLessEqual(evaluation.value, top + math.log(sets.ell) / lam + slack)

    def test_value_does_not_increase_with_lambda(self):
        sets = problem_sets('1', seed=3)
        rng = np.random.default_rng(9)
        for psi in rng.uniform(-4, 4, (10, sets.dimension)):
            values = [boltzmann.objective(psi, sets, ObjectiveConfig(lam=lam)).value
                      for lam in (1.0, 10.0, 100.0, 1000.0)]
            for smaller, larger in zip(values, values[1:]):
                self.assertLessEqual(larger, smaller + 1e-12 * max(1.0, abs(smaller)))
            self.assertGreaterEqual(values[-1], np.max(boltzmann.log_wrong_probabilities(psi, sets, ObjectiveConfig())) - 1e-9)

    def test_large_weights_stay_finite(self):
        sets = problem_sets('1')
        rng = np.random.default_rng(4)
        config = ObjectiveConfig()
        for _ in range(5):
            psi = rng.uniform(-1, 1, sets.dimension)
            psi *= 1e4 / np.max(np.abs(psi))
            evaluation = boltzmann.evaluate(psi, sets, config)
            self.assertTrue(math.isfinite(evaluation.value))
            self.assertTrue(np.all(np.isfinite(evaluation.gradient)))
            self.assertTrue(0.0 <= boltzmann.rho(evaluation.value) <= 1.0)

    def test_large_weights_match_the_closed_form(self):
        sets = build_state_sets(example_table(), AuxiliaryArray.empty(1), AUX_FIXED)
        # The wrong state sits 2e4 energy units above the correct one.
        psi = HamiltonianCoefficients.from_fields([0, 0, 1e4])
        value = boltzmann.objective(psi, sets, ObjectiveConfig()).value
        self.assertAlmostEqual(value / -2e4, 1.0, places=12)

    def test_rho_in_unit_interval(self):
        sets = problem_sets('1', mode=AUX_FREE_WRONG)
        evaluation = boltzmann.objective(np.random.default_rng(2).uniform(-4, 4, 45), sets, ObjectiveConfig(lam=1000))
        self.assertTrue(0.0 <= evaluation.rho <= 1.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(ValueError):
            boltzmann.objective(np.zeros(10), problem_sets('1'), ObjectiveConfig())

    def test_rho(self):
        self.assertEqual(boltzmann.rho(0.0), 0.0)
        self.assertEqual(boltzmann.rho(-math.inf), 1.0)
        self.assertAlmostEqual(boltzmann.rho(math.log(0.5)), 0.5, places=15)


class GradientTests(SimpleTestCase):

    def assertGradientMatches(self, sets, points, config=ObjectiveConfig(), rtol=1e-4, atol=1e-4):
        for psi in points:
            analytic = boltzmann.gradient(psi, sets, config)
            numeric = boltzmann.finite_difference_gradient(psi, sets, config, h=1e-5)
            np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)

    def test_central_difference_of_linear_function(self):
        c = np.array([1.5, -2.0, 0.25])
        grad = boltzmann.central_difference(lambda x: float(c @ x), np.array([0.3, 0.1, -4.0]))
        np.testing.assert_allclose(grad, c, atol=1e-9)

    def test_toy_multiplier(self):
        table = build_multiplier_truth_table(1, 1, alpha=1)
        sets = build_state_sets(table, AuxiliaryArray(np.array([[1], [-1], [-1], [1]])), AUX_FREE_WRONG)
        rng = np.random.default_rng(0)
        self.assertGradientMatches(sets, rng.uniform(-4, 4, (10, sets.dimension)))

    def test_problem_one_near_the_origin(self):
        sets = problem_sets('1')
        rng = np.random.default_rng(1)
        for psi in rng.uniform(-0.5, 0.5, (5, sets.dimension)):
            analytic = boltzmann.gradient(psi, sets, ObjectiveConfig())
            numeric = boltzmann.finite_difference_gradient(psi, sets, ObjectiveConfig(), h=1e-5)
            self.assertLessEqual(relative_error(analytic, numeric), 1e-5)

    def test_problem_one_whole_range(self):
        sets = problem_sets('1')
        lo, hi = PROBLEMS['1'].box
        rng = np.random.default_rng(2)
        self.assertGradientMatches(sets, rng.uniform(lo, hi, (5, sets.dimension)))

    def test_symmetric_table_balanced_fields(self):
        # Identity on one spin: at psi = 0 the field gradients of u and v cancel by symmetry.
        table = TruthTable.from_rows([((-1,), (-1,)), ((1,), (1,))])
        sets = build_state_sets(table, AuxiliaryArray.empty(2), AUX_FIXED)
        grad = boltzmann.gradient(np.zeros(3), sets, ObjectiveConfig())
        np.testing.assert_allclose(grad[:2], 0.0, atol=1e-12)
        self.assertGreater(grad[2], 0.0)
        self.assertGradientMatches(sets, [np.zeros(3)])

    @tag('slow')
    def test_all_problem_shapes(self):
        rng = np.random.default_rng(7)
        for problem, preset in PROBLEMS.items():
            sets = problem_sets(problem)
            lo, hi = preset.box
            self.assertGradientMatches(sets, rng.uniform(lo, hi, (20, sets.dimension)))
            self.assertGradientMatches(sets, rng.uniform(-0.5, 0.5, (5, sets.dimension)))
