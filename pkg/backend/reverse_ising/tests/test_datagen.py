import math
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from backend.reverse_ising import datagen, solver
from backend.reverse_ising.boltzmann import ObjectiveConfig
from backend.reverse_ising.config import example_table
from backend.reverse_ising.exceptions import SamplingExhausted, SolverError
from backend.reverse_ising.ising_model import (
    AuxiliaryArray, TruthTable, build_multiplier_truth_table, build_state_sets,
)

BOX = (-4.0, 4.0)
FAST = solver.SolverOptions(starts=2, max_iterations=100, seed=3)


class SampleAuxArraysTests(SimpleTestCase):

    def setUp(self):
        self.table = build_multiplier_truth_table(1, 1, alpha=1)

    def test_no_auxiliary_spins(self):
        with self.assertLogs('backend.reverse_ising.datagen', level='WARNING'):
            arrays = datagen.sample_aux_arrays(example_table(), 10)
        self.assertEqual(len(arrays), 1)
        self.assertEqual(arrays[0].values.shape, (1, 0))

    def test_seeded_sampling_is_reproducible(self):
        first = datagen.sample_aux_arrays(self.table, 10, seed=5)
        second = datagen.sample_aux_arrays(self.table, 10, seed=5)
        self.assertEqual([a.key() for a in first], [a.key() for a in second])

    def test_arrays_are_distinct(self):
        arrays = datagen.sample_aux_arrays(self.table, 16, seed=1)
        self.assertEqual(len({a.key() for a in arrays}), 16)

    def test_count_is_capped_at_the_number_of_arrays(self):
        with self.assertLogs('backend.reverse_ising.datagen', level='WARNING'):
            arrays = datagen.sample_aux_arrays(self.table, 40, seed=1)
        self.assertEqual(len(arrays), 16)

    def test_balanced_sampling(self):
        # XOR needs a well-chosen auxiliary spin, so both classes exist.
        table = TruthTable.from_rows(
            [((-1, -1), (-1,)), ((-1, 1), (1,)), ((1, -1), (1,)), ((1, 1), (-1,))], alpha=1)
        arrays = datagen.sample_aux_arrays(table, 2, balance=0.5, seed=2, box=BOX)
        feasible = [solver.feasibility_check(build_state_sets(table, a), BOX, solver.SolverOptions()).feasible
                    for a in arrays]
        self.assertEqual(sorted(feasible), [False, True])

    def test_attempt_cap(self):
        with mock.patch.object(solver, 'feasibility_check', return_value=solver.Feasibility(False, -1.0)):
            with self.assertRaises(SamplingExhausted) as cm:
                datagen.sample_aux_arrays(self.table, 4, balance=1.0, seed=0, max_attempts=30)
        self.assertEqual(cm.exception.feasible, 0)
        self.assertEqual(cm.exception.arrays, [])

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            datagen.sample_aux_arrays(self.table, 0)
        with self.assertRaises(ValueError):
            datagen.sample_aux_arrays(self.table, 3, balance=1.5)


class GenerateDatasetTests(SimpleTestCase):

    def setUp(self):
        self.table = build_multiplier_truth_table(1, 1, alpha=1)
        self.arrays = datagen.sample_aux_arrays(self.table, 5, seed=7)

    def generate(self, arrays=None):
        return datagen.generate_dataset(self.table, arrays or self.arrays, ObjectiveConfig(), FAST, BOX,
                                        problem='1,1,1')

    def test_rows_and_manifest(self):
        dataset = self.generate()
        self.assertEqual(len(dataset.rows), 5)
        for row, aux in zip(dataset.rows, self.arrays):
            np.testing.assert_array_equal(row.aux, aux.flat())
            self.assertTrue(0.0 <= row.rho <= 1.0)
            self.assertAlmostEqual(row.rho, max(0.0, -math.expm1(row.f_star)), places=12)
        manifest = dataset.manifest
        self.assertEqual(manifest.rows, 5)
        self.assertEqual(manifest.solver, FAST)
        self.assertEqual(manifest.shape, self.table.shape)

    def test_row_seeds_do_not_depend_on_batch_size(self):
        full = self.generate()
        prefix = self.generate(self.arrays[:2])
        self.assertEqual([r.seed for r in prefix.rows], [r.seed for r in full.rows[:2]])
        self.assertEqual([r.rho for r in prefix.rows], [r.rho for r in full.rows[:2]])

    def test_duplicates_are_skipped(self):
        with self.assertLogs('backend.reverse_ising.datagen', level='WARNING'):
            dataset = self.generate([self.arrays[0], self.arrays[0], self.arrays[1]])
        self.assertEqual(len(dataset.rows), 2)

    def test_failed_solve_is_recorded(self):
        with mock.patch.object(solver, 'minimize', side_effect=SolverError('all starts failed')):
            with self.assertLogs('backend.reverse_ising.datagen', level='ERROR'):
                dataset = self.generate()
        self.assertTrue(all(not r.converged and math.isnan(r.rho) and math.isnan(r.f_star) for r in dataset.rows))
        self.assertTrue(dataset.manifest.degraded)
        self.assertEqual(dataset.manifest.non_converged, 5)
        self.assertEqual(dataset.manifest.failed, 5)

    def test_failed_rows_survive_the_file_and_leave_the_split(self):
        failures = [SolverError('all starts failed'), None, None, SolverError('all starts failed'), None]
        real_minimize = solver.minimize

        def flaky(*args, **kwargs):
            error = failures.pop(0)
            if error:
                raise error
            return real_minimize(*args, **kwargs)

        with mock.patch.object(solver, 'minimize', side_effect=flaky):
            with self.assertLogs('backend.reverse_ising.datagen', level='ERROR'):
                dataset = self.generate()
        self.assertEqual(dataset.manifest.failed, 2)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = datagen.read_dataset(datagen.write_dataset(dataset, Path(tmp) / 'data.csv'))
        self.assertEqual(sum(math.isnan(r.rho) for r in loaded.rows), 2)
        self.assertEqual(loaded.manifest.failed, 2)

        train, test = datagen.split_dataset(loaded.rows, 0.5, seed=0)
        self.assertEqual(len(train) + len(test), 3)
        self.assertTrue(all(math.isfinite(r.rho) for r in train + test))
        train, test = datagen.split_dataset(loaded.rows, 0.5, seed=0, keep_unlabelled=True)
        self.assertEqual(len(train) + len(test), 5)

    def test_manifest_defaults_to_the_default_solver(self):
        manifest = datagen.DatasetManifest(problem='x', shape=self.table.shape, box=BOX, lam=100.0, beta=1.0)
        self.assertEqual(manifest.solver, solver.SolverOptions())
        self.assertEqual(manifest.failed, 0)


class SplitTests(SimpleTestCase):

    def rows(self, count):
        return [datagen.DatasetRow(np.array([1], dtype=np.int8), i / count, 0.0, True, i) for i in range(count)]

    def test_ten_rows(self):
        train, test = datagen.split_dataset(self.rows(10), 0.8, seed=0)
        self.assertEqual((len(train), len(test)), (8, 2))

    def test_large_split(self):
        train, test = datagen.split_dataset(self.rows(64645), 0.8, seed=0)
        self.assertEqual((len(train), len(test)), (51716, 12929))

    def test_split_is_a_seeded_partition(self):
        rows = self.rows(30)
        train, test = datagen.split_dataset(rows, 0.7, seed=4)
        seeds = sorted(r.seed for r in train + test)
        self.assertEqual(seeds, list(range(30)))
        again, _ = datagen.split_dataset(rows, 0.7, seed=4)
        self.assertEqual([r.seed for r in train], [r.seed for r in again])

    def test_invalid_ratio(self):
        with self.assertRaises(ValueError):
            datagen.split_dataset(self.rows(4), 1.0, seed=0)


class DatasetFileTests(SimpleTestCase):

    def test_write_and_read(self):
        table = build_multiplier_truth_table(1, 1, alpha=1)
        arrays = [AuxiliaryArray(np.array([[1], [-1], [-1], [1]])), AuxiliaryArray(np.array([[-1], [-1], [1], [1]]))]
        dataset = datagen.generate_dataset(table, arrays, ObjectiveConfig(lam=50.0), FAST, BOX, problem='1,1,1')
        with tempfile.TemporaryDirectory() as tmp:
            path = datagen.write_dataset(dataset, Path(tmp) / 'data.csv')
            header = path.read_text().splitlines()[0]
            self.assertEqual(header, 'a_1,a_2,a_3,a_4,rho,f_star,converged,seed')
            loaded = datagen.read_dataset(path)
            first_bytes = path.read_bytes()
            datagen.write_dataset(dataset, path)
            self.assertEqual(path.read_bytes(), first_bytes)

        self.assertEqual(loaded.manifest.lam, 50.0)
        self.assertEqual(loaded.manifest.solver, FAST)
        self.assertEqual(loaded.manifest.problem, '1,1,1')
        for original, row in zip(dataset.rows, loaded.rows):
            np.testing.assert_array_equal(original.aux, row.aux)
            self.assertEqual(original.rho, row.rho)
            self.assertEqual(original.seed, row.seed)

    def test_manifest_split_ratio_is_validated(self):
        table = build_multiplier_truth_table(1, 1)
        with self.assertRaises(ValidationError):
            datagen.DatasetManifest(problem='x', shape=table.shape, box=BOX, lam=100.0, beta=1.0, split_ratio=1.5)
