"""
Time rho computation four ways: solver with finite-difference gradients,
solver with the analytic gradient, forest prediction and MLP prediction.

Both model files are required whenever arrays are timed. The analytic solve
must beat finite differences and each predictor must beat the analytic solve;
otherwise the tables are still written and the command exits with status 3.

Usage:
    python manage.py bench --problem 1 --count 20 --forest forest.json --mlp mlp.json
"""
import time
from pathlib import Path

import pandas as pd
from django.core.exceptions import ImproperlyConfigured

from backend.reverse_ising import datagen, solver, surrogate
from backend.reverse_ising.config import resolve_table
from backend.reverse_ising.exceptions import BenchmarkOrderingError
from backend.reverse_ising.ising_model import build_state_sets

from ._base import ReverseIsingCommand

COLUMNS = ['method', 'count', 'total_seconds', 'mean_seconds']
DEFAULT_BALANCE = 0.5
MODEL_KINDS = ('forest', 'mlp')


def timing_row(method, seconds):
    total = float(sum(seconds))
    return {
        'method': method,
        'count': len(seconds),
        'total_seconds': total,
        'mean_seconds': total / len(seconds) if seconds else 0.0,
    }


class Command(ReverseIsingCommand):
    help = 'Benchmark the solver against the surrogate predictors'

    def add_command_arguments(self, parser):
        parser.add_argument('--count', type=int, default=20, help='Auxiliary arrays to time')
        parser.add_argument('--forest', help='Forest model file to include')
        parser.add_argument('--mlp', help='MLP model file to include')

    def run(self, config, options):
        table = resolve_table(config)
        count = options.get('count') or 0
        missing = [f'--{kind}' for kind in MODEL_KINDS if not options.get(kind)]
        if count > 0 and missing:
            raise ImproperlyConfigured(f"timing {count} arrays needs {' and '.join(missing)}")
        models = {kind: surrogate.load_model(options[kind]) for kind in MODEL_KINDS if options.get(kind)}

        rows = []
        if count > 0:
            balance = DEFAULT_BALANCE if config.balance is None else config.balance
            self.stdout.write(f'Sampling {count} auxiliary arrays ({balance:.0%} feasible)...')
            arrays = datagen.sample_aux_arrays(
                table, count, balance=balance, seed=config.seed, box=config.box,
                opts=config.solver_options, mode=config.mode,
            )
            rows = self.time_methods(table, arrays, config, models)

        frame = pd.DataFrame(rows, columns=COLUMNS)
        table_text = frame.to_string(index=False) if rows else '  '.join(COLUMNS)
        text_path = config.output_path('bench.txt')
        text_path.parent.mkdir(parents=True, exist_ok=True)
        text_path.write_text(table_text + '\n')
        csv_path = Path(text_path).with_suffix('.csv')
        frame.to_csv(csv_path, index=False, lineterminator='\n')

        self.stdout.write(table_text)
        self.report_ratios(frame)
        self.stdout.write(self.style.SUCCESS(f"Benchmark written to {text_path} and {csv_path}"))

    def time_methods(self, table, arrays, config, models):
        timings = {solver.FINITE_DIFFERENCE: [], solver.ANALYTIC: []}
        for aux in arrays:
            sets = build_state_sets(table, aux, config.mode, config.correct_aux_free)
            for mode in timings:
                began = time.perf_counter()
                solver.minimize(sets, config.box, config.objective, config.solver_options, gradient_mode=mode)
                timings[mode].append(time.perf_counter() - began)

        rows = [timing_row(f'solver ({mode} gradient)', seconds) for mode, seconds in timings.items()]
        for kind, model in models.items():
            seconds = []
            for aux in arrays:
                began = time.perf_counter()
                surrogate.predict(model, aux.flat()[None, :])
                seconds.append(time.perf_counter() - began)
            rows.append(timing_row(f'{kind} predictor', seconds))
        return rows

    def report_ratios(self, frame):
        if frame.empty:
            return
        mean = dict(zip(frame['method'], frame['mean_seconds']))
        finite = mean[f'solver ({solver.FINITE_DIFFERENCE} gradient)']
        analytic = mean[f'solver ({solver.ANALYTIC} gradient)']
        self.stdout.write(f'Finite-difference / analytic: {finite / analytic:.1f}x')
        violations = []
        if not analytic < finite:
            violations.append('the analytic-gradient solve was not faster than finite differences')
        for kind in MODEL_KINDS:
            predictor = mean.get(f'{kind} predictor')
            if predictor is None:
                continue
            speedup = analytic / predictor if predictor > 0 else float('inf')
            self.stdout.write(f'Analytic solve / {kind} prediction: {speedup:.0f}x')
            if not predictor < analytic:
                violations.append(f'{kind} prediction was not faster than the analytic solve')
        if violations:
            raise BenchmarkOrderingError('; '.join(violations))
