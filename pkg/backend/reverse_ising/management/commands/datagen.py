"""
Generate (auxiliary array, rho) training rows.

Usage:
    python manage.py datagen --problem 1 --count 5000
    python manage.py datagen --problem 1 --count 200 --balance 0.5 --out runs/p1.csv
"""
from django.core.exceptions import ImproperlyConfigured

from backend.reverse_ising import datagen
from backend.reverse_ising.config import resolve_table

from ._base import ReverseIsingCommand


class Command(ReverseIsingCommand):
    help = 'Sample auxiliary arrays, solve each one and write the labelled dataset'

    def add_command_arguments(self, parser):
        parser.add_argument('--count', type=int, default=100, help='Number of auxiliary arrays')

    def run(self, config, options):
        table = resolve_table(config)
        count = options.get('count')
        if count is None or count < 1:
            raise ImproperlyConfigured(f"--count must be at least 1, got {count}")
        self.stdout.write(f'Sampling {count} auxiliary arrays for {table.shape}...')
        arrays = datagen.sample_aux_arrays(
            table, count, balance=config.balance, seed=config.seed, box=config.box,
            opts=config.solver_options, mode=config.mode,
        )

        self.stdout.write(f'Solving {len(arrays)} systems...')
        dataset = datagen.generate_dataset(
            table, arrays, config.objective, config.solver_options, config.box,
            mode=config.mode, correct_aux_free=config.correct_aux_free, problem=config.problem,
            split_ratio=config.split_ratio, balance=config.balance,
        )
        path = datagen.write_dataset(dataset, config.output_path('dataset.csv'))

        manifest = dataset.manifest
        style = self.style.WARNING if manifest.degraded else self.style.SUCCESS
        self.stdout.write(
            style(
                f"Dataset written to {path}\n"
                f"  - Rows: {manifest.rows}\n"
                f"  - Not converged: {manifest.non_converged} ({manifest.failed} failed)"
                f"{' (degraded)' if manifest.degraded else ''}\n"
                f"  - Manifest: {datagen.manifest_path(path)}"
            )
        )
