"""
Write the truth table of a problem and report its size.

Usage:
    python manage.py truth_table --problem 1
    python manage.py truth_table --problem 1,1,0 --out toy.table
"""
from backend.reverse_ising.config import resolve_table
from backend.reverse_ising.ising_model import count_aux_arrays, count_constraints

from ._base import ReverseIsingCommand


class Command(ReverseIsingCommand):
    help = 'Write the truth table of a problem and print its shape and counts'

    def run(self, config, options):
        table = resolve_table(config)
        path = config.output_path('truth_table.txt')
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(table.to_text())

        shape = table.shape
        self.stdout.write(
            self.style.SUCCESS(
                f"Truth table written to {path}\n"
                f"  - Shape (N,n,alpha): {shape}\n"
                f"  - Rows (ell): {table.ell}\n"
                f"  - Constraints: {count_constraints(shape)}\n"
                f"  - Auxiliary arrays: {count_aux_arrays(shape)}"
            )
        )
