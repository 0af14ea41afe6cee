"""
Minimize the smoothed failure probability for one auxiliary array.

Usage:
    python manage.py solve --problem example
    python manage.py solve --problem 1 --aux 0110100110010110 --trace trace.jsonl
"""
import contextlib

from django.core.exceptions import ImproperlyConfigured

from backend.reverse_ising import solver
from backend.reverse_ising.config import resolve_table
from backend.reverse_ising.ising_model import (
    AuxiliaryArray, build_state_sets, constraints_satisfied, spin_encode,
)

from ._base import ReverseIsingCommand


def parse_aux(bits: str, ell: int, alpha: int) -> AuxiliaryArray:
    """``bits`` holds alpha 0/1 digits per truth-table row, rows in order."""
    if not bits:
        return AuxiliaryArray.from_flat([-1] * (ell * alpha), ell, alpha)
    digits = bits.replace(',', '').replace(' ', '')
    if len(digits) != ell * alpha or set(digits) - {'0', '1'}:
        raise ImproperlyConfigured(f"--aux needs {ell * alpha} binary digits, got {bits!r}")
    return AuxiliaryArray.from_flat(spin_encode(int(d) for d in digits), ell, alpha)


class Command(ReverseIsingCommand):
    help = 'Solve the reverse Ising problem for one auxiliary array'

    def add_command_arguments(self, parser):
        parser.add_argument('--aux', default='', help='Auxiliary array as 0/1 digits (default all 0)')
        parser.add_argument('--trace', help='Write per-iteration JSON lines to this file')
        parser.add_argument(
            '--gradient',
            choices=solver.GRADIENT_MODES,
            default=solver.ANALYTIC,
            help='Analytic gradient or central finite differences',
        )

    def run(self, config, options):
        table = resolve_table(config)
        aux = parse_aux(options.get('aux') or '', table.ell, table.shape.alpha)
        sets = build_state_sets(table, aux, config.mode, config.correct_aux_free)
        trace_path = options.get('trace')

        self.stdout.write(f'Solving {table.shape} with {config.starts} starts...')
        with contextlib.ExitStack() as stack:
            trace = stack.enter_context(open(trace_path, 'w')) if trace_path else None
            result = solver.minimize(
                sets, config.box, config.objective, config.solver_options,
                gradient_mode=options.get('gradient') or solver.ANALYTIC, trace=trace,
            )
        ordered, margin = constraints_satisfied(result.psi_star, sets)

        results = {
            'f_star': result.f_star,
            'rho': result.rho,
            'iterations': result.iterations,
            'converged': result.converged,
            'strict_ordering': ordered,
            'margin': margin,
            'psi': [float(v) for v in result.psi_star.values],
            'trace': trace_path or '',
        }
        report = config.output_path('solve.report')
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(config.to_text(results))

        style = self.style.SUCCESS if result.converged else self.style.WARNING
        self.stdout.write(
            style(
                f"Solve completed:\n"
                f"  - f*: {result.f_star!r}\n"
                f"  - rho: {result.rho!r}\n"
                f"  - Iterations: {result.iterations} (converged={result.converged})\n"
                f"  - Strict ordering: {'yes' if ordered else 'no'} (margin {margin:.6g})\n"
                f"  - psi*: {' '.join(f'{v:.6g}' for v in result.psi_star.values)}\n"
                f"  - Report: {report}"
                + (f"\n  - Trace: {trace_path}" if trace_path else '')
            )
        )
