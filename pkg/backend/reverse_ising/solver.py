"""
Box-constrained minimization of the smoothed failure objective.

The optimizer is a projected limited-memory quasi-Newton method: the L-BFGS
two-loop direction restricted to the free variables, followed by a projected
backtracking line search with a sufficient-decrease test. Accepted steps never
increase f. The first start is the centre of the dynamic range and the remaining starts
are drawn uniformly from it; the lowest local minimum wins. A start that halts
above the centre value sat on a saturated plateau and is not converged.
"""
import json
import logging
from collections import deque
from dataclasses import asdict, dataclass, replace
from typing import Callable, List, NamedTuple, Optional, TextIO, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from . import boltzmann
from .boltzmann import ObjectiveConfig
from .exceptions import SolverError
from .ising_model import HamiltonianCoefficients, StateSets, coefficient_values

logger = logging.getLogger(__name__)

ANALYTIC = 'analytic'
FINITE_DIFFERENCE = 'finite-difference'
GRADIENT_MODES = (ANALYTIC, FINITE_DIFFERENCE)

SUFFICIENT_DECREASE = 1e-4
MAX_BACKTRACKS = 40
CURVATURE_EPS = 1e-12
FEASIBILITY_TOLERANCE = 1e-6
FINITE_DIFFERENCE_STEP = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    step_tolerance: float = 1e-10
    starts: int = 8
    seed: int = 0
    memory: int = 10

    def __post_init__(self):
        if self.max_iterations < 1 or self.starts < 1 or self.memory < 1:
            raise ValidationError("max_iterations, starts and memory must be at least 1")
        if not (self.gradient_tolerance > 0 and self.step_tolerance > 0):
            raise ValidationError("solver tolerances must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")


@dataclass(frozen=True)
class TraceRecord:
    start: int
    iteration: int
    f: float
    step_norm: float
    projected_gradient_norm: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass(frozen=True, eq=False)
class StartOutcome:
    start: int
    x: Optional[np.ndarray]
    f: float
    iterations: int
    converged: bool
    failure: Optional[str] = None


@dataclass(frozen=True, eq=False)
class SolveResult:
    psi_star: HamiltonianCoefficients
    f_star: float
    rho: float
    iterations: int
    converged: bool
    per_start_values: Tuple[float, ...]


class Feasibility(NamedTuple):
    feasible: bool
    margin: float


def _two_loop(g: np.ndarray, memory) -> np.ndarray:
    """L-BFGS approximation of H^{-1} g from the stored (s, y) pairs."""
    q = g.copy()
    coefficients = []
    for s, y in reversed(memory):
        rho_k = 1.0 / (y @ s)
        a = rho_k * (s @ q)
        q -= a * y
        coefficients.append((rho_k, a))
    if memory:
        s, y = memory[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho_k, a) in zip(memory, reversed(coefficients)):
        b = rho_k * (y @ q)
        q += s * (a - b)
    return q


def projected_lbfgs(fun: Callable[[np.ndarray], Tuple[float, np.ndarray]], x0: np.ndarray,
                    lo: float, hi: float, opts: SolverOptions, start: int = 0,
                    trace: Optional[TextIO] = None) -> StartOutcome:
    """Run one start of the projected quasi-Newton descent."""
    x = np.clip(np.asarray(x0, dtype=np.float64), lo, hi)
    f, g = fun(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        return StartOutcome(start, None, np.nan, 0, False, f"non-finite objective at the initial point (f={f})")

    memory = deque(maxlen=opts.memory)
    converged = False
    iteration = 0
    while iteration < opts.max_iterations:
        pg_norm = float(np.max(np.abs(x - np.clip(x - g, lo, hi)), initial=0.0))
        if pg_norm <= opts.gradient_tolerance:
            converged = True
            break
        iteration += 1

        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free_g = np.where(active, 0.0, g)
        direction = -_two_loop(free_g, memory)
        direction[active] = 0.0
        if not direction @ g < 0:
            memory.clear()
            direction = -free_g

        t = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = np.clip(x + t * direction, lo, hi)
            step = x_new - x
            f_new, g_new = fun(x_new)
            if f_new <= f + SUFFICIENT_DECREASE * min(g @ step, 0.0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if memory:
                memory.clear()
                continue
            if not np.isfinite(f_new):
                return StartOutcome(start, None, np.nan, iteration, False,
                                    f"non-finite objective along the search direction at iteration {iteration}")
            logger.debug(f"start {start}: line search stalled at iteration {iteration} (f={f:.6g})")
            break
        if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
            return StartOutcome(start, None, np.nan, iteration, False,
                                f"non-finite objective at iteration {iteration} (f={f_new})")

        y = g_new - g
        if step @ y > CURVATURE_EPS * (step @ step):
            memory.append((step, y))
        step_norm = float(np.max(np.abs(step), initial=0.0))
        x, f, g = x_new, f_new, g_new

        record = TraceRecord(start, iteration, float(f), step_norm, pg_norm)
        logger.debug(f"start {start} iteration {iteration}: f={f:.10g} step={step_norm:.3g} pg={pg_norm:.3g}")
        if trace is not None:
            trace.write(record.to_json() + '\n')
        if step_norm <= opts.step_tolerance:
            converged = True
            break

    return StartOutcome(start, x, float(f), iteration, converged)


def _objective_function(sets: StateSets, config: ObjectiveConfig, gradient_mode: str):
    if gradient_mode == ANALYTIC:
        def fun(x):
            evaluation = boltzmann.evaluate(x, sets, config)
            return evaluation.value, evaluation.gradient
    elif gradient_mode == FINITE_DIFFERENCE:
        def fun(x):
            value = boltzmann.objective(x, sets, config).value
            return value, boltzmann.finite_difference_gradient(x, sets, config, FINITE_DIFFERENCE_STEP)
    else:
        raise ValueError(f"unknown gradient mode {gradient_mode!r}; expected one of {GRADIENT_MODES}")
    return fun


def box_centre(dimension: int, box: Tuple[float, float]) -> np.ndarray:
    lo, hi = box
    return np.full(dimension, 0.5 * (lo + hi))


def _initial_points(dimension: int, box: Tuple[float, float], opts: SolverOptions,
                    initial=None) -> List[np.ndarray]:
    lo, hi = box
    rng = np.random.default_rng(opts.seed)
    points = [box_centre(dimension, box)]
    points += [rng.uniform(lo, hi, size=dimension) for _ in range(opts.starts - 1)]
    if initial is not None:
        points.insert(0, np.array(coefficient_values(initial), dtype=np.float64))
        points = points[:opts.starts]
    return points


def minimize(sets: StateSets, box: Tuple[float, float], config: ObjectiveConfig,
             opts: SolverOptions, gradient_mode: str = ANALYTIC, initial=None,
             trace: Optional[TextIO] = None) -> SolveResult:
    """
    Minimize f(psi) over the box from ``opts.starts`` starting points.

    Start 0 is the box centre (psi = 0 for a symmetric range), the others are
    uniform draws. ``initial`` goes first and pushes the centre to start 1.
    A start that stops with f above the centre value is reported as not
    converged: large weights saturate the sigmoids and the gradient vanishes
    there. Raises SolverError when no start produces a finite objective.
    """
    lo, hi = float(box[0]), float(box[1])
    if not lo < hi:
        raise ValidationError(f"empty dynamic range [{lo}, {hi}]")
    fun = _objective_function(sets, config, gradient_mode)
    f_centre = fun(box_centre(sets.dimension, (lo, hi)))[0]

    outcomes = []
    for start, x0 in enumerate(_initial_points(sets.dimension, (lo, hi), opts, initial)):
        outcome = projected_lbfgs(fun, x0, lo, hi, opts, start, trace)
        if outcome.failure:
            logger.warning(f"start {start} aborted: {outcome.failure}")
        elif outcome.converged and np.isfinite(f_centre) and outcome.f > f_centre:
            logger.debug(f"start {start} stalled on a plateau at f={outcome.f:.6g} above the centre value {f_centre:.6g}")
            outcome = replace(outcome, converged=False)
        outcomes.append(outcome)

    finished = [o for o in outcomes if o.failure is None]
    if not finished:
        raise SolverError(f"all {len(outcomes)} starts failed", [o.failure for o in outcomes])
    best = min(finished, key=lambda o: (o.f, o.start))
    logger.info(f"Solved {sets.shape}: f*={best.f:.6g} rho={boltzmann.rho(best.f):.6f} "
                f"after {best.iterations} iterations (converged={best.converged})")
    return SolveResult(
        psi_star=HamiltonianCoefficients(best.x, (lo, hi)),
        f_star=best.f,
        rho=boltzmann.rho(best.f),
        iterations=best.iterations,
        converged=best.converged,
        per_start_values=tuple(o.f for o in outcomes),
    )


def _constraint_differences(sets: StateSets) -> np.ndarray:
    """Rows phi(wrong) - phi(correct) for every correct/wrong pair of every row."""
    diff = sets.wrong[:, None, :, :] - sets.correct[None, :, :, :]
    return diff.reshape(-1, sets.dimension)


def feasibility_check(sets: StateSets, box: Tuple[float, float], opts: SolverOptions) -> Feasibility:
    """
    Decide whether psi in the box can make every correct state strictly lower
    in energy than every wrong state of its row.

    Minimizes sum max(0, 1 + H(correct) - H(wrong))^2 from psi = 0 (the loss is
    convex, one start suffices). Feasible when the loss reaches
    FEASIBILITY_TOLERANCE with a positive margin; the margin is
    min(H(wrong) - H(correct)) at the solution.
    """
    lo, hi = float(box[0]), float(box[1])
    differences = _constraint_differences(sets)

    def fun(x):
        slack = np.maximum(0.0, 1.0 - differences @ x)
        return float(slack @ slack), -2.0 * (slack @ differences)

    outcome = projected_lbfgs(fun, np.clip(np.zeros(sets.dimension), lo, hi), lo, hi, opts)
    if outcome.failure:
        raise SolverError(f"feasibility check failed: {outcome.failure}", [outcome.failure])
    margin = float(np.min(differences @ outcome.x))
    feasible = outcome.f <= FEASIBILITY_TOLERANCE and margin > 0
    logger.debug(f"feasibility {sets.shape}: loss={outcome.f:.3g} margin={margin:.4g}")
    return Feasibility(feasible, margin)
