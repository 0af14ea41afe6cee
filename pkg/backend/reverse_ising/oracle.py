"""
Brute-force and sampling ground truth for small spin systems.

Nothing here is used by the production pipeline; it exists to check the
Boltzmann kernels, rank auxiliary arrays on toy problems and confirm that
solved systems settle where the probabilities say they should.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .boltzmann import ObjectiveConfig, iter_state_energies, log_wrong_probabilities, rho
from .exceptions import EnumerationLimitError
from .ising_model import (
    AUX_FIXED, AuxiliaryArray, HamiltonianCoefficients, StateSets, TruthTable,
    build_state_sets, enumerate_states, state_index,
)

logger = logging.getLogger(__name__)

MAX_DISTRIBUTION_SPINS = 20
MAX_AUX_SEARCH_BITS = 16
GRID_POINTS = 5
GRID_RANK = 2
DEFAULT_BURN_IN = 0.1


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    """Probabilities of all 2^N states in ``enumerate_states(N)`` order."""
    probabilities: np.ndarray
    log_probabilities: np.ndarray

    @property
    def N(self) -> int:
        return int(self.probabilities.size).bit_length() - 1

    def probability(self, s) -> float:
        return float(self.probabilities[state_index(s)])

    def most_likely_state(self) -> np.ndarray:
        return enumerate_states(self.N)[int(np.argmax(self.probabilities))]


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    counts: np.ndarray
    burn_in: int

    @property
    def visits(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / max(self.visits, 1)

    def total_variation(self, exact: ExactDistribution) -> float:
        return float(0.5 * np.abs(self.frequencies - exact.probabilities).sum())


@dataclass(frozen=True, eq=False)
class AuxSearchResult:
    best: AuxiliaryArray
    rho: float
    evaluated: int


def enumerate_distribution(psi, config: ObjectiveConfig) -> ExactDistribution:
    """Exact Boltzmann distribution by enumeration of every state (N <= 20)."""
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    if psi.N > MAX_DISTRIBUTION_SPINS:
        raise EnumerationLimitError(
            f"refusing to tabulate 2^{psi.N} probabilities (limit N <= {MAX_DISTRIBUTION_SPINS})"
        )
    log_weights = np.concatenate([-config.beta * block for _, _, block in iter_state_energies(psi)])
    log_p = log_weights - logsumexp(log_weights)
    return ExactDistribution(np.exp(log_p), log_p)


def _grid_points(dimension: int, box: Tuple[float, float], points: int, rank: int,
                 rng: np.random.Generator) -> np.ndarray:
    """
    Coarse grid on a random rank-``rank`` subspace: psi = clip(sum_k c_k B_k)
    with c_k on ``points`` evenly spaced values in [-1, 1] and orthonormal
    directions B_k scaled to the box half-width. Returns (points^rank, D).
    """
    lo, hi = box
    center, half_width = (lo + hi) / 2, (hi - lo) / 2
    basis, _ = np.linalg.qr(rng.standard_normal((dimension, rank)))
    basis = basis.T * half_width * np.sqrt(dimension)
    levels = np.linspace(-1.0, 1.0, points)
    coefficients = np.array(list(itertools.product(levels, repeat=rank)))
    return np.clip(center + coefficients @ basis, lo, hi)


def grid_search(sets: StateSets, box: Tuple[float, float], config: ObjectiveConfig,
                points: int = GRID_POINTS, rank: int = GRID_RANK, seed: int = 0) -> float:
    """Best exact min-max rho over the coarse psi grid for one set of states."""
    grid = _grid_points(sets.dimension, box, points, rank, np.random.default_rng(seed))
    worst = min(float(np.max(log_wrong_probabilities(psi, sets, config))) for psi in grid)
    return rho(worst)


def brute_force_best_aux(table: TruthTable, box: Tuple[float, float], config: ObjectiveConfig,
                         points: int = GRID_POINTS, rank: int = GRID_RANK, seed: int = 0,
                         mode: str = AUX_FIXED) -> AuxSearchResult:
    """
    Rank every auxiliary array of the table by its coarse-grid rho.

    The same grid is used for every array; this is a ranking heuristic, not
    the optimum rho of any array. Limited to alpha * ell <= 16.
    """
    alpha, ell = table.shape.alpha, table.ell
    if alpha * ell > MAX_AUX_SEARCH_BITS:
        raise EnumerationLimitError(
            f"{alpha * ell} auxiliary bits exceed the exhaustive-search limit of {MAX_AUX_SEARCH_BITS}"
        )
    best, best_rho, evaluated = None, -np.inf, 0
    for flat in enumerate_states(alpha * ell):
        aux = AuxiliaryArray.from_flat(flat, ell, alpha)
        candidate = grid_search(build_state_sets(table, aux, mode), box, config, points, rank, seed)
        evaluated += 1
        if candidate > best_rho:
            best, best_rho = aux, candidate
    logger.info(f"Searched {evaluated} auxiliary arrays: best grid rho={best_rho:.4f}")
    return AuxSearchResult(best, best_rho, evaluated)


def metropolis_sample(psi, config: ObjectiveConfig, steps: int, seed: int,
                      burn_in: float = DEFAULT_BURN_IN,
                      initial: Optional[np.ndarray] = None) -> EmpiricalDistribution:
    """
    Single-spin-flip Metropolis chain with acceptance min(1, exp(-beta dH)).

    The first ``burn_in`` fraction of steps is discarded; every later step
    (accepted or not) counts one visit to the current state.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    N = psi.N
    if N > MAX_DISTRIBUTION_SPINS:
        raise EnumerationLimitError(f"visit table for N={N} exceeds the limit N <= {MAX_DISTRIBUTION_SPINS}")
    rng = np.random.default_rng(seed)
    couplings = psi.coupling_matrix()
    couplings = couplings + couplings.T
    fields = psi.h

    spins = (np.asarray(initial, dtype=np.float64).copy() if initial is not None
             else rng.choice([-1.0, 1.0], size=N))
    index = state_index(spins.astype(np.int8))
    sites = rng.integers(0, N, size=steps)
    thresholds = np.log(rng.random(steps))
    discard = int(burn_in * steps)
    counts = np.zeros(1 << N, dtype=np.int64)

    for step in range(steps):
        i = sites[step]
        delta = -2.0 * spins[i] * (fields[i] + couplings[i] @ spins)
        if thresholds[step] < -config.beta * delta:
            spins[i] = -spins[i]
            index ^= 1 << int(i)
        if step >= discard:
            counts[index] += 1
    return EmpiricalDistribution(counts, discard)
