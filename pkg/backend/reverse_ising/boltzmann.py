"""
Boltzmann probabilities and the smoothed min-max failure objective.

States are weighted by exp(-beta H), so the lowest energy is the most likely
state. All probability arithmetic happens in log space; probabilities are
exponentiated only when handed back to a caller.

For a StateSets with correct tensor R (k_R, ell, D) and wrong tensor W
(k_W, ell, D), row i has

    log p_W(i) = LSE_W(-beta W psi) - LSE_{R+W}(-beta [R; W] psi)

and the objective is the smoothed maximum

    f(psi) = (1/lambda) LSE_i(lambda log p_W(i)).

Its gradient is sum_i softmax(lambda log p_W)_i * beta p_R(i) (E_R(i) - E_W(i)),
where E_R(i), E_W(i) are the Boltzmann-weighted mean feature rows of the
correct and wrong states of row i.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from scipy.special import expit, logsumexp

from .exceptions import EnumerationLimitError
from .ising_model import (
    HamiltonianCoefficients, StateSets, coefficient_values, energies, enumerate_states,
)

logger = logging.getLogger(__name__)

MAX_ENUMERATION_SPINS = 26
ENUMERATION_BLOCK_BITS = 16


@dataclass(frozen=True)
class ObjectiveConfig:
    """Inverse temperature beta (beta T = 1 by default) and max-smoothing sharpness lambda."""
    beta: float = 1.0
    lam: float = 100.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be positive (got {self.beta})")
        if not self.lam >= 1:
            raise ValidationError(f"lambda must be at least 1 (got {self.lam})")


@dataclass(frozen=True, eq=False)
class ObjectiveEvaluation:
    value: float
    per_row_log_pW: np.ndarray
    gradient: Optional[np.ndarray] = None

    @property
    def max_log_pW(self) -> float:
        return float(np.max(self.per_row_log_pW))

    @property
    def rho(self) -> float:
        return rho(self.value)


def log_sum_exp(xs, axis=None):
    """max(xs) + log sum exp(xs - max(xs)); overflow-free for finite inputs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    return logsumexp(xs, axis=axis)


def _weighted_feature_mean(lse: np.ndarray, features: np.ndarray,
                           exponents: np.ndarray) -> np.ndarray:
    """
    sum_k exp(exponents[k] - lse) * features[k] per row, i.e. the
    Boltzmann-weighted mean feature row with the normaliser taken as an offset.
    """
    weights = np.exp(exponents - lse)
    return np.einsum('kl,kld->ld', weights, features)


def _row_terms(values: np.ndarray, sets: StateSets, beta: float):
    if values.size != sets.dimension:
        raise ValueError(f"psi has {values.size} coefficients, state sets need {sets.dimension}")
    r = sets.correct @ values
    w = sets.wrong @ values
    lse_r = logsumexp(-beta * r, axis=0)
    lse_w = logsumexp(-beta * w, axis=0)
    return r, w, lse_r, lse_w


def _log_wrong(lse_r: np.ndarray, lse_w: np.ndarray) -> np.ndarray:
    """log p_W = -log(1 + exp(lse_R - lse_W)), accurate also when p_W is close to 1."""
    return -np.logaddexp(0.0, lse_r - lse_w)


def log_wrong_probabilities(psi, sets: StateSets, config: ObjectiveConfig) -> np.ndarray:
    """log p_W for every truth-table row, shape (ell,)."""
    _, _, lse_r, lse_w = _row_terms(coefficient_values(psi), sets, config.beta)
    return _log_wrong(lse_r, lse_w)


def wrong_probability(psi, sets: StateSets, row: int, config: ObjectiveConfig) -> float:
    """Probability of landing in W(row) rather than R(row)."""
    return float(np.exp(log_wrong_probabilities(psi, sets, config)[row]))


def correct_probability(psi, sets: StateSets, row: int, config: ObjectiveConfig) -> float:
    """p_R = 1 - p_W, computed without cancellation."""
    return float(-np.expm1(log_wrong_probabilities(psi, sets, config)[row]))


def evaluate(psi, sets: StateSets, config: ObjectiveConfig,
             with_gradient: bool = True) -> ObjectiveEvaluation:
    """Objective value, per-row log p_W and (optionally) the analytic gradient in one pass."""
    values = coefficient_values(psi)
    beta, lam = config.beta, config.lam
    r, w, lse_r, lse_w = _row_terms(values, sets, beta)

    log_pw = _log_wrong(lse_r, lse_w)
    value = float(logsumexp(lam * log_pw) / lam)
    if not with_gradient:
        return ObjectiveEvaluation(value, log_pw)

    mean_r = _weighted_feature_mean(lse_r, sets.correct, -beta * r)
    mean_w = _weighted_feature_mean(lse_w, sets.wrong, -beta * w)
    p_r = expit(lse_r - lse_w)
    d_log_pw = beta * p_r[:, None] * (mean_r - mean_w)
    weights = np.exp(lam * (log_pw - value))
    return ObjectiveEvaluation(value, log_pw, weights @ d_log_pw)


def objective(psi, sets: StateSets, config: ObjectiveConfig) -> ObjectiveEvaluation:
    """f(psi) = (1/lambda) log sum_i exp(lambda log p_W(i)), value only."""
    return evaluate(psi, sets, config, with_gradient=False)


def gradient(psi, sets: StateSets, config: ObjectiveConfig) -> np.ndarray:
    """Analytic gradient of f with respect to psi."""
    return evaluate(psi, sets, config, with_gradient=True).gradient


def rho(solved_value: float) -> float:
    """1 - exp(f*), clamped to [0, 1]."""
    return float(np.clip(-np.expm1(solved_value), 0.0, 1.0))


def central_difference(func: Callable[[np.ndarray], float], x, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if not step > 0:
        raise ValueError("finite-difference step must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for k in range(x.size):
        shifted = x.copy()
        shifted[k] = x[k] + step
        f_plus = func(shifted)
        shifted[k] = x[k] - step
        f_minus = func(shifted)
        grad[k] = (f_plus - f_minus) / (2 * step)
    return grad


def finite_difference_gradient(psi, sets: StateSets, config: ObjectiveConfig,
                               h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the objective; costs 2 D objective evaluations."""
    return central_difference(lambda x: objective(x, sets, config).value, coefficient_values(psi), h)


# ---------------------------------------------------------------------------
# Exact enumeration over all 2^N states
# ---------------------------------------------------------------------------

def iter_state_energies(psi, block_bits: int = ENUMERATION_BLOCK_BITS,
                        max_spins: int = MAX_ENUMERATION_SPINS) -> Iterator[Tuple[int, np.ndarray, np.ndarray]]:
    """
    Yield (start index, states, energies) blocks covering every state in
    ``enumerate_states(N)`` order.
    """
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    N = psi.N
    if N > max_spins:
        raise EnumerationLimitError(f"refusing to enumerate 2^{N} states (limit N <= {max_spins})")
    low = min(N, block_bits)
    low_states = enumerate_states(low)
    high_states = enumerate_states(N - low)
    for block, high in enumerate(high_states):
        states = np.concatenate(
            [low_states, np.broadcast_to(high, (low_states.shape[0], high.size))], axis=1,
        )
        yield block << low, states, energies(psi, states)


def log_partition(psi, config: ObjectiveConfig) -> float:
    """log sum_s exp(-beta H(s)) over all 2^N states."""
    blocks = [logsumexp(-config.beta * block_energies)
              for _, _, block_energies in iter_state_energies(psi)]
    return float(logsumexp(blocks))


def exact_state_probability(psi, s, config: ObjectiveConfig) -> float:
    """exp(-beta H(s)) / Z by full enumeration (N <= 26)."""
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    log_weight = -config.beta * energies(psi, np.asarray(s)[None, :])[0]
    return float(np.exp(log_weight - log_partition(psi, config)))
