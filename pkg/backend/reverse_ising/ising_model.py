"""
Spin systems for the reverse Ising problem.

A state of N spins is split into n input spins u, m output spins v and alpha
auxiliary spins a, in that order. The Hamiltonian coefficients psi are the N
fields followed by the N(N-1)/2 pair couplings in lexicographic pair order,
so that H_psi(s) = feature_map(s) . psi.

Conventions used throughout the package:
  - bit b is encoded as spin 2b - 1 (0 -> -1, 1 -> +1)
  - operands are little-endian: bit k of an integer is spin k of its segment
  - ``enumerate_states(k)`` lists all 2^k spin vectors so that row i has
    spin j = +1 exactly when bit j of i is set
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

AUX_FIXED = 'aux-fixed'
AUX_FREE_WRONG = 'aux-free-wrong'
MODES = (AUX_FIXED, AUX_FREE_WRONG)

TRUTH_TABLE_HEADER = '# reverse-ising truth table'


def psi_dimension(N: int) -> int:
    """Number of Hamiltonian coefficients for N spins: N fields + N(N-1)/2 couplings."""
    return N + N * (N - 1) // 2


@lru_cache(maxsize=None)
def pair_indices(N: int) -> Tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j), i < j, in the order the couplings appear in psi."""
    rows, cols = np.triu_indices(N, k=1)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


def _spin_count_for_dimension(D: int) -> int:
    N = int(round((np.sqrt(8 * D + 1) - 1) / 2))
    if psi_dimension(N) != D:
        raise ValidationError(f"{D} is not a valid coefficient count N + N(N-1)/2")
    return N


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


def _check_spins(spins: np.ndarray, what: str = 'spins') -> None:
    if spins.size and not np.all(np.abs(spins) == 1):
        raise ValidationError(f"{what} must contain only -1 and +1")


@dataclass(frozen=True)
class SystemShape:
    """Spin counts of a system: N = n inputs + m outputs + alpha auxiliaries."""
    n: int
    m: int
    alpha: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValidationError(f"n and m must be at least 1 (got n={self.n}, m={self.m})")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be non-negative (got {self.alpha})")

    @classmethod
    def from_counts(cls, N: int, n: int, alpha: int) -> 'SystemShape':
        """Build a shape from the (N, n, alpha) tuple used to name problems."""
        return cls(n=n, m=N - n - alpha, alpha=alpha)

    @property
    def N(self) -> int:
        return self.n + self.m + self.alpha

    @property
    def dimension(self) -> int:
        return psi_dimension(self.N)

    def __str__(self):
        return f"({self.N},{self.n},{self.alpha})"


@dataclass(frozen=True, eq=False)
class HamiltonianCoefficients:
    """Fields h and couplings J flattened as (h_1..h_N, J_12, J_13, ..., J_{N-1,N})."""
    values: np.ndarray
    box: Tuple[float, float] = (-np.inf, np.inf)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).ravel()
        lo, hi = (float(b) for b in self.box)
        if lo > hi:
            raise ValidationError(f"empty dynamic range [{lo}, {hi}]")
        _spin_count_for_dimension(values.size)
        object.__setattr__(self, 'values', _frozen(values))
        object.__setattr__(self, 'box', (lo, hi))

    @classmethod
    def zeros(cls, N: int, box=(-np.inf, np.inf)) -> 'HamiltonianCoefficients':
        return cls(np.zeros(psi_dimension(N)), box)

    @classmethod
    def from_fields(cls, h: Sequence[float], J: Optional[Sequence[float]] = None,
                    box=(-np.inf, np.inf)) -> 'HamiltonianCoefficients':
        """Build psi from fields and pair couplings (pair order, or a full N x N matrix)."""
        h = np.asarray(h, dtype=np.float64)
        N = h.size
        if J is None:
            couplings = np.zeros(N * (N - 1) // 2)
        else:
            J = np.asarray(J, dtype=np.float64)
            couplings = J[pair_indices(N)] if J.ndim == 2 else J
        return cls(np.concatenate([h, couplings]), box)

    @property
    def N(self) -> int:
        return _spin_count_for_dimension(self.values.size)

    @property
    def h(self) -> np.ndarray:
        return self.values[:self.N]

    @property
    def J(self) -> np.ndarray:
        return self.values[self.N:]

    def coupling_matrix(self) -> np.ndarray:
        """Strictly upper-triangular N x N coupling matrix."""
        N = self.N
        matrix = np.zeros((N, N))
        matrix[pair_indices(N)] = self.J
        return matrix

    def projected(self) -> 'HamiltonianCoefficients':
        lo, hi = self.box
        return HamiltonianCoefficients(np.clip(self.values, lo, hi), self.box)

    def within_box(self) -> bool:
        lo, hi = self.box
        return bool(np.all((self.values >= lo) & (self.values <= hi)))


def coefficient_values(psi) -> np.ndarray:
    """Raw coefficient vector from a HamiltonianCoefficients or an array."""
    if isinstance(psi, HamiltonianCoefficients):
        return psi.values
    return np.asarray(psi, dtype=np.float64)


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def spin_encode(bits: Iterable[int]) -> np.ndarray:
    """Map bits to spins: 0 -> -1, 1 -> +1."""
    bits = np.asarray(list(bits), dtype=np.int8)
    if bits.size and not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bits must be 0 or 1")
    return (2 * bits - 1).astype(np.int8)


def spin_decode(spins: Iterable[int]) -> np.ndarray:
    """Inverse of spin_encode."""
    spins = np.asarray(list(spins), dtype=np.int8)
    _check_spins(spins)
    return ((spins + 1) // 2).astype(np.int8)


def int_to_bits(value: int, width: int) -> List[int]:
    """Little-endian bits of a non-negative integer."""
    if value < 0 or value >= 1 << width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return [(value >> k) & 1 for k in range(width)]


def bits_to_int(bits: Iterable[int]) -> int:
    return sum(int(b) << k for k, b in enumerate(bits))


@lru_cache(maxsize=32)
def _enumerated_states(k: int) -> np.ndarray:
    index = np.arange(1 << k, dtype=np.int64)[:, None]
    states = (((index >> np.arange(k)) & 1) * 2 - 1).astype(np.int8)
    return _frozen(states.reshape(1 << k, k))


def enumerate_states(k: int) -> np.ndarray:
    """All 2^k spin vectors, shape (2^k, k); row i has spin j = +1 iff bit j of i is set."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return _enumerated_states(k)


def state_index(spins: Sequence[int]) -> int:
    """Position of a spin vector in ``enumerate_states``."""
    return bits_to_int(spin_decode(spins))


# ---------------------------------------------------------------------------
# Hamiltonian
# ---------------------------------------------------------------------------

def feature_map(s: Sequence[int]) -> np.ndarray:
    """phi(s) = (s_1..s_N, s_1 s_2, s_1 s_3, ..., s_{N-1} s_N), so that H_psi(s) = phi(s) . psi."""
    s = np.asarray(s, dtype=np.int8)
    _check_spins(s)
    rows, cols = pair_indices(s.size)
    return np.concatenate([s, s[rows] * s[cols]]).astype(np.float64)


def feature_matrix(states: np.ndarray) -> np.ndarray:
    """Row-wise feature_map over a (..., N) stack of states."""
    states = np.asarray(states, dtype=np.int8)
    rows, cols = pair_indices(states.shape[-1])
    pairs = states[..., rows] * states[..., cols]
    return np.concatenate([states, pairs], axis=-1).astype(np.float64)


def hamiltonian(psi, s: Sequence[int]) -> float:
    """H_psi(s) = sum_i h_i s_i + sum_{i<j} J_ij s_i s_j."""
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    s = np.asarray(s, dtype=np.float64)
    if s.size != psi.N:
        raise ValueError(f"state has {s.size} spins but psi describes {psi.N}")
    return float(psi.h @ s + s @ psi.coupling_matrix() @ s)


def energies(psi, states: np.ndarray) -> np.ndarray:
    """Hamiltonian of every row of a (k, N) state matrix."""
    if not isinstance(psi, HamiltonianCoefficients):
        psi = HamiltonianCoefficients(psi)
    states = np.asarray(states, dtype=np.float64)
    if states.shape[-1] != psi.N:
        raise ValueError(f"states have {states.shape[-1]} spins but psi describes {psi.N}")
    coupled = states @ psi.coupling_matrix()
    return states @ psi.h + np.einsum('ki,ki->k', coupled, states)


# ---------------------------------------------------------------------------
# Truth tables and auxiliary arrays
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TruthTable:
    """Desired states (u, v) of a logic circuit plus the system shape."""
    shape: SystemShape
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        inputs = np.array(self.inputs, dtype=np.int8)
        outputs = np.array(self.outputs, dtype=np.int8)
        if inputs.ndim != 2 or inputs.shape[1] != self.shape.n:
            raise ValidationError(f"inputs must be an (ell, {self.shape.n}) matrix")
        if outputs.ndim != 2 or outputs.shape != (inputs.shape[0], self.shape.m):
            raise ValidationError(f"outputs must be an ({inputs.shape[0]}, {self.shape.m}) matrix")
        if inputs.shape[0] < 1:
            raise ValidationError("a truth table needs at least one row")
        _check_spins(inputs, 'inputs')
        _check_spins(outputs, 'outputs')
        if np.unique(inputs, axis=0).shape[0] != inputs.shape[0]:
            raise ValidationError("truth table inputs must be pairwise distinct")
        object.__setattr__(self, 'inputs', _frozen(inputs))
        object.__setattr__(self, 'outputs', _frozen(outputs))

    @classmethod
    def from_rows(cls, rows: Sequence[Tuple[Sequence[int], Sequence[int]]],
                  alpha: int = 0) -> 'TruthTable':
        """Generic constructor from explicit (u, v) spin rows."""
        if not rows:
            raise ValidationError("a truth table needs at least one row")
        inputs = np.array([u for u, _ in rows], dtype=np.int8)
        outputs = np.array([v for _, v in rows], dtype=np.int8)
        shape = SystemShape(n=inputs.shape[1], m=outputs.shape[1], alpha=alpha)
        return cls(shape, inputs, outputs)

    @property
    def ell(self) -> int:
        return self.inputs.shape[0]

    @property
    def rows(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.inputs, self.outputs))

    def with_alpha(self, alpha: int) -> 'TruthTable':
        return TruthTable(SystemShape(self.shape.n, self.shape.m, alpha), self.inputs, self.outputs)

    def desired_states(self, aux: 'AuxiliaryArray') -> np.ndarray:
        """(ell, N) matrix of the full desired states (u, v, a)."""
        return np.concatenate([self.inputs, self.outputs, aux.values], axis=1)

    def to_text(self) -> str:
        """
        Plain-text layout: a header, a ``# n=.. m=.. alpha=..`` line, then one
        line per desired state holding the input bits and the output bits as
        two whitespace-separated 0/1 strings (spin 1 of each segment first).
        """
        lines = [
            TRUTH_TABLE_HEADER,
            f"# n={self.shape.n} m={self.shape.m} alpha={self.shape.alpha}",
        ]
        for u, v in self.rows:
            u_bits = ''.join(str(b) for b in spin_decode(u))
            v_bits = ''.join(str(b) for b in spin_decode(v))
            lines.append(f"{u_bits} {v_bits}")
        return '\n'.join(lines) + '\n'

    @classmethod
    def from_text(cls, text: str) -> 'TruthTable':
        alpha = 0
        declared = {}
        rows = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith('#'):
                for token in line[1:].split():
                    if '=' in token:
                        key, value = token.split('=', 1)
                        declared[key] = int(value)
                continue
            try:
                u_bits, v_bits = line.split()
                rows.append((spin_encode(int(b) for b in u_bits), spin_encode(int(b) for b in v_bits)))
            except ValueError as exc:
                raise ValidationError(f"malformed truth table line {raw!r}") from exc
        alpha = declared.get('alpha', alpha)
        table = cls.from_rows(rows, alpha=alpha)
        for key in ('n', 'm'):
            if key in declared and declared[key] != getattr(table.shape, key):
                raise ValidationError(f"header declares {key}={declared[key]} but rows disagree")
        return table


def build_multiplier_truth_table(p_bits: int, q_bits: int, alpha: int = 0) -> TruthTable:
    """
    Truth table of a p_bits x q_bits multiplier.

    Input spins are x (p_bits, little-endian) followed by y (q_bits); output
    spins are the p_bits + q_bits bits of x * y. Row r holds the input whose
    little-endian bit pattern is r.
    """
    if p_bits < 1 or q_bits < 1:
        raise ValidationError("operand widths must be positive")
    width = p_bits + q_bits
    inputs, outputs = [], []
    for y in range(1 << q_bits):
        for x in range(1 << p_bits):
            inputs.append(spin_encode(int_to_bits(x, p_bits) + int_to_bits(y, q_bits)))
            outputs.append(spin_encode(int_to_bits(x * y, width)))
    shape = SystemShape(n=width, m=width, alpha=alpha)
    return TruthTable(shape, np.array(inputs), np.array(outputs))


@dataclass(frozen=True, eq=False)
class AuxiliaryArray:
    """One auxiliary assignment in {-1,+1}^alpha per truth-table row."""
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.int8)
        if values.ndim != 2:
            raise ValidationError("an auxiliary array is an (ell, alpha) matrix")
        _check_spins(values, 'auxiliary spins')
        object.__setattr__(self, 'values', _frozen(values))

    @classmethod
    def from_flat(cls, flat: Sequence[int], ell: int, alpha: int) -> 'AuxiliaryArray':
        flat = np.asarray(flat, dtype=np.int8)
        if flat.size != ell * alpha:
            raise ValidationError(f"expected {ell * alpha} auxiliary spins, got {flat.size}")
        return cls(flat.reshape(ell, alpha))

    @classmethod
    def empty(cls, ell: int) -> 'AuxiliaryArray':
        return cls(np.zeros((ell, 0), dtype=np.int8))

    @classmethod
    def random(cls, ell: int, alpha: int, rng: np.random.Generator) -> 'AuxiliaryArray':
        return cls(rng.choice(np.array([-1, 1], dtype=np.int8), size=(ell, alpha)))

    @property
    def ell(self) -> int:
        return self.values.shape[0]

    @property
    def alpha(self) -> int:
        return self.values.shape[1]

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def key(self) -> bytes:
        return self.values.tobytes()


# ---------------------------------------------------------------------------
# Correct / wrong state sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StateSets:
    """
    Per-row correct and wrong states as stacked feature tensors.

    ``correct`` has shape (k_R, ell, D) and ``wrong`` shape (k_W, ell, D), so
    ``correct @ psi`` gives the (k_R, ell) energy matrix of the correct states.
    """
    shape: SystemShape
    mode: str
    correct_states: np.ndarray
    wrong_states: np.ndarray
    correct: np.ndarray
    wrong: np.ndarray

    @property
    def ell(self) -> int:
        return self.correct.shape[1]

    @property
    def dimension(self) -> int:
        return self.correct.shape[2]

    @property
    def correct_per_row(self) -> int:
        return self.correct.shape[0]

    @property
    def wrong_per_row(self) -> int:
        return self.wrong.shape[0]


def _segment_product(u: np.ndarray, outputs: np.ndarray, auxes: np.ndarray) -> np.ndarray:
    """All states (u, t, a) for t in outputs (outer) and a in auxes (inner)."""
    k_t, k_a = outputs.shape[0], auxes.shape[0]
    return np.concatenate([
        np.broadcast_to(u, (k_t * k_a, u.size)),
        np.repeat(outputs, k_a, axis=0),
        np.tile(auxes, (k_t, 1)),
    ], axis=1)


def build_state_sets(table: TruthTable, aux: AuxiliaryArray, mode: str = AUX_FIXED,
                     correct_aux_free: bool = False) -> StateSets:
    """
    Correct and wrong states for every truth-table row.

    ``aux-fixed``: wrong states are (u, t, a) for every t != v.
    ``aux-free-wrong``: wrong states are (u, t, a') for every t != v and every a'.
    With ``correct_aux_free`` the correct set is (u, v, a') over every a'.
    """
    if mode not in MODES:
        raise ValueError(f"unknown wrong-set mode {mode!r}; expected one of {MODES}")
    shape = table.shape
    if aux.ell != table.ell or aux.alpha != shape.alpha:
        raise ValidationError(
            f"auxiliary array is {aux.ell} x {aux.alpha}, table needs {table.ell} x {shape.alpha}"
        )
    all_outputs = enumerate_states(shape.m)
    all_aux = enumerate_states(shape.alpha)

    correct_rows, wrong_rows = [], []
    for i, (u, v) in enumerate(table.rows):
        own_aux = aux.values[i:i + 1]
        others = all_outputs[np.any(all_outputs != v, axis=1)]
        wrong_aux = all_aux if mode == AUX_FREE_WRONG else own_aux
        correct_aux = all_aux if correct_aux_free else own_aux
        correct_rows.append(_segment_product(u, v[None, :], correct_aux))
        wrong_rows.append(_segment_product(u, others, wrong_aux))

    correct_states = _frozen(np.stack(correct_rows, axis=1))
    wrong_states = _frozen(np.stack(wrong_rows, axis=1))
    return StateSets(
        shape=shape,
        mode=mode,
        correct_states=correct_states,
        wrong_states=wrong_states,
        correct=_frozen(feature_matrix(correct_states)),
        wrong=_frozen(feature_matrix(wrong_states)),
    )


def constraints_satisfied(psi, sets: StateSets) -> Tuple[bool, float]:
    """
    Check H(correct) < H(wrong) for every correct/wrong pair of every row.

    Returns the flag and the margin min_i (min_W H - max_R H).
    """
    values = coefficient_values(psi)
    correct_energy = sets.correct @ values
    wrong_energy = sets.wrong @ values
    margin = float(np.min(wrong_energy.min(axis=0) - correct_energy.max(axis=0)))
    return margin > 0, margin


def ground_aux_array(psi, table: TruthTable) -> AuxiliaryArray:
    """Per row, the auxiliary assignment minimizing H(u, v, a) (first minimizer on ties)."""
    alpha = table.shape.alpha
    candidates = enumerate_states(alpha)
    chosen = []
    for u, v in table.rows:
        states = _segment_product(u, v[None, :], candidates)
        chosen.append(candidates[int(np.argmin(energies(psi, states)))])
    return AuxiliaryArray(np.array(chosen, dtype=np.int8).reshape(table.ell, alpha))


# ---------------------------------------------------------------------------
# Counting
# ---------------------------------------------------------------------------

def count_constraints(shape: SystemShape) -> int:
    """Linear inequality constraints of the flip-enumerated problem: 2^(n+alpha) (2^n - 1)."""
    return (1 << (shape.n + shape.alpha)) * ((1 << shape.n) - 1)


def count_aux_arrays(shape: SystemShape) -> int:
    """Number of auxiliary arrays over the 2^n desired states: 2^(alpha 2^n)."""
    return 1 << (shape.alpha * (1 << shape.n))
