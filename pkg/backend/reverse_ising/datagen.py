"""
Training data for the surrogate models: (auxiliary array, rho) pairs.

Each label is one full multi-start solve of the smoothed objective. The
manifest written next to a dataset records the problem, the objective and
the complete solver budget, so a dataset can be regenerated byte for byte.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from django.core.exceptions import ValidationError

from . import solver
from .boltzmann import ObjectiveConfig
from .exceptions import ReverseIsingError, SamplingExhausted
from .formats import dump_key_values, parse_bool, parse_key_values
from .ising_model import AUX_FIXED, AuxiliaryArray, SystemShape, TruthTable, build_state_sets
from .solver import SolverOptions

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = '.manifest'
ATTEMPTS_PER_ARRAY = 50
DEGRADED_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class DatasetRow:
    aux: np.ndarray
    rho: float
    f_star: float
    converged: bool
    seed: int


@dataclass
class DatasetManifest:
    problem: str
    shape: SystemShape
    box: Tuple[float, float]
    lam: float
    beta: float
    mode: str = AUX_FIXED
    correct_aux_free: bool = False
    rows: int = 0
    non_converged: int = 0
    failed: int = 0
    degraded: bool = False
    split_ratio: float = 0.8
    seed: int = 0
    balance: Optional[float] = None
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if not 0 < self.split_ratio < 1:
            raise ValidationError("split ratio must lie strictly between 0 and 1")

    @property
    def split(self) -> Tuple[float, float]:
        return self.split_ratio, 1 - self.split_ratio

    def to_text(self) -> str:
        pairs = {
            'problem': self.problem,
            'N': self.shape.N,
            'n': self.shape.n,
            'm': self.shape.m,
            'alpha': self.shape.alpha,
            'range': self.box,
            'lambda': self.lam,
            'beta': self.beta,
            'mode': self.mode,
            'correct_aux_free': self.correct_aux_free,
            'rows': self.rows,
            'non_converged': self.non_converged,
            'failed': self.failed,
            'degraded': self.degraded,
            'split_ratio': self.split_ratio,
            'seed': self.seed,
            'balance': self.balance,
        }
        for name, value in dataclasses.asdict(self.solver).items():
            pairs[f"solver_{name}"] = value
        return dump_key_values(pairs, header='reverse-ising dataset manifest')

    @classmethod
    def from_text(cls, text: str) -> 'DatasetManifest':
        pairs = parse_key_values(text)
        lo, hi = (float(v) for v in pairs['range'].split(','))
        solver_fields = {f.name: f.type for f in dataclasses.fields(SolverOptions)}
        solver_options = SolverOptions(**{
            name: (int if kind in (int, 'int') else float)(pairs[f"solver_{name}"])
            for name, kind in solver_fields.items() if f"solver_{name}" in pairs
        })
        return cls(
            problem=pairs['problem'],
            shape=SystemShape(int(pairs['n']), int(pairs['m']), int(pairs['alpha'])),
            box=(lo, hi),
            lam=float(pairs['lambda']),
            beta=float(pairs['beta']),
            mode=pairs.get('mode', AUX_FIXED),
            correct_aux_free=parse_bool(pairs.get('correct_aux_free', 'false')),
            rows=int(pairs.get('rows', 0)),
            non_converged=int(pairs.get('non_converged', 0)),
            failed=int(pairs.get('failed', 0)),
            degraded=parse_bool(pairs.get('degraded', 'false')),
            split_ratio=float(pairs.get('split_ratio', 0.8)),
            seed=int(pairs.get('seed', 0)),
            balance=float(pairs['balance']) if pairs.get('balance') else None,
            solver=solver_options,
        )


@dataclass
class Dataset:
    rows: List[DatasetRow]
    manifest: DatasetManifest


def features(rows: Sequence[DatasetRow]) -> np.ndarray:
    """(rows, alpha * ell) matrix of auxiliary spins."""
    if not rows:
        return np.zeros((0, 0))
    return np.stack([row.aux for row in rows]).astype(np.float64)


def targets(rows: Sequence[DatasetRow]) -> np.ndarray:
    return np.array([row.rho for row in rows], dtype=np.float64)


def row_seed(base_seed: int, index: int) -> int:
    """Solver seed of the index-th array, independent of how many arrays precede it."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def sample_aux_arrays(table: TruthTable, count: int, balance: Optional[float] = None,
                      seed: int = 0, box: Tuple[float, float] = (-4.0, 4.0),
                      opts: Optional[SolverOptions] = None, mode: str = AUX_FIXED,
                      max_attempts: Optional[int] = None) -> List[AuxiliaryArray]:
    """
    Draw distinct auxiliary arrays uniformly at random.

    With ``balance`` set, each draw is classified by ``solver.feasibility_check``
    and kept only while its class still needs members, until round(balance *
    count) feasible and the rest infeasible arrays are found. The attempt cap
    defaults to 50 draws per requested array; hitting it raises
    SamplingExhausted carrying the partial result.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if balance is not None and not 0 <= balance <= 1:
        raise ValueError("balance must lie in [0, 1]")
    alpha, ell = table.shape.alpha, table.ell
    if alpha == 0:
        logger.warning("alpha=0: the only auxiliary array is the empty one")
        return [AuxiliaryArray.empty(ell)]

    available = 1 << (alpha * ell)
    if count > available:
        logger.warning(f"Requested {count} arrays but only {available} exist; sampling all of them")
        count = available
    max_attempts = max_attempts or ATTEMPTS_PER_ARRAY * count
    opts = opts or SolverOptions()
    rng = np.random.default_rng(seed)

    wanted_feasible = None if balance is None else int(np.floor(balance * count + 0.5))
    chosen, seen = [], set()
    feasible = infeasible = 0
    for _ in range(max_attempts):
        if len(chosen) == count:
            break
        aux = AuxiliaryArray.random(ell, alpha, rng)
        if aux.key() in seen:
            continue
        seen.add(aux.key())
        if wanted_feasible is None:
            chosen.append(aux)
            continue
        verdict = solver.feasibility_check(build_state_sets(table, aux, mode), box, opts)
        if verdict.feasible and feasible < wanted_feasible:
            feasible += 1
            chosen.append(aux)
        elif not verdict.feasible and infeasible < count - wanted_feasible:
            infeasible += 1
            chosen.append(aux)

    if len(chosen) < count:
        raise SamplingExhausted(
            f"attempt cap {max_attempts} reached with {len(chosen)}/{count} arrays "
            f"({feasible} feasible, {infeasible} infeasible)",
            chosen, feasible, infeasible,
        )
    logger.info(f"Sampled {len(chosen)} auxiliary arrays ({feasible} feasible, {infeasible} infeasible classified)")
    return chosen


def generate_dataset(table: TruthTable, arrays: Sequence[AuxiliaryArray], config: ObjectiveConfig,
                     opts: SolverOptions, box: Tuple[float, float], mode: str = AUX_FIXED,
                     correct_aux_free: bool = False, problem: str = 'custom',
                     split_ratio: float = 0.8, balance: Optional[float] = None) -> Dataset:
    """
    Solve every array and label it with rho = 1 - exp(f*).

    A failed solve is logged and kept as a non-converged row whose rho and f*
    are NaN; the batch always runs to the end.
    """
    rows, seen = [], set()
    failed = 0
    for index, aux in enumerate(arrays):
        if aux.key() in seen:
            logger.warning(f"Skipping duplicate auxiliary array at position {index}")
            continue
        seen.add(aux.key())
        seed = row_seed(opts.seed, index)
        sets = build_state_sets(table, aux, mode, correct_aux_free)
        try:
            result = solver.minimize(sets, box, config, dataclasses.replace(opts, seed=seed))
            rows.append(DatasetRow(aux.flat().copy(), result.rho, result.f_star, result.converged, seed))
        except ReverseIsingError as e:
            logger.error(f"Error solving auxiliary array {index}: {str(e)}")
            rows.append(DatasetRow(aux.flat().copy(), float('nan'), float('nan'), False, seed))
            failed += 1
        if (index + 1) % 100 == 0:
            logger.info(f"Labelled {index + 1}/{len(arrays)} auxiliary arrays")

    non_converged = sum(not row.converged for row in rows)
    degraded = bool(rows) and non_converged / len(rows) > DEGRADED_FRACTION
    if degraded:
        logger.warning(f"{non_converged} of {len(rows)} solves did not converge; dataset marked degraded")
    manifest = DatasetManifest(
        problem=problem, shape=table.shape, box=(float(box[0]), float(box[1])),
        lam=config.lam, beta=config.beta, mode=mode, correct_aux_free=correct_aux_free,
        rows=len(rows), non_converged=non_converged, failed=failed, degraded=degraded,
        split_ratio=split_ratio, seed=opts.seed, balance=balance, solver=opts,
    )
    return Dataset(rows, manifest)


def labelled_rows(rows: Sequence[DatasetRow]) -> List[DatasetRow]:
    """Rows with a finite rho; rows of failed solves carry NaN."""
    return [row for row in rows if np.isfinite(row.rho)]


def split_dataset(rows: Sequence[DatasetRow], ratio: float, seed: int,
                  keep_unlabelled: bool = False) -> Tuple[List[DatasetRow], List[DatasetRow]]:
    """
    Seeded shuffle, then the first round(ratio * len) rows train and the rest
    test. Rows without a finite rho are dropped first unless ``keep_unlabelled``.
    """
    if not 0 < ratio < 1:
        raise ValueError("split ratio must lie strictly between 0 and 1")
    if not keep_unlabelled:
        rows = labelled_rows(rows)
    order = np.random.default_rng(seed).permutation(len(rows))
    cut = int(np.floor(ratio * len(rows) + 0.5))
    return [rows[i] for i in order[:cut]], [rows[i] for i in order[cut:]]


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + MANIFEST_SUFFIX)


def write_dataset(dataset: Dataset, path) -> Path:
    """
    Write ``a_1..a_K, rho, f_star, converged, seed`` as CSV (spins as -1/1)
    and the manifest to ``<path>.manifest``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    width = len(dataset.rows[0].aux) if dataset.rows else 0
    columns = [f"a_{k}" for k in range(1, width + 1)]
    spins = features(dataset.rows).astype(np.int64).reshape(len(dataset.rows), width)
    frame = pd.DataFrame(spins, columns=columns)
    frame['rho'] = targets(dataset.rows)
    frame['f_star'] = [row.f_star for row in dataset.rows]
    frame['converged'] = [row.converged for row in dataset.rows]
    frame['seed'] = [row.seed for row in dataset.rows]
    frame.to_csv(path, index=False, lineterminator='\n')
    manifest_path(path).write_text(dataset.manifest.to_text())
    logger.info(f"Wrote {len(dataset.rows)} rows to {path}")
    return path


def read_feature_rows(path) -> np.ndarray:
    """The ``a_*`` columns of a dataset-format CSV (other columns are optional)."""
    frame = pd.read_csv(path, float_precision='round_trip')
    columns = [c for c in frame.columns if c.startswith('a_')]
    return frame[columns].to_numpy(dtype=np.float64)


def read_dataset(path) -> Dataset:
    path = Path(path)
    frame = pd.read_csv(path, float_precision='round_trip')
    columns = [c for c in frame.columns if c.startswith('a_')]
    aux = frame[columns].to_numpy(dtype=np.int8)
    rows = [
        DatasetRow(aux[i], float(frame['rho'].iat[i]), float(frame['f_star'].iat[i]),
                   bool(frame['converged'].iat[i]), int(frame['seed'].iat[i]))
        for i in range(len(frame))
    ]
    manifest = DatasetManifest.from_text(manifest_path(path).read_text())
    return Dataset(rows, manifest)
