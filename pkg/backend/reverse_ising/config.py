"""
Run configuration shared by the management commands.

A ``RunConfig`` is assembled from four layers, later ones winning:

    problem preset < settings.REVERSE_ISING < --config file < command-line flags

``RunConfig.to_text()`` writes the flat ``key = value`` format that
``--config`` reads, so any report can be replayed.
"""
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, NamedTuple, Optional, Tuple

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured, ValidationError

from .boltzmann import ObjectiveConfig
from .formats import dump_key_values, parse_bool, parse_key_values
from .ising_model import (
    AUX_FIXED, MODES, SystemShape, TruthTable, build_multiplier_truth_table,
)
from .solver import SolverOptions

logger = logging.getLogger(__name__)

RESULT_PREFIX = 'result_'
CUSTOM = 'custom'
EXAMPLE = 'example'


class Preset(NamedTuple):
    p_bits: int
    q_bits: int
    alpha: int
    box: Tuple[float, float]
    depth: int


PROBLEMS: Dict[str, Preset] = {
    '1': Preset(2, 2, 1, (-4.0, 4.0), 16),
    '2': Preset(2, 3, 1, (-64.0, 64.0), 27),
    '3': Preset(2, 4, 2, (-256.0, 256.0), 16),
    '4': Preset(3, 3, 3, (-256.0, 256.0), 18),
}


def example_table(alpha: int = 0) -> TruthTable:
    """The 3-spin single-row system: input (-1, +1) must produce output -1."""
    return TruthTable.from_rows([((-1, 1), (-1,))], alpha=alpha)


@dataclass(frozen=True)
class RunConfig:
    problem: str = CUSTOM
    p_bits: int = 0
    q_bits: int = 0
    n: int = 0
    m: int = 0
    alpha: int = 0
    box: Tuple[float, float] = (-4.0, 4.0)
    lam: float = 100.0
    beta: float = 1.0
    mode: str = AUX_FIXED
    correct_aux_free: bool = False
    seed: int = 0
    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    step_tolerance: float = 1e-10
    starts: int = 8
    memory: int = 10
    split_ratio: float = 0.8
    balance: Optional[float] = None
    trees: int = 100
    depth: int = 16
    layers: Tuple[int, ...] = (64, 32)
    epochs: int = 200
    step_size: float = 1e-3
    batch_size: int = 64
    table: str = ''
    out: str = ''

    def __post_init__(self):
        if self.mode not in MODES:
            raise ImproperlyConfigured(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if not self.box[0] < self.box[1]:
            raise ImproperlyConfigured(f"dynamic range [{self.box[0]}, {self.box[1]}] is empty")
        if not 0 < self.split_ratio < 1:
            raise ImproperlyConfigured("split_ratio must lie strictly between 0 and 1")
        if self.balance is not None and not 0 <= self.balance <= 1:
            raise ImproperlyConfigured("balance must lie in [0, 1]")
        if self.trees < 1 or self.depth < 0 or self.epochs < 1 or self.batch_size < 1:
            raise ImproperlyConfigured("trees, epochs and batch_size must be positive, depth non-negative")
        if not self.layers or any(width < 1 for width in self.layers):
            raise ImproperlyConfigured("layers must list at least one positive width")
        if self.n < 1 or self.m < 1:
            raise ImproperlyConfigured(
                "no system selected: pass --problem, --shape or --table"
            )

    @property
    def shape(self) -> SystemShape:
        return SystemShape(self.n, self.m, self.alpha)

    @property
    def objective(self) -> ObjectiveConfig:
        return ObjectiveConfig(beta=self.beta, lam=self.lam)

    @property
    def solver_options(self) -> SolverOptions:
        return SolverOptions(
            max_iterations=self.max_iterations,
            gradient_tolerance=self.gradient_tolerance,
            step_tolerance=self.step_tolerance,
            starts=self.starts,
            seed=self.seed,
            memory=self.memory,
        )

    @property
    def output_dir(self) -> Path:
        return Path(settings.REVERSE_ISING['OUTPUT_DIR']) / f"problem-{self.problem}"

    def output_path(self, default_name: str) -> Path:
        return Path(self.out) if self.out else self.output_dir / default_name

    def to_text(self, results: Optional[Mapping[str, object]] = None) -> str:
        pairs = dataclasses.asdict(self)
        for key, value in (results or {}).items():
            pairs[RESULT_PREFIX + key] = value
        return dump_key_values(pairs, header='reverse-ising run')


def parse_range(raw: str) -> Tuple[float, float]:
    parts = [p for p in str(raw).replace(' ', '').split(',') if p]
    if len(parts) != 2:
        raise ImproperlyConfigured(f"a range is 'lo,hi', got {raw!r}")
    return float(parts[0]), float(parts[1])


def parse_layers(raw) -> Tuple[int, ...]:
    if isinstance(raw, (tuple, list)):
        return tuple(int(w) for w in raw)
    return tuple(int(w) for w in str(raw).split(',') if w.strip())


def parse_shape(raw: str) -> Tuple[int, int, int]:
    """``N,n,alpha`` as used to name problems."""
    parts = str(raw).split(',')
    if len(parts) != 3:
        raise ImproperlyConfigured(f"a shape is 'N,n,alpha', got {raw!r}")
    N, n, alpha = (int(p) for p in parts)
    return N, n, alpha


def _coerce(field: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    if field.name == 'box':
        return parse_range(raw)
    if field.name == 'layers':
        return parse_layers(raw)
    if field.name == 'balance':
        return float(raw) if raw else None
    if field.type is bool:
        return parse_bool(raw)
    if field.type is int:
        return int(raw)
    if field.type is float:
        return float(raw)
    return raw


def read_config_file(path) -> Dict[str, str]:
    """Key/value pairs of a config file; ``result_*`` keys from reports are dropped."""
    try:
        pairs = parse_key_values(Path(path).read_text())
    except OSError as e:
        raise ImproperlyConfigured(f"cannot read config file {path}: {str(e)}") from e
    except ValueError as e:
        raise ImproperlyConfigured(f"{path}: {str(e)}") from e
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = [k for k in pairs if k not in known and not k.startswith(RESULT_PREFIX)]
    if unknown:
        raise ImproperlyConfigured(f"{path}: unknown keys {', '.join(sorted(unknown))}")
    return {k: v for k, v in pairs.items() if k in known}


def _settings_defaults() -> Dict[str, object]:
    defaults = getattr(settings, 'REVERSE_ISING', {})
    mapping = {
        'LAMBDA': 'lam',
        'BETA': 'beta',
        'MODE': 'mode',
        'CORRECT_AUX_FREE': 'correct_aux_free',
        'SEED': 'seed',
        'SOLVER_MAX_ITERATIONS': 'max_iterations',
        'SOLVER_GRADIENT_TOLERANCE': 'gradient_tolerance',
        'SOLVER_STEP_TOLERANCE': 'step_tolerance',
        'SOLVER_STARTS': 'starts',
        'SOLVER_MEMORY': 'memory',
        'SPLIT_RATIO': 'split_ratio',
        'FOREST_TREES': 'trees',
        'MLP_LAYERS': 'layers',
        'MLP_EPOCHS': 'epochs',
        'MLP_STEP_SIZE': 'step_size',
        'MLP_BATCH_SIZE': 'batch_size',
    }
    return {field: defaults[key] for key, field in mapping.items() if key in defaults}


def _problem_values(problem: str) -> Dict[str, object]:
    """Preset values for a problem name, or for an ad-hoc ``p,q,alpha`` multiplier."""
    if problem in PROBLEMS:
        preset = PROBLEMS[problem]
        width = preset.p_bits + preset.q_bits
        return {
            'problem': problem, 'p_bits': preset.p_bits, 'q_bits': preset.q_bits,
            'n': width, 'm': width, 'alpha': preset.alpha, 'box': preset.box, 'depth': preset.depth,
        }
    if problem == EXAMPLE:
        return {'problem': EXAMPLE, 'n': 2, 'm': 1, 'alpha': 0, 'box': (-4.0, 4.0)}
    if problem.count(',') == 2:
        p_bits, q_bits, alpha = (int(v) for v in problem.split(','))
        if p_bits < 1 or q_bits < 1 or alpha < 0:
            raise ImproperlyConfigured(f"multiplier operands must be positive, got {problem!r}")
        width = p_bits + q_bits
        return {
            'problem': problem, 'p_bits': p_bits, 'q_bits': q_bits,
            'n': width, 'm': width, 'alpha': alpha,
        }
    raise ImproperlyConfigured(
        f"unknown problem {problem!r}; choose one of {', '.join([*PROBLEMS, EXAMPLE])} or 'p,q,alpha'"
    )


def _apply_shape(values: Dict[str, object], shape: str) -> None:
    """Fold an explicit ``N,n,alpha`` into the values, checking it against the selected system."""
    N, n, alpha = parse_shape(shape)
    m = N - n - alpha
    if m < 1:
        raise ImproperlyConfigured(f"shape {shape} leaves no output spins")
    if values.get('n'):
        if (values['n'], values['m']) != (n, m):
            raise ImproperlyConfigured(
                f"shape {shape} does not match the selected system (n={values['n']}, m={values['m']})"
            )
    elif not values.get('table'):
        if m != n or n < 2:
            raise ImproperlyConfigured(
                f"shape {shape} is not a multiplier shape; pass --table for other circuits"
            )
        values.update(p_bits=n // 2, q_bits=n - n // 2)
    values.update(n=n, m=m, alpha=alpha)


def load_run_config(flags: Optional[Mapping[str, object]] = None, config_path=None) -> RunConfig:
    """
    Resolve a RunConfig. ``flags`` holds command-line values keyed by RunConfig
    field names plus the optional ``shape`` string; ``None`` means not given.
    """
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    from_file = read_config_file(config_path) if config_path else {}
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}

    problem = flags.get('problem') or from_file.get('problem')
    values: Dict[str, object] = {}
    if problem and problem != CUSTOM:
        values.update(_problem_values(str(problem)))
    for layer in (_settings_defaults(), from_file, flags):
        for key, raw in layer.items():
            if key in fields and key != 'problem':
                values[key] = _coerce(fields[key], raw)
    if 'shape' in flags:
        _apply_shape(values, flags['shape'])
    if values.get('table') and not values.get('n'):
        table = _read_table(values['table'])
        values.update(n=table.shape.n, m=table.shape.m)
        values.setdefault('alpha', table.shape.alpha)

    try:
        config = RunConfig(**values)
    except (TypeError, ValueError) as e:
        raise ImproperlyConfigured(f"invalid run configuration: {str(e)}") from e
    logger.debug(f"resolved run config: problem={config.problem} shape={config.shape}")
    return config


def _read_table(path) -> TruthTable:
    try:
        return TruthTable.from_text(Path(path).read_text())
    except OSError as e:
        raise ImproperlyConfigured(f"cannot read truth table {path}: {str(e)}") from e
    except ValidationError as e:
        raise ImproperlyConfigured(f"invalid truth table {path}: {'; '.join(e.messages)}") from e
    except ValueError as e:
        raise ImproperlyConfigured(f"invalid truth table {path}: {str(e)}") from e


def resolve_table(config: RunConfig) -> TruthTable:
    """The truth table a config selects, with the config's alpha."""
    if config.table:
        table = _read_table(config.table).with_alpha(config.alpha)
    elif config.problem == EXAMPLE:
        table = example_table(config.alpha)
    elif config.p_bits and config.q_bits:
        table = build_multiplier_truth_table(config.p_bits, config.q_bits, config.alpha)
    else:
        raise ImproperlyConfigured("no truth table selected: pass --problem, --shape or --table")
    if (table.shape.n, table.shape.m) != (config.n, config.m):
        raise ImproperlyConfigured(
            f"truth table has n={table.shape.n}, m={table.shape.m} but the config says "
            f"n={config.n}, m={config.m}"
        )
    return table
