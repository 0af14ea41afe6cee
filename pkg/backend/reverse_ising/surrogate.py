"""
Fast surrogate regressors for rho(a).

Two models learn the map from a flattened auxiliary array (entries -1/+1) to
the solver's rho:

  - ``ForestModel``: bagged regression trees, each split on the sign of one
    auxiliary spin chosen greedily by variance reduction among a random
    ceil(sqrt(F)) subset of features.
  - ``MlpModel``: ReLU hidden layers, identity output, trained by mini-batch
    gradient descent (Adam step rule) on the mean squared error.

Predictions of both are clamped to [0, 1]. Models are stored as JSON with a
``format``/``version`` tag.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .datagen import DatasetRow, features, labelled_rows, targets
from .exceptions import ModelFormatError, TrainingDiverged

logger = logging.getLogger(__name__)

FORMAT_NAME = 'reverse-ising-surrogate'
FORMAT_VERSION = 1
MIN_GAIN = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


def _as_matrix(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise ValueError(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def _training_arrays(rows) -> Tuple[np.ndarray, np.ndarray]:
    """Features and targets of an (X, y) pair or of the labelled dataset rows."""
    if isinstance(rows, tuple):
        X, y = rows
        return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)
    rows = labelled_rows(rows)
    return features(rows), targets(rows)


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat binary tree; ``feature[k] == -1`` marks a leaf. Spin > 0 goes right."""
    feature: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def node_count(self) -> int:
        return self.value.size

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            split = self.feature[node]
            inner = np.nonzero(split >= 0)[0]
            if inner.size == 0:
                return self.value[node]
            here = node[inner]
            go_right = X[inner, split[inner]] > 0
            node[inner] = np.where(go_right, self.right[here], self.left[here])

    def to_dict(self) -> dict:
        return {
            'feature': self.feature.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'value': self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RegressionTree':
        return cls(
            np.asarray(data['feature'], dtype=np.int64),
            np.asarray(data['left'], dtype=np.int64),
            np.asarray(data['right'], dtype=np.int64),
            np.asarray(data['value'], dtype=np.float64),
        )


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int, max_features: int,
              rng: np.random.Generator) -> RegressionTree:
    """
    Grow one tree depth-first. At each node the candidate features are a
    random subset (sorted ascending, so ties go to the lowest index) and the
    split maximizing the reduction in squared error is taken.
    """
    positive = X > 0
    n_features = X.shape[1]
    feature, left, right, value = [], [], [], []

    def leaf(indices):
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(float(y[indices].mean()))
        return len(value) - 1

    everything = np.arange(y.size)
    stack = [(leaf(everything), everything, 0)]
    while stack:
        node, indices, depth = stack.pop()
        node_y = y[indices]
        if depth >= max_depth or indices.size < 2 or node_y.max() == node_y.min():
            continue
        candidates = np.sort(rng.choice(n_features, size=max_features, replace=False))
        goes_right = positive[np.ix_(indices, candidates)]
        n_right = goes_right.sum(axis=0)
        n_left = indices.size - n_right
        sum_right = node_y @ goes_right
        sum_left = node_y.sum() - sum_right
        usable = (n_left > 0) & (n_right > 0)
        if not usable.any():
            continue
        with np.errstate(divide='ignore', invalid='ignore'):
            gain = np.where(
                usable,
                sum_left ** 2 / n_left + sum_right ** 2 / n_right - node_y.sum() ** 2 / indices.size,
                -np.inf,
            )
        best = int(np.argmax(gain))
        if gain[best] <= MIN_GAIN:
            continue
        split = int(candidates[best])
        mask = positive[indices, split]
        feature[node] = split
        left[node] = leaf(indices[~mask])
        right[node] = leaf(indices[mask])
        stack.append((right[node], indices[mask], depth + 1))
        stack.append((left[node], indices[~mask], depth + 1))

    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: Tuple[RegressionTree, ...]
    n_features: int
    max_depth: int
    seed: int
    max_features: int

    kind = 'forest'

    @property
    def tree_count(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X, self.n_features)
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return np.clip(total / len(self.trees), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            'n_features': self.n_features,
            'max_depth': self.max_depth,
            'seed': self.seed,
            'max_features': self.max_features,
            'trees': [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'ForestModel':
        return cls(
            tuple(RegressionTree.from_dict(t) for t in data['trees']),
            int(data['n_features']), int(data['max_depth']), int(data['seed']), int(data['max_features']),
        )


def fit_forest(X: np.ndarray, y: np.ndarray, tree_count: int = 100, max_depth: int = 16,
               seed: int = 0, max_features: Optional[int] = None, workers: int = 1) -> ForestModel:
    """Bagged regression trees; tree k draws from its own spawned seed, so ``workers`` does not change the result."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise ValueError("a forest needs at least 2 training rows")
    if tree_count < 1 or max_depth < 0:
        raise ValueError("tree_count must be positive and max_depth non-negative")
    n_features = X.shape[1]
    max_features = max_features or max(1, math.ceil(math.sqrt(n_features)))
    streams = np.random.SeedSequence(seed).spawn(tree_count)

    def fit_one(stream):
        rng = np.random.default_rng(stream)
        sample = rng.integers(0, y.size, size=y.size)
        return grow_tree(X[sample], y[sample], max_depth, min(max_features, n_features), rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = tuple(pool.map(fit_one, streams))
    else:
        trees = tuple(fit_one(stream) for stream in streams)
    logger.info(f"trained forest: {tree_count} trees, depth <= {max_depth}, "
                f"{sum(t.node_count for t in trees)} nodes")
    return ForestModel(trees, n_features, max_depth, seed, max_features)


def train_forest(rows: Sequence[DatasetRow], tree_count: int = 100, max_depth: int = 16,
                 seed: int = 0, workers: int = 1) -> ForestModel:
    X, y = _training_arrays(rows)
    return fit_forest(X, y, tree_count, max_depth, seed, workers=workers)


def predict_forest(model: ForestModel, aux):
    """rho estimate for one flattened auxiliary array (float) or a batch (array)."""
    values = np.asarray(getattr(aux, 'values', aux), dtype=np.float64)
    single = values.ndim == 1 or hasattr(aux, 'values')
    predictions = model.predict(values.reshape(1, -1) if single else values)
    return float(predictions[0]) if single else predictions


# ---------------------------------------------------------------------------
# Multilayer perceptron
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class MlpModel:
    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    epochs: int = 200
    step_size: float = 1e-3
    batch_size: int = 64
    seed: int = 0
    history: List[Tuple[int, float, Optional[float]]] = field(default_factory=list)

    kind = 'mlp'

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[-1] != 1:
            raise ValueError("layer sizes must run from the input width to a single output")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise ValueError(f"layer {k} parameters do not chain {sizes[k]} -> {sizes[k + 1]}")
        self.layer_sizes = sizes

    @classmethod
    def initialized(cls, layer_sizes: Sequence[int], rng: np.random.Generator, **hyper) -> 'MlpModel':
        """Scaled-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(tuple(layer_sizes), weights, biases, **hyper)

    @property
    def n_features(self) -> int:
        return self.layer_sizes[0]

    def forward(self, X: np.ndarray):
        """Output column plus the (inputs, pre-activations) each layer saw."""
        memory = []
        a = X
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            memory.append((a, z))
            a = z if k == last else np.maximum(z, 0.0)
        return a, memory

    def predict_raw(self, X) -> np.ndarray:
        out, _ = self.forward(_as_matrix(X, self.n_features))
        return out[:, 0]

    def predict(self, X) -> np.ndarray:
        return np.clip(self.predict_raw(X), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            'layer_sizes': list(self.layer_sizes),
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
            'epochs': self.epochs,
            'step_size': self.step_size,
            'batch_size': self.batch_size,
            'seed': self.seed,
            'history': [list(h) for h in self.history],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MlpModel':
        return cls(
            tuple(data['layer_sizes']),
            [np.asarray(w, dtype=np.float64) for w in data['weights']],
            [np.asarray(b, dtype=np.float64) for b in data['biases']],
            int(data['epochs']), float(data['step_size']), int(data['batch_size']), int(data['seed']),
            [tuple(h) for h in data.get('history', [])],
        )


def loss_and_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Mean squared error and its gradients with respect to every weight and bias."""
    out, memory = model.forward(X)
    residual = out[:, 0] - y
    loss = float(np.mean(residual ** 2))
    delta = (2.0 / y.size) * residual[:, None]
    grad_w, grad_b = [None] * len(model.weights), [None] * len(model.biases)
    for k in range(len(model.weights) - 1, -1, -1):
        a_in, _ = memory[k]
        grad_w[k] = a_in.T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            _, z_prev = memory[k - 1]
            delta = (delta @ model.weights[k].T) * (z_prev > 0)
    return loss, grad_w, grad_b


def fit_mlp(X: np.ndarray, y: np.ndarray, layers: Sequence[int] = (64, 32), epochs: int = 200,
            step_size: float = 1e-3, batch_size: int = 64, seed: int = 0,
            holdout_fraction: float = 0.1) -> MlpModel:
    """
    Mini-batch training with a fixed per-seed batch order. A held-out fold of
    ``holdout_fraction`` of the rows (when at least 10 rows exist) is scored
    every epoch and recorded in ``model.history``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size < 2:
        raise ValueError("an MLP needs at least 2 training rows")
    rng = np.random.default_rng(seed)
    model = MlpModel.initialized((X.shape[1], *layers, 1), rng, epochs=epochs,
                                 step_size=step_size, batch_size=batch_size, seed=seed)

    order = rng.permutation(y.size)
    n_holdout = int(math.ceil(holdout_fraction * y.size)) if y.size >= 10 else 0
    holdout, train = order[:n_holdout], order[n_holdout:]
    params = model.weights + model.biases
    first_moment = [np.zeros_like(p) for p in params]
    second_moment = [np.zeros_like(p) for p in params]
    step = 0

    for epoch in range(1, epochs + 1):
        shuffled = train[rng.permutation(train.size)]
        for begin in range(0, shuffled.size, batch_size):
            batch = shuffled[begin:begin + batch_size]
            loss, grad_w, grad_b = loss_and_gradients(model, X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} in epoch {epoch}")
            step += 1
            for p, g, m, v in zip(params, grad_w + grad_b, first_moment, second_moment):
                m *= ADAM_BETA1
                m += (1 - ADAM_BETA1) * g
                v *= ADAM_BETA2
                v += (1 - ADAM_BETA2) * g * g
                m_hat = m / (1 - ADAM_BETA1 ** step)
                v_hat = v / (1 - ADAM_BETA2 ** step)
                p -= step_size * m_hat / (np.sqrt(v_hat) + ADAM_EPSILON)

        train_loss = mean_squared_error(model.predict_raw(X[train]), y[train])
        holdout_loss = (mean_squared_error(model.predict_raw(X[holdout]), y[holdout])
                        if n_holdout else None)
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"training loss became {train_loss} after epoch {epoch}")
        model.history.append((epoch, train_loss, holdout_loss))
        logger.debug(f"epoch {epoch}: train={train_loss:.6g} holdout={holdout_loss}")

    logger.info(f"trained MLP {model.layer_sizes}: final train MSE {model.history[-1][1]:.6g}")
    return model


def train_mlp(rows: Sequence[DatasetRow], layers: Sequence[int] = (64, 32), epochs: int = 200,
              step_size: float = 1e-3, batch_size: int = 64, seed: int = 0) -> MlpModel:
    X, y = _training_arrays(rows)
    return fit_mlp(X, y, layers, epochs, step_size, batch_size, seed)


# ---------------------------------------------------------------------------
# Evaluation and storage
# ---------------------------------------------------------------------------

def mean_squared_error(predictions, expected) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    if expected.size == 0:
        raise ValueError("cannot score an empty test set")
    return float(np.mean((predictions - expected) ** 2))


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def evaluate_mse(model, rows) -> float:
    """Mean squared error of the model on dataset rows (or an (X, y) pair)."""
    X, y = _training_arrays(rows)
    if y.size == 0:
        raise ValueError("cannot score an empty test set")
    return mean_squared_error(model.predict(X), y)


def save_model(model, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {'format': FORMAT_NAME, 'version': FORMAT_VERSION, 'kind': model.kind}
    document.update(model.to_dict())
    path.write_text(json.dumps(document, separators=(',', ':')) + '\n')
    logger.info(f"saved {model.kind} model to {path}")
    return path


def load_model(path):
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise ModelFormatError(f"cannot read model file {path}: {str(e)}") from e
    if document.get('format') != FORMAT_NAME:
        raise ModelFormatError(f"{path} is not a {FORMAT_NAME} file")
    if document.get('version') != FORMAT_VERSION:
        raise ModelFormatError(f"{path} has version {document.get('version')}, expected {FORMAT_VERSION}")
    kinds = {'forest': ForestModel, 'mlp': MlpModel}
    if document.get('kind') not in kinds:
        raise ModelFormatError(f"{path} holds unknown model kind {document.get('kind')!r}")
    try:
        return kinds[document['kind']].from_dict(document)
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"{path} is malformed: {str(e)}") from e
