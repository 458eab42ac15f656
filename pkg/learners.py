"""
The three model families used by the experiments, written from scratch on numpy:
an online linear model trained by SGD (logistic or squared loss), a CART decision
tree (Gini or variance impurity) and ordinary least squares regression.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from core import ArityError, ConfigError, DataError, NumericOverflowError, ParseError

logger = logging.getLogger(__name__)

LOGISTIC = 'logistic'
SQUARED = 'squared'
SGD_MODES = (LOGISTIC, SQUARED)

CLASSIFICATION = 'classification'
REGRESSION = 'regression'

OLS_JITTER = 1e-8


# ---------------------------------------------------------------------------
# Online linear model
# ---------------------------------------------------------------------------

@dataclass
class LinearModelState:
    weights: np.ndarray
    bias: float
    learning_rate: float
    l2_strength: float
    mode: str
    n_updates: int = 0

    @property
    def n_features(self) -> int:
        return len(self.weights)

    def copy(self) -> 'LinearModelState':
        return LinearModelState(self.weights.copy(), self.bias, self.learning_rate,
                                self.l2_strength, self.mode, self.n_updates)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def sgd_create(n_features: int, mode: str = LOGISTIC, learning_rate: float = 0.01,
               l2_strength: float = 1e-4) -> LinearModelState:
    """Create a zero-initialized linear model."""
    if n_features < 1:
        raise ArityError(f"A linear model needs at least one feature, got {n_features}")
    if mode not in SGD_MODES:
        raise ConfigError(f"Unknown SGD mode '{mode}' (expected one of {', '.join(SGD_MODES)})")
    if not learning_rate >= 0 or not math.isfinite(learning_rate):
        raise ConfigError(f"Learning rate must be a finite non-negative number, got {learning_rate}")
    if not l2_strength >= 0 or not math.isfinite(l2_strength):
        raise ConfigError(f"L2 strength must be a finite non-negative number, got {l2_strength}")
    return LinearModelState(np.zeros(n_features, dtype=float), 0.0, float(learning_rate), float(l2_strength), mode)


def _as_input(state: LinearModelState, x: Sequence[float]) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != state.weights.shape:
        raise ArityError(f"Input has {arr.size} features, model expects {state.n_features}")
    return arr


def _margin(state: LinearModelState, x: np.ndarray) -> float:
    return float(np.dot(state.weights, x)) + state.bias


def sgd_predict(state: LinearModelState, x: Sequence[float]) -> float:
    """sigma(w.x + b) in logistic mode, the raw score w.x + b in squared mode."""
    z = _margin(state, _as_input(state, x))
    if state.mode == LOGISTIC:
        return sigmoid(z)
    return z


def sgd_loss(state: LinearModelState, x: Sequence[float], y: float) -> float:
    """Regularized per-example objective whose gradient sgd_partial_fit follows."""
    arr = _as_input(state, x)
    z = _margin(state, arr)
    penalty = 0.5 * state.l2_strength * float(np.dot(state.weights, state.weights))
    if state.mode == LOGISTIC:
        # log(1 + e^z) - y*z, written to stay finite for large |z|
        softplus = max(z, 0.0) + math.log1p(math.exp(-abs(z)))
        return softplus - y * z + penalty
    return 0.5 * (z - y) ** 2 + penalty


def sgd_gradient(state: LinearModelState, x: Sequence[float], y: float) -> Tuple[np.ndarray, float]:
    arr = _as_input(state, x)
    g = sgd_predict(state, arr) - y
    return g * arr + state.l2_strength * state.weights, g


def _check_target(state: LinearModelState, y: float):
    if state.mode == LOGISTIC:
        if y not in (0, 1):
            raise DataError(f"Logistic mode needs a 0/1 target, got {y!r}")
    elif not math.isfinite(y):
        raise DataError(f"Squared mode needs a finite target, got {y!r}")


def sgd_partial_fit(state: LinearModelState, x: Sequence[float], y: float,
                    position: Optional[int] = None) -> LinearModelState:
    """Take exactly one gradient step on (x, y). Mutates and returns `state`."""
    _check_target(state, y)
    grad_w, grad_b = sgd_gradient(state, x, y)
    new_weights = state.weights - state.learning_rate * grad_w
    new_bias = state.bias - state.learning_rate * grad_b
    if not (np.all(np.isfinite(new_weights)) and math.isfinite(new_bias)):
        raise NumericOverflowError("SGD update produced a non-finite parameter", position)
    state.weights = new_weights
    state.bias = float(new_bias)
    state.n_updates += 1
    return state


def export_state(state: LinearModelState) -> str:
    """Plain-text record of a linear model; floats use repr so they round-trip exactly."""
    lines = [
        f"mode {state.mode}",
        f"learning_rate {state.learning_rate!r}",
        f"l2_strength {state.l2_strength!r}",
        f"n_updates {state.n_updates}",
        f"bias {state.bias!r}",
        "weights " + ' '.join(repr(float(w)) for w in state.weights),
    ]
    return '\n'.join(lines) + '\n'


def import_state(text: str) -> LinearModelState:
    fields = {}
    for line_number, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, _, value = line.strip().partition(' ')
        fields[key] = (line_number, value.strip())
    missing = [k for k in ('mode', 'learning_rate', 'l2_strength', 'bias', 'weights') if k not in fields]
    if missing:
        raise ParseError(f"Model record is missing {', '.join(missing)}")
    try:
        weights = np.array([float(w) for w in fields['weights'][1].split()], dtype=float)
        state = sgd_create(len(weights), fields['mode'][1], float(fields['learning_rate'][1]),
                           float(fields['l2_strength'][1]))
        state.weights = weights
        state.bias = float(fields['bias'][1])
        state.n_updates = int(fields['n_updates'][1]) if 'n_updates' in fields else 0
    except ValueError as e:
        raise ParseError(f"Malformed model record: {e}")
    return state


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

@dataclass
class TreeParams:
    max_depth: int = 10
    min_samples_split: int = 2

    def __post_init__(self):
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ConfigError(f"min_samples_split must be >= 2, got {self.min_samples_split}")


@dataclass
class TreeNode:
    value: float
    n_samples: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional['TreeNode'] = None
    right: Optional['TreeNode'] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class DecisionTreeModel:
    root: TreeNode
    task: str
    n_features: int
    params: TreeParams = field(default_factory=TreeParams)

    def depth(self) -> int:
        def _depth(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(_depth(node.left), _depth(node.right))
        return _depth(self.root)


def _leaf_value(y: np.ndarray, task: str) -> float:
    if task == CLASSIFICATION:
        classes, counts = np.unique(y, return_counts=True)
        # argmax picks the first maximum, i.e. the smallest class value on ties
        return float(classes[int(np.argmax(counts))])
    return float(np.mean(y))


def _split_scores(xs: np.ndarray, ys: np.ndarray, task: str) -> Tuple[np.ndarray, np.ndarray]:
    """Weighted child impurity for every midpoint threshold of one sorted feature column.

    Returns (thresholds, impurities); both empty when the column has a single distinct value.
    """
    n = len(xs)
    cut = np.nonzero(xs[:-1] < xs[1:])[0]
    if len(cut) == 0:
        return np.empty(0), np.empty(0)
    thresholds = (xs[cut] + xs[cut + 1]) / 2.0
    n_left = (cut + 1).astype(float)
    n_right = n - n_left

    if task == CLASSIFICATION:
        _, labels = np.unique(ys, return_inverse=True)
        onehot = np.eye(labels.max() + 1)[labels]
        left_counts = np.cumsum(onehot, axis=0)[cut]
        right_counts = onehot.sum(axis=0) - left_counts
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        impurity = (n_left * gini_left + n_right * gini_right) / n
    else:
        s1 = np.cumsum(ys)[cut]
        s2 = np.cumsum(ys * ys)[cut]
        t1, t2 = ys.sum(), (ys * ys).sum()
        sse_left = s2 - s1 ** 2 / n_left
        sse_right = (t2 - s2) - (t1 - s1) ** 2 / n_right
        impurity = (sse_left + sse_right) / n
    return thresholds, impurity


def best_split(X: np.ndarray, y: np.ndarray, task: str) -> Optional[Tuple[int, float, float]]:
    """Lowest weighted impurity split as (feature, threshold, impurity).

    Ties go to the lowest feature index, then the lowest threshold.
    """
    best = None
    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind='mergesort')
        thresholds, impurity = _split_scores(X[order, feature], y[order], task)
        if len(thresholds) == 0:
            continue
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[2]:
            best = (feature, float(thresholds[i]), float(impurity[i]))
    return best


def _build(X: np.ndarray, y: np.ndarray, depth: int, task: str, params: TreeParams) -> TreeNode:
    node = TreeNode(value=_leaf_value(y, task), n_samples=len(y))
    if depth >= params.max_depth or len(y) < params.min_samples_split or np.all(y == y[0]):
        return node
    split = best_split(X, y, task)
    if split is None:
        return node
    feature, threshold, _ = split
    mask = X[:, feature] <= threshold
    node.feature = feature
    node.threshold = threshold
    node.left = _build(X[mask], y[mask], depth + 1, task, params)
    node.right = _build(X[~mask], y[~mask], depth + 1, task, params)
    return node


def tree_fit(records: Sequence[Tuple[Sequence[float], float]], params: Optional[TreeParams] = None,
             task: str = CLASSIFICATION) -> DecisionTreeModel:
    """Greedy CART induction (Gini for classification, variance for regression)."""
    if not records:
        raise ArityError("Cannot fit a decision tree on zero records")
    if task not in (CLASSIFICATION, REGRESSION):
        raise ConfigError(f"Unknown tree task '{task}'")
    params = params or TreeParams()
    arity = len(records[0][0])
    if any(len(features) != arity for features, _ in records):
        raise ArityError(f"All records must have {arity} features")
    X = np.array([list(features) for features, _ in records], dtype=float).reshape(len(records), arity)
    y = np.array([target for _, target in records], dtype=float)
    root = _build(X, y, 0, task, params)
    model = DecisionTreeModel(root, task, arity, params)
    logger.debug(f"Fitted {task} tree on {len(records)} records, depth {model.depth()}")
    return model


def tree_predict(model: DecisionTreeModel, features: Sequence[float]) -> float:
    if len(features) != model.n_features:
        raise ArityError(f"Input has {len(features)} features, tree expects {model.n_features}")
    node = model.root
    while not node.is_leaf:
        node = node.left if features[node.feature] <= node.threshold else node.right
    return node.value


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------

@dataclass
class OLSModel:
    coefficients: np.ndarray
    intercept: float


def ols_fit(X: Sequence[Sequence[float]], y: Sequence[float]) -> OLSModel:
    """Normal equations on [X | 1] with a 1e-8 diagonal jitter."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] < 1 or X.ndim != 2:
        raise ArityError("OLS needs at least one row")
    if len(y) != X.shape[0]:
        raise ArityError(f"OLS got {X.shape[0]} rows but {len(y)} targets")
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    gram = design.T @ design + OLS_JITTER * np.eye(design.shape[1])
    beta = np.linalg.solve(gram, design.T @ y)
    if not np.all(np.isfinite(beta)):
        raise NumericOverflowError("OLS solution is not finite")
    return OLSModel(beta[:-1], float(beta[-1]))


def ols_predict(model: OLSModel, features: Sequence[float]) -> float:
    x = np.asarray(features, dtype=float)
    if x.shape != model.coefficients.shape:
        raise ArityError(f"Input has {x.size} features, model expects {len(model.coefficients)}")
    return float(np.dot(model.coefficients, x)) + model.intercept
