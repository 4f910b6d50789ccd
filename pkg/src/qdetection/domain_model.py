"""Classical classifier whose per-sample losses feed the Q-WAN.

Softmax regression by default, with an optional one-hidden-layer ReLU
variant.  Training is plain full-batch gradient descent on a weighted mean of
cross-entropy losses normalised by the sum of weights.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "EvaluationError",
    "ClassifierParams",
    "LabeledBatch",
    "init_classifier",
    "logits",
    "per_sample_loss",
    "weighted_loss",
    "weighted_loss_grad",
    "weighted_step",
    "clone_virtual",
    "accuracy",
    "per_class_accuracy",
    "predict",
    "WEIGHT_EPS",
    "fit_classifier",
    "finite_difference_grad",
]

WEIGHT_EPS = 1e-8


class EvaluationError(ValueError):
    pass


class LabeledBatch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray


@dataclass(eq=False)
class ClassifierParams:
    """``w`` is ``(classes, inputs)`` where inputs are the hidden units when
    ``v`` (``(hidden, features)``) and ``c`` are present, else the features."""

    w: np.ndarray
    b: np.ndarray
    v: np.ndarray | None = None
    c: np.ndarray | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if (self.v is None) != (self.c is None):
            raise ValueError("hidden layer needs both v and c")
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=np.float64)
            self.c = np.asarray(self.c, dtype=np.float64)
            if self.v.shape[0] != self.c.shape[0] or self.w.shape[1] != self.v.shape[0]:
                raise ValueError("hidden layer shapes are inconsistent")
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise ValueError("w must be (classes, inputs) and b (classes,)")
        for arr in self.arrays():
            if not np.all(np.isfinite(arr)):
                raise ValueError("classifier parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.w.shape[0]

    @property
    def n_features(self) -> int:
        return self.v.shape[1] if self.v is not None else self.w.shape[1]

    @property
    def hidden(self) -> bool:
        return self.v is not None

    def arrays(self) -> list[np.ndarray]:
        return [self.w, self.b] + ([self.v, self.c] if self.hidden else [])

    def to_dict(self) -> dict:
        out = {"w": self.w.tolist(), "b": self.b.tolist()}
        if self.hidden:
            out.update(v=self.v.tolist(), c=self.c.tolist())
        return out

    @classmethod
    def from_dict(cls, data: dict) -> ClassifierParams:
        return cls(data["w"], data["b"], data.get("v"), data.get("c"))

    def digest(self) -> str:
        """SHA-256 of the serialised parameters."""
        return hashlib.sha256(json.dumps(self.to_dict()).encode()).hexdigest()


def init_classifier(n_features: int, n_classes: int, hidden: int | None = None,
                    seed=0) -> ClassifierParams:
    """Zero softmax regression, or a He-initialised hidden layer when ``hidden``."""
    if hidden is None:
        return ClassifierParams(np.zeros((n_classes, n_features)), np.zeros(n_classes))
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, np.sqrt(2.0 / n_features), (hidden, n_features))
    w = rng.normal(0.0, np.sqrt(1.0 / hidden), (n_classes, hidden))
    return ClassifierParams(w, np.zeros(n_classes), v, np.zeros(hidden))


def _check_batch(p: ClassifierParams, X, y=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != p.n_features:
        raise ValueError(f"features must be (n, {p.n_features}), got {X.shape}")
    if y is None:
        return X, None
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per row")
    if y.size and (y.min() < 0 or y.max() >= p.n_classes):
        raise ValueError(f"labels must lie in [0, {p.n_classes})")
    return X, y.astype(np.int64)


def _forward(p: ClassifierParams, X):
    if p.hidden:
        pre = X @ p.v.T + p.c
        a = np.maximum(pre, 0.0)
    else:
        pre, a = None, X
    return pre, a, a @ p.w.T + p.b


def logits(p: ClassifierParams, X) -> np.ndarray:
    X, _ = _check_batch(p, X)
    return _forward(p, X)[2]


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def per_sample_loss(p: ClassifierParams, X, y) -> np.ndarray:
    """Cross-entropy ``-log softmax(logits)[label]`` for each row."""
    X, y = _check_batch(p, X, y)
    logp = _log_softmax(_forward(p, X)[2])
    return -logp[np.arange(len(y)), y]


def _check_weights(weights, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    return w


def _total(w: np.ndarray) -> float:
    # a floor rather than an added epsilon, so unit weights give the plain mean exactly
    return max(float(w.sum()), WEIGHT_EPS)


def weighted_loss(p: ClassifierParams, X, y, weights) -> float:
    losses = per_sample_loss(p, X, y)
    w = _check_weights(weights, len(losses))
    return float(w @ losses / _total(w))


def weighted_loss_grad(p: ClassifierParams, X, y, weights) -> list[np.ndarray]:
    """Analytic gradient of :func:`weighted_loss`, in the order of ``p.arrays()``."""
    X, y = _check_batch(p, X, y)
    w = _check_weights(weights, len(y))
    pre, a, z = _forward(p, X)
    probs = np.exp(_log_softmax(z))
    probs[np.arange(len(y)), y] -= 1.0
    dz = probs * w[:, None] / _total(w)
    grads = [dz.T @ a, dz.sum(axis=0)]
    if p.hidden:
        da = (dz @ p.w) * (pre > 0)
        grads += [da.T @ X, da.sum(axis=0)]
    return grads


def weighted_step(p: ClassifierParams, X, y, weights, lr: float) -> ClassifierParams:
    """One gradient-descent step on the weight-normalised loss; ``p`` is untouched."""
    grads = weighted_loss_grad(p, X, y, weights)
    new = [arr - lr * g for arr, g in zip(p.arrays(), grads)]
    return ClassifierParams(*new)


def clone_virtual(p: ClassifierParams) -> ClassifierParams:
    return copy.deepcopy(p)


def predict(p: ClassifierParams, X) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest class index
    return np.argmax(logits(p, X), axis=1)


def accuracy(p: ClassifierParams, X, y) -> float:
    X, y = _check_batch(p, X, y)
    if len(y) == 0:
        raise EvaluationError("cannot evaluate on an empty set")
    return float(np.mean(predict(p, X) == y))


def per_class_accuracy(p: ClassifierParams, X, y, cls: int) -> float:
    X, y = _check_batch(p, X, y)
    mask = y == cls
    if not mask.any():
        raise EvaluationError(f"class {cls} does not occur in the evaluation set")
    return float(np.mean(predict(p, X[mask]) == cls))


def fit_classifier(X, y, n_classes: int, steps: int = 300, lr: float = 0.5,
                   hidden: int | None = None, batch_size: int | None = None,
                   sample_weight=None, seed=0) -> ClassifierParams:
    """Train a fresh classifier by gradient descent.

    Full-batch when ``batch_size`` is None; otherwise ``steps`` counts epochs
    of seeded mini-batches.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.ones(len(y)) if sample_weight is None else _check_weights(sample_weight, len(y))
    p = init_classifier(X.shape[1], n_classes, hidden, seed)
    if batch_size is None:
        for _ in range(steps):
            p = weighted_step(p, X, y, w, lr)
        return p
    rng = np.random.default_rng([seed, 1])
    for _ in range(steps):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            p = weighted_step(p, X[idx], y[idx], w[idx], lr)
    return p


def finite_difference_grad(p: ClassifierParams, X, y, weights, eps: float = 1e-6
                           ) -> list[np.ndarray]:
    """Central differences of :func:`weighted_loss`, one coordinate at a time."""
    base = [a.copy() for a in p.arrays()]
    grads = []
    for k, arr in enumerate(base):
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            probe = [a.copy() for a in base]
            probe[k][idx] += eps
            up = weighted_loss(ClassifierParams(*probe), X, y, weights)
            probe[k][idx] -= 2 * eps
            down = weighted_loss(ClassifierParams(*probe), X, y, weights)
            g[idx] = (up - down) / (2 * eps)
        grads.append(g)
    return grads
