"""Linear softmax head trained by full-batch gradient descent, plus
nearest-prototype prediction.

The training objective is the mean cross-entropy over the training rows
plus (l2 / 2) * ||W||^2; the bias is not penalized. Parameters start at zero
and every update is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cost import cost_matrix
from .datamodel import EmbeddingSet, ExtractionResult, PrototypeBank
from .errors import EmptySubset, LengthMismatch, ShapeMismatch, UndefinedPrototype


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: np.ndarray
    training_log: list = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, features) -> np.ndarray:
        x = features.features if isinstance(features, EmbeddingSet) else np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights.shape[1]:
            raise ShapeMismatch(f"features of shape {x.shape} do not match weights {self.weights.shape}")
        return x @ self.weights.T + self.bias


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_loss_grad(weights, bias, x, y, l2: float):
    """Objective value and its gradients with respect to (weights, bias)."""
    n = x.shape[0]
    z = x @ weights.T + bias
    zmax = z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z - zmax).sum(axis=1)) + zmax[:, 0]
    loss = float(np.mean(log_norm - z[np.arange(n), y])) + 0.5 * l2 * float(np.sum(weights * weights))
    p = np.exp(z - log_norm[:, None])
    p[np.arange(n), y] -= 1.0
    grad_w = p.T @ x / n + l2 * weights
    grad_b = p.mean(axis=0)
    return loss, grad_w, grad_b


def safe_step(x, l2: float) -> float:
    """1/L with L = max ||[x, 1]||^2 + l2, an upper bound on the loss curvature."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (float(np.max(np.sum(x * x, axis=1))) + 1.0 + l2)


def train_softmax(features, labels, num_classes: int, epochs: int = 300, step: float | None = None,
                  l2: float = 1e-3) -> LinearModel:
    x = features.features if isinstance(features, EmbeddingSet) else np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptySubset("cannot train on an empty subset")
    if y.shape != (x.shape[0],):
        raise LengthMismatch(f"{y.size} labels for {x.shape[0]} rows")
    if step is None:
        step = safe_step(x, l2)
    w = np.zeros((num_classes, x.shape[1]))
    b = np.zeros(num_classes)
    log = []
    for _ in range(epochs):
        loss, gw, gb = softmax_loss_grad(w, b, x, y, l2)
        log.append(loss)
        w -= step * gw
        b -= step * gb
    log.append(softmax_loss_grad(w, b, x, y, l2)[0])
    return LinearModel(weights=w, bias=b, training_log=log)


def train_on_subset(result: ExtractionResult, data: EmbeddingSet, num_classes: int, **kwargs) -> LinearModel:
    """Train on the retained rows of ``data`` with their retained labels."""
    row_of = {int(i): r for r, i in enumerate(data.ids)}
    rows = np.array([row_of[int(i)] for i in result.kept_ids], dtype=np.int64)
    if rows.size == 0:
        raise EmptySubset("extraction result keeps no samples")
    return train_softmax(data.features[rows], result.kept_labels, num_classes, **kwargs)


def predict(model: LinearModel, e) -> np.ndarray:
    return model.logits(e).argmax(axis=1)


def nearest_prototype_predict(p: PrototypeBank, e, metric: str = "cosine", classes=None) -> np.ndarray:
    """Label each sample with its closest prototype (lowest index on ties).

    ``classes`` limits the candidates; every candidate must be defined.
    """
    classes = np.arange(p.num_classes) if classes is None else np.asarray(classes, dtype=np.int64)
    if not np.all(p.defined[classes]):
        raise UndefinedPrototype(f"undefined prototypes among candidates {classes[~p.defined[classes]].tolist()}")
    d = cost_matrix(e, p.restrict(classes), metric)
    return classes[d.argmin(axis=1)]
