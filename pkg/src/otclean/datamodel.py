"""Immutable data types shared across the package.

Class indices are 0-based everywhere. Feature matrices are held as float64
regardless of how they were stored on disk.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    LabelOutOfRange,
    NonFiniteFeature,
    ShapeMismatch,
    UndefinedPrototype,
)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _as_labels(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise LabelOutOfRange(f"{name} contains non-integer values")
    return arr.astype(np.int64)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """n x d feature matrix with one unique id per row."""

    ids: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 1 or feats.shape[1] < 1:
            raise DimensionMismatch(f"features must be a non-empty 2-D matrix, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteFeature("features contain NaN or Inf")
        ids = np.asarray(self.ids)
        if ids.ndim != 1 or ids.shape[0] != feats.shape[0]:
            raise DimensionMismatch(f"{ids.shape[0] if ids.ndim == 1 else ids.shape} ids for {feats.shape[0]} rows")
        if ids.size and (not np.issubdtype(ids.dtype, np.integer) or ids.min() < 0):
            raise DimensionMismatch("ids must be nonnegative integers")
        ids = ids.astype(np.uint64)
        if np.unique(ids).size != ids.size:
            raise DuplicateId("sample ids are not unique")
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "ids", _frozen(ids))

    @classmethod
    def from_features(cls, features) -> "EmbeddingSet":
        features = np.asarray(features, dtype=np.float64)
        return cls(ids=np.arange(features.shape[0], dtype=np.uint64), features=features)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, rows) -> "EmbeddingSet":
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingSet(ids=self.ids[rows], features=self.features[rows])


@dataclass(frozen=True, eq=False)
class LabelTable:
    """Observed labels, optional ground truth, and the class count K."""

    observed: np.ndarray
    num_classes: int
    truth: Optional[np.ndarray] = None

    def __post_init__(self):
        if int(self.num_classes) < 1:
            raise LabelOutOfRange(f"num_classes must be positive, got {self.num_classes}")
        object.__setattr__(self, "num_classes", int(self.num_classes))
        obs = _as_labels(self.observed, "observed")
        _check_range(obs, self.num_classes, "observed")
        object.__setattr__(self, "observed", _frozen(obs))
        if self.truth is not None:
            truth = _as_labels(self.truth, "truth")
            if truth.shape != obs.shape:
                raise DimensionMismatch(f"truth has {truth.size} labels, observed has {obs.size}")
            _check_range(truth, self.num_classes, "truth")
            object.__setattr__(self, "truth", _frozen(truth))

    def __len__(self) -> int:
        return self.observed.shape[0]

    @property
    def has_truth(self) -> bool:
        return self.truth is not None

    def take(self, rows) -> "LabelTable":
        rows = np.asarray(rows, dtype=np.int64)
        truth = None if self.truth is None else self.truth[rows]
        return LabelTable(observed=self.observed[rows], num_classes=self.num_classes, truth=truth)


def _check_range(labels: np.ndarray, k: int, name: str) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        bad = labels[(labels < 0) | (labels >= k)][0]
        raise LabelOutOfRange(f"{name} label {bad} outside [0, {k})")


@dataclass(frozen=True, eq=False)
class PrototypeBank:
    """K x d class prototypes with per-class support counts.

    A class with support 0 has an undefined prototype. Its row is stored as
    zeros and ``defined`` is False for it; consumers must call
    :meth:`require_defined` or :meth:`restrict` instead of reading the row.
    """

    prototypes: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        protos = np.asarray(self.prototypes, dtype=np.float64)
        if protos.ndim != 2 or protos.shape[0] < 1:
            raise ShapeMismatch(f"prototypes must be a K x d matrix, got shape {protos.shape}")
        if not np.all(np.isfinite(protos)):
            raise NonFiniteFeature("prototypes contain NaN or Inf")
        support = np.asarray(self.support)
        if support.shape != (protos.shape[0],):
            raise ShapeMismatch(f"support has shape {support.shape}, expected ({protos.shape[0]},)")
        if support.size and support.min() < 0:
            raise ShapeMismatch("support counts must be nonnegative")
        support = support.astype(np.int64)
        protos = protos.copy()
        protos[support == 0] = 0.0
        object.__setattr__(self, "prototypes", _frozen(protos))
        object.__setattr__(self, "support", _frozen(support))

    @property
    def num_classes(self) -> int:
        return self.prototypes.shape[0]

    @property
    def d(self) -> int:
        return self.prototypes.shape[1]

    @property
    def defined(self) -> np.ndarray:
        return self.support > 0

    @property
    def defined_classes(self) -> np.ndarray:
        return np.flatnonzero(self.defined)

    def require_defined(self) -> None:
        if not np.all(self.defined):
            missing = np.flatnonzero(~self.defined).tolist()
            raise UndefinedPrototype(f"prototypes undefined for classes {missing}")

    def restrict(self, classes) -> "PrototypeBank":
        """Bank over the given class indices only; all of them must be defined."""
        classes = np.asarray(classes, dtype=np.int64)
        sub = PrototypeBank(self.prototypes[classes], self.support[classes])
        sub.require_defined()
        return sub

    def with_support(self, support) -> "PrototypeBank":
        support = np.asarray(support, dtype=np.int64)
        if np.any((support == 0) & self.defined):
            raise UndefinedPrototype("cannot zero the support of a defined prototype")
        if np.any((support > 0) & ~self.defined):
            raise UndefinedPrototype("cannot give support to an undefined prototype")
        return PrototypeBank(self.prototypes, support)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    regularization: float
    iterations_used: int
    marginal_violation: float
    converged: bool = True
    objective: float = float("nan")

    def __post_init__(self):
        for name in ("plan", "row_marginal", "col_marginal"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.float64)))

    @property
    def shape(self) -> tuple:
        return self.plan.shape


@dataclass(frozen=True, eq=False)
class ClassWeights:
    weights: np.ndarray
    scheme: str
    param: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(np.asarray(self.weights, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class ExtractionResult:
    """The retained subset X plus pseudo-labels for every input sample."""

    kept_ids: np.ndarray
    pseudo_labels: np.ndarray
    kept_labels: np.ndarray
    epoch: int = 0
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kept_ids", _frozen(np.asarray(self.kept_ids, dtype=np.uint64)))
        object.__setattr__(self, "pseudo_labels", _frozen(np.asarray(self.pseudo_labels, dtype=np.int64)))
        object.__setattr__(self, "kept_labels", _frozen(np.asarray(self.kept_labels, dtype=np.int64)))
        if self.kept_ids.shape != self.kept_labels.shape:
            raise DimensionMismatch("kept_ids and kept_labels differ in length")
        if np.unique(self.kept_ids).size != self.kept_ids.size:
            raise DuplicateId("kept_ids contains duplicates")

    @property
    def size(self) -> int:
        return int(self.kept_ids.size)


def validate_dataset(e: EmbeddingSet, l: LabelTable) -> None:
    """Check the cross-type invariants between an embedding set and its labels.

    Raises a subclass of :class:`OTCleanError` on the first violation found.
    """
    if not isinstance(e, EmbeddingSet) or not isinstance(l, LabelTable):
        raise DimensionMismatch("expected an EmbeddingSet and a LabelTable")
    if len(l) != e.n:
        raise DimensionMismatch(f"{len(l)} labels for {e.n} embeddings")
    if l.truth is not None and l.truth.shape[0] != e.n:
        raise DimensionMismatch(f"{l.truth.shape[0]} truth labels for {e.n} embeddings")
    if not np.all(np.isfinite(e.features)):
        raise NonFiniteFeature("features contain NaN or Inf")
    _check_range(l.observed, l.num_classes, "observed")
    if l.truth is not None:
        _check_range(l.truth, l.num_classes, "truth")
