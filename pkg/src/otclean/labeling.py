"""Pseudo-labels from transport plans, the agreement filter, and prototypes."""
from __future__ import annotations

import numpy as np

from .datamodel import EmbeddingSet, ExtractionResult, PrototypeBank, TransportPlan
from .errors import AlphaOutOfRange, LengthMismatch, ShapeMismatch, UndefinedRow


def build_prototypes(e: EmbeddingSet, labels, num_classes: int) -> PrototypeBank:
    """Per-class mean feature vector; classes without samples are left undefined."""
    feats = e.features if isinstance(e, EmbeddingSet) else np.asarray(e, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (feats.shape[0],):
        raise LengthMismatch(f"{labels.size} labels for {feats.shape[0]} rows")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ShapeMismatch(f"labels outside [0, {num_classes})")
    support = np.bincount(labels, minlength=num_classes)
    sums = np.zeros((num_classes, feats.shape[1]))
    np.add.at(sums, labels, feats)
    protos = np.divide(sums, support[:, None], out=np.zeros_like(sums), where=support[:, None] > 0)
    return PrototypeBank(prototypes=protos, support=support)


def _plan_matrix(t) -> np.ndarray:
    plan = t.plan if isinstance(t, TransportPlan) else np.asarray(t, dtype=np.float64)
    if plan.ndim != 2 or plan.shape[1] < 1:
        raise ShapeMismatch(f"plan must be n x K with K >= 1, got shape {plan.shape}")
    return plan


def pseudo_label(t) -> np.ndarray:
    """Row-wise argmax of the plan, ties going to the lowest class index."""
    plan = _plan_matrix(t)
    if np.any(plan.max(axis=1, initial=0.0) <= 0):
        raise UndefinedRow("plan has an all-zero row")
    return plan.argmax(axis=1)  # numpy argmax returns the first maximum


def soft_scores(t) -> np.ndarray:
    plan = _plan_matrix(t)
    rows = plan.sum(axis=1)
    if np.any(rows <= 0):
        raise UndefinedRow("plan has a row with zero mass")
    return plan / rows[:, None]


def filter_clean(observed, pseudo, ids=None, epoch: int = 0) -> ExtractionResult:
    """Keep exactly the samples whose observed and pseudo labels agree."""
    observed = np.asarray(observed, dtype=np.int64)
    pseudo = np.asarray(pseudo, dtype=np.int64)
    ids = np.arange(observed.size, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
    if not (observed.shape == pseudo.shape == ids.shape):
        raise LengthMismatch(
            f"observed ({observed.size}), pseudo ({pseudo.size}) and ids ({ids.size}) differ in length"
        )
    keep = observed == pseudo
    return ExtractionResult(
        kept_ids=ids[keep],
        pseudo_labels=pseudo,
        kept_labels=observed[keep],
        epoch=epoch,
    )


def calibrate_prototypes(old: PrototypeBank, current: PrototypeBank, alpha: float) -> PrototypeBank:
    """EMA update C_j <- alpha * C_j + (1 - alpha) * C'_j.

    Classes whose current prototype is undefined (absent from the clean
    subset) keep their old prototype bit-for-bit. Support counts are carried
    over from ``old``; refreshing them is the pipeline's decision.
    """
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    if old.prototypes.shape != current.prototypes.shape:
        raise ShapeMismatch(f"prototype shapes differ: {old.prototypes.shape} vs {current.prototypes.shape}")
    protos = old.prototypes.copy()
    upd = current.defined & old.defined
    protos[upd] = alpha * old.prototypes[upd] + (1.0 - alpha) * current.prototypes[upd]
    # a class undefined before but present now adopts the current prototype
    fresh = current.defined & ~old.defined
    protos[fresh] = current.prototypes[fresh]
    support = np.where(old.defined, old.support, current.support)
    return PrototypeBank(prototypes=protos, support=support)
