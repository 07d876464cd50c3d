"""Subset and pseudo-label quality measures."""
from __future__ import annotations

import numpy as np

from .errors import AllEmpty, EmptyGroup, LengthMismatch, MissingTruth


def imbalance_factor(counts, return_excluded: bool = False):
    """Largest over smallest nonzero class count.

    With ``return_excluded`` the indices of zero-count classes are returned
    alongside the value.
    """
    counts = np.asarray(counts, dtype=np.float64)
    nonzero = counts > 0
    if not nonzero.any():
        raise AllEmpty("every class count is zero")
    value = float(counts[nonzero].max() / counts[nonzero].min())
    if return_excluded:
        return value, np.flatnonzero(~nonzero).tolist()
    return value


def noise_ratio(kept_labels, truth) -> float:
    """Fraction of retained labels that disagree with ground truth (0 when empty)."""
    if truth is None:
        raise MissingTruth("noise ratio needs ground-truth labels")
    kept_labels = np.asarray(kept_labels)
    truth = np.asarray(truth)
    if kept_labels.shape != truth.shape:
        raise LengthMismatch(f"{kept_labels.size} kept labels vs {truth.size} truth labels")
    if kept_labels.size == 0:
        return 0.0
    return float(np.mean(kept_labels != truth))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # tied runs share the mean of their 1-based positions
    new_run = np.concatenate([[True], xs[1:] != xs[:-1]])
    run_id = np.cumsum(new_run) - 1
    starts = np.flatnonzero(new_run)
    ends = np.append(starts[1:], x.size)
    ranks = np.empty(x.size)
    ranks[order] = (0.5 * (starts + 1 + ends))[run_id]
    return ranks


def binary_auc(scores, positive) -> float:
    """Mann-Whitney AUC: probability a positive outranks a negative, ties count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = _average_ranks(scores)
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pseudo_label_quality(pseudo, scores, truth) -> dict:
    """Macro one-vs-rest precision, recall and AUC plus exact-match accuracy.

    Averages run over the classes present in ``truth``. A class that has no
    positives or no negatives in ``truth`` has no defined AUC; it is left out
    of ``macro_auc`` and listed under ``auc_excluded``.
    """
    if truth is None:
        raise MissingTruth("pseudo-label quality needs ground-truth labels")
    pseudo = np.asarray(pseudo, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if pseudo.shape != truth.shape or scores.shape[0] != truth.size:
        raise LengthMismatch("pseudo labels, scores and truth must have one entry per sample")
    classes = np.unique(truth)
    precision, recall, aucs, excluded = [], [], [], []
    for c in classes:
        is_true = truth == c
        is_pred = pseudo == c
        tp = np.sum(is_true & is_pred)
        precision.append(tp / is_pred.sum() if is_pred.any() else 0.0)
        recall.append(tp / is_true.sum())
        auc = binary_auc(scores[:, c], is_true) if c < scores.shape[1] else float("nan")
        if np.isnan(auc):
            excluded.append(int(c))
        else:
            aucs.append(auc)
    return {
        "precision": float(np.mean(precision)),
        "recall": float(np.mean(recall)),
        "accuracy": float(np.mean(pseudo == truth)),
        "macro_auc": float(np.mean(aucs)) if aucs else float("nan"),
        "auc_excluded": excluded,
    }


SHOT_BOUNDS = (100, 20)


def shot_partition_report(values, counts=None, bounds=SHOT_BOUNDS, groups=None) -> dict:
    """Mean of a per-class metric over Many / Medium / Few shot groups.

    Either ``counts`` with ``bounds=(many_above, few_below)`` (many: count >
    many_above, few: count < few_below, medium otherwise) or explicit
    ``groups={"many": [...], "medium": [...], "few": [...]}``. Empty groups
    are omitted from the result and named under ``"empty"``.
    """
    values = np.asarray(values, dtype=np.float64)
    if groups is None:
        if counts is None:
            raise ValueError("pass either counts or explicit groups")
        counts = np.asarray(counts)
        if counts.shape != values.shape:
            raise LengthMismatch("one count per class is required")
        hi, lo = bounds
        idx = np.arange(values.size)
        groups = {
            "many": idx[counts > hi].tolist(),
            "medium": idx[(counts >= lo) & (counts <= hi)].tolist(),
            "few": idx[counts < lo].tolist(),
        }
    out = {"groups": {k: list(map(int, v)) for k, v in groups.items()}, "empty": []}
    for name, members in groups.items():
        if len(members) == 0:
            out["empty"].append(name)
            continue
        out[name] = float(values[np.asarray(members, dtype=np.int64)].mean())
    if len(out["empty"]) == len(groups):
        raise EmptyGroup("every shot group is empty")
    return out


def per_class_accuracy(pred, truth, num_classes: int) -> np.ndarray:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    acc = np.full(num_classes, np.nan)
    for c in range(num_classes):
        mask = truth == c
        if mask.any():
            acc[c] = np.mean(pred[mask] == c)
    return acc
