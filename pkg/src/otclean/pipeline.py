"""Epoch loop: mini-batch OT pseudo-labeling, agreement filtering, classifier
retraining and prototype calibration.

The encoder is frozen, so features are fixed inputs. Each epoch shuffles the
training set with a generator seeded by (seed, epoch), solves one transport
problem per batch against the current prototypes, keeps the samples whose
observed label matches the transport argmax, and finally blends prototypes
recomputed from the kept samples into the running ones.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import LinearModel, predict, train_softmax
from .cost import cost_matrix
from .datamodel import EmbeddingSet, ExtractionResult, LabelTable, PrototypeBank, validate_dataset
from .errors import ConvergenceWarning, EmptySubset
from .labeling import build_prototypes, calibrate_prototypes, filter_clean, pseudo_label, soft_scores
from .metrics import imbalance_factor, noise_ratio, pseudo_label_quality
from .ot import SinkhornConfig, sinkhorn
from .weighting import class_weights

log = logging.getLogger(__name__)

LABELERS = ("ot", "nearest")


@dataclass(frozen=True)
class PipelineConfig:
    epochs: int = 100
    batch_size: int = 128
    alpha: float = 0.9
    beta: float = 0.95
    gamma: float = 1e-2
    weighting: str = "effective"
    icf_r: float = 1.0
    cost: str = "cosine"
    update_counts: bool = True
    seed: int = 0
    sinkhorn_iters: int = 1000
    sinkhorn_tol: float = 1e-9
    clf_epochs: int = 300
    clf_step: float | None = None
    clf_l2: float = 1e-3
    labeler: str = "ot"
    threads: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.labeler not in LABELERS:
            raise ValueError(f"unknown labeler {self.labeler!r}; expected one of {LABELERS}")

    @property
    def sinkhorn(self) -> SinkhornConfig:
        return SinkhornConfig(gamma=self.gamma, max_iterations=self.sinkhorn_iters, tolerance=self.sinkhorn_tol)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochReport:
    epoch: int
    subset_size: int
    imbalance_factor: float | None
    noise_ratio: float | None
    precision: float | None
    recall: float | None
    accuracy: float | None
    macro_auc: float | None
    test_accuracy: float | None
    prototype_drift: list
    per_class_counts: list
    pseudo_imbalance_factor: float | None
    pseudo_noise_ratio: float | None
    unconverged_batches: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PipelineResult:
    reports: list
    result: ExtractionResult
    model: LinearModel | None
    prototypes: PrototypeBank


def initial_prototypes(data: EmbeddingSet, labels: LabelTable) -> PrototypeBank:
    """Prototypes and support counts from the full noisy training set."""
    return build_prototypes(data, labels.observed, labels.num_classes)


def batch_indices(n: int, batch_size: int, seed: int, epoch: int) -> list:
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[s:s + batch_size] for s in range(0, n, batch_size)]


def _label_batch(feats, active, bank, weights, cfg):
    """Pseudo-labels (global class ids) and soft scores over ``active`` for one batch."""
    sub = bank.restrict(active)
    d = cost_matrix(feats, sub, cfg.cost)
    if cfg.labeler == "nearest":
        pseudo = d.argmin(axis=1)
        z = -d / cfg.gamma
        scores = np.exp(z - z.max(axis=1, keepdims=True))
        scores /= scores.sum(axis=1, keepdims=True)
        return active[pseudo], scores, True
    a = np.full(d.shape[0], 1.0 / d.shape[0])
    plan = sinkhorn(d, a, weights, cfg.sinkhorn)
    return active[pseudo_label(plan)], soft_scores(plan), plan.converged


def _subset_stats(kept_labels, kept_truth, k):
    counts = np.bincount(kept_labels, minlength=k)
    stats = {
        "per_class_counts": counts.tolist(),
        "imbalance_factor": imbalance_factor(counts) if counts.any() else None,
        "noise_ratio": noise_ratio(kept_labels, kept_truth) if kept_truth is not None else None,
    }
    return stats


def run_epoch(data: EmbeddingSet, labels: LabelTable, bank: PrototypeBank, cfg: PipelineConfig,
              epoch: int = 1, active=None):
    """One pass over the training set.

    Returns ``(ExtractionResult, EpochReport, calibrated PrototypeBank)``. The
    report's test accuracy is left empty; :func:`run_pipeline` fills it.
    """
    k = labels.num_classes
    if active is None:
        active = np.flatnonzero(np.bincount(labels.observed, minlength=k) > 0)
    active = np.asarray(active, dtype=np.int64)
    # b_j comes from the current global support counts, fixed for the epoch
    weights = class_weights(bank.support[active], cfg.weighting, beta=cfg.beta, r=cfg.icf_r)

    batches = batch_indices(data.n, cfg.batch_size, cfg.seed, epoch)
    pseudo = np.empty(data.n, dtype=np.int64)
    scores = np.zeros((data.n, k))
    unconverged = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        jobs = (
            lambda rows: _label_batch(data.features[rows], active, bank, weights, cfg)
        )
        if cfg.threads > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                outputs = list(pool.map(jobs, batches))
        else:
            outputs = [jobs(rows) for rows in batches]
    # each batch owns a disjoint slice, so the merge is order independent
    for rows, (p, s, ok) in zip(batches, outputs):
        pseudo[rows] = p
        scores[np.ix_(rows, active)] = s
        unconverged += not ok
    if unconverged:
        log.warning("epoch %d: %d batch transport solves hit the iteration cap", epoch, unconverged)

    result = filter_clean(labels.observed, pseudo, data.ids, epoch=epoch)
    keep = labels.observed == pseudo
    truth = labels.truth
    stats = _subset_stats(labels.observed[keep], None if truth is None else truth[keep], k)
    result = ExtractionResult(result.kept_ids, result.pseudo_labels, result.kept_labels, epoch, stats)

    if keep.any():
        current = build_prototypes(data.features[keep], labels.observed[keep], k)
        new_bank = calibrate_prototypes(bank, current, cfg.alpha)
        if cfg.update_counts:
            counts = np.bincount(labels.observed[keep], minlength=k)
            new_bank = new_bank.with_support(np.where(counts > 0, counts, bank.support))
    else:
        new_bank = bank
    drift = np.abs(new_bank.prototypes - bank.prototypes).max(axis=1)

    pseudo_counts = np.bincount(pseudo, minlength=k)
    if truth is not None:
        quality = pseudo_label_quality(pseudo, scores, truth)
        pseudo_nr = noise_ratio(pseudo, truth)
    else:
        quality = dict.fromkeys(("precision", "recall", "accuracy", "macro_auc"))
        pseudo_nr = None
    report = EpochReport(
        epoch=epoch,
        subset_size=result.size,
        imbalance_factor=stats["imbalance_factor"],
        noise_ratio=stats["noise_ratio"],
        precision=quality["precision"],
        recall=quality["recall"],
        accuracy=quality["accuracy"],
        macro_auc=quality["macro_auc"],
        test_accuracy=None,
        prototype_drift=drift.tolist(),
        per_class_counts=stats["per_class_counts"],
        pseudo_imbalance_factor=imbalance_factor(pseudo_counts),
        pseudo_noise_ratio=pseudo_nr,
        unconverged_batches=unconverged,
        config=cfg.to_dict(),
    )
    return result, report, new_bank


def run_pipeline(data: EmbeddingSet, labels: LabelTable, cfg: PipelineConfig, test: EmbeddingSet | None = None,
                 test_labels: LabelTable | None = None, on_epoch=None) -> PipelineResult:
    """Run ``cfg.epochs`` epochs and retrain the linear head on each epoch's subset.

    Classes that never occur in the observed labels are excluded from the
    target distribution for the whole run. ``on_epoch(report)`` is called
    after every epoch, e.g. to stream reports to disk.
    """
    validate_dataset(data, labels)
    if test is not None:
        validate_dataset(test, test_labels)
    k = labels.num_classes
    bank = initial_prototypes(data, labels)
    active = bank.defined_classes
    row_of = {int(i): r for r, i in enumerate(data.ids)}

    reports = []
    model = None
    result = None
    for epoch in range(1, cfg.epochs + 1):
        result, report, bank = run_epoch(data, labels, bank, cfg, epoch, active)
        if result.size and cfg.clf_epochs > 0:
            rows = np.array([row_of[int(i)] for i in result.kept_ids], dtype=np.int64)
            model = train_softmax(
                data.features[rows], result.kept_labels, k,
                epochs=cfg.clf_epochs, step=cfg.clf_step, l2=cfg.clf_l2,
            )
        if model is not None and test is not None:
            report.test_accuracy = float(np.mean(predict(model, test) == test_labels.observed))
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
    return PipelineResult(reports=reports, result=result, model=model, prototypes=bank)


def train_on_observed(data: EmbeddingSet, labels: LabelTable, cfg: PipelineConfig) -> LinearModel:
    """Baseline: the same linear head trained on every sample with its observed label."""
    if data.n == 0:
        raise EmptySubset("empty training set")
    return train_softmax(data, labels.observed, labels.num_classes, epochs=cfg.clf_epochs,
                         step=cfg.clf_step, l2=cfg.clf_l2)
