"""Synthetic long-tailed embedding sets with controllable label noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import EmbeddingSet, LabelTable
from .errors import DimensionTooSmall, EtaOutOfRange

NOISE_MODELS = ("joint", "sym", "asym")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _check_eta(eta: float) -> None:
    if not 0.0 <= eta <= 1.0:
        raise EtaOutOfRange(f"noise rate must lie in [0, 1], got {eta}")


def longtail_counts(num_classes: int, head_count: int, imbalance: float) -> np.ndarray:
    """Exponential profile N_k = N_1 * IF^(-k / (K - 1)) for k = 0..K-1.

    Rounded half-to-even, never below one sample per class.
    """
    if num_classes < 1 or head_count < 1:
        raise ValueError("need at least one class and one head sample")
    if imbalance < 1:
        raise ValueError(f"imbalance factor must be >= 1, got {imbalance}")
    if num_classes == 1:
        return np.array([head_count], dtype=np.int64)
    k = np.arange(num_classes)
    raw = head_count * np.power(float(imbalance), -k / (num_classes - 1))
    return np.maximum(np.round(raw), 1).astype(np.int64)


@dataclass(frozen=True)
class SimSpec:
    num_classes: int = 10
    dim: int = 32
    head_count: int = 500
    imbalance: float = 100.0
    separation: float = 10.0
    within_std: float = 1.0
    noise: str = "joint"
    eta: float = 0.5
    target_class: int | None = None
    test_per_class: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.imbalance < 1:
            raise ValueError(f"imbalance factor must be >= 1, got {self.imbalance}")
        _check_eta(self.eta)
        if min(self.num_classes, self.dim, self.head_count, self.test_per_class) < 1:
            raise ValueError("class count, dimension and sample counts must be >= 1")
        if self.noise not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.noise!r}; expected one of {NOISE_MODELS}")


def class_means(num_classes: int, dim: int, separation: float, within_std: float, rng) -> np.ndarray:
    """Orthogonal class means with pairwise distance separation * within_std."""
    if dim < num_classes:
        raise DimensionTooSmall(f"dim={dim} < K={num_classes}: cannot place orthogonal class means")
    q, _ = np.linalg.qr(_rng(rng).normal(size=(dim, num_classes)))
    return q.T * (separation * within_std / np.sqrt(2.0))


def inject_joint_noise(truth, counts, eta: float, rng=None) -> np.ndarray:
    """Flip i -> j (j != i) with probability eta * N_j / (N - N_i)."""
    _check_eta(eta)
    rng = _rng(rng)
    truth = np.asarray(truth, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    observed = truth.copy()
    flip = rng.random(truth.size) < eta
    u = rng.random(truth.size)
    for i in range(counts.size):
        rows = np.flatnonzero(flip & (truth == i))
        others = total - counts[i]
        if rows.size == 0 or others <= 0:
            continue
        probs = counts / others
        probs[i] = 0.0
        cdf = np.cumsum(probs)
        cdf[-1] = max(cdf[-1], 1.0)
        observed[rows] = np.searchsorted(cdf, u[rows], side="right")
    return observed


def inject_symmetric_noise(truth, num_classes: int, eta: float, rng=None) -> np.ndarray:
    """Replace a label, with probability eta, by a uniform draw over the other K - 1 classes."""
    _check_eta(eta)
    if num_classes < 2:
        raise ValueError("symmetric noise needs at least two classes")
    rng = _rng(rng)
    truth = np.asarray(truth, dtype=np.int64)
    flip = rng.random(truth.size) < eta
    shift = rng.integers(1, num_classes, size=truth.size)
    return np.where(flip, (truth + shift) % num_classes, truth)


def inject_asymmetric_noise(truth, eta: float, target_class: int | None = None, rng=None,
                            num_classes: int | None = None) -> np.ndarray:
    """Relabel each non-target sample as ``target_class`` with probability eta.

    The default target is the least frequent class in ``truth`` (the highest
    such index on ties, i.e. the tail end of a sorted long-tailed profile).
    """
    _check_eta(eta)
    rng = _rng(rng)
    truth = np.asarray(truth, dtype=np.int64)
    if target_class is None:
        counts = np.bincount(truth, minlength=num_classes or 0)
        present = np.flatnonzero(counts > 0)
        smallest = counts[present].min()
        target_class = int(present[counts[present] == smallest].max())
    flip = (rng.random(truth.size) < eta) & (truth != target_class)
    return np.where(flip, target_class, truth)


def sample_gaussian_mixture(spec: SimSpec):
    """Draw (train, train_labels, test, test_labels) for ``spec``.

    Train counts follow :func:`longtail_counts` and carry noisy observed
    labels with ground truth; the test split is balanced and clean.
    """
    rng = np.random.default_rng(spec.seed)
    k = spec.num_classes
    means = class_means(k, spec.dim, spec.separation, spec.within_std, rng)
    counts = longtail_counts(k, spec.head_count, spec.imbalance)

    truth = rng.permutation(np.repeat(np.arange(k), counts))
    train_x = means[truth] + spec.within_std * rng.normal(size=(truth.size, spec.dim))
    test_y = rng.permutation(np.repeat(np.arange(k), spec.test_per_class))
    test_x = means[test_y] + spec.within_std * rng.normal(size=(test_y.size, spec.dim))

    if spec.noise == "joint":
        observed = inject_joint_noise(truth, counts, spec.eta, rng)
    elif spec.noise == "sym":
        observed = inject_symmetric_noise(truth, k, spec.eta, rng)
    else:
        observed = inject_asymmetric_noise(truth, spec.eta, spec.target_class, rng, num_classes=k)

    train = EmbeddingSet(ids=np.arange(truth.size, dtype=np.uint64), features=train_x)
    test = EmbeddingSet(ids=np.arange(test_y.size, dtype=np.uint64), features=test_x)
    return (
        train,
        LabelTable(observed=observed, num_classes=k, truth=truth),
        test,
        LabelTable(observed=test_y, num_classes=k, truth=test_y),
    )
