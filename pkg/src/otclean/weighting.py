"""Prototype-side class weights b for the target distribution.

All three schemes are closed-form in the per-class counts. Callers are
expected to drop classes with undefined prototypes before calling, so
every count passed here must be at least 1.
"""
from __future__ import annotations

import numpy as np

from .datamodel import ClassWeights
from .errors import BetaOutOfRange, EmptyClass, NonPositiveExponent

SCHEMES = ("effective", "icf", "uniform")


def _counts(support) -> np.ndarray:
    counts = np.asarray(support)
    if counts.ndim != 1 or counts.size == 0:
        raise EmptyClass("support must be a non-empty 1-D sequence of counts")
    if np.any(counts < 1):
        raise EmptyClass(f"classes {np.flatnonzero(counts < 1).tolist()} have no samples")
    return counts


def effective_number_weights(support, beta: float) -> ClassWeights:
    """Class-balanced weights b_j proportional to (1 - beta) / (1 - beta**N_j)."""
    counts = _counts(support)
    if not (0.0 <= beta < 1.0):
        raise BetaOutOfRange(f"beta must lie in [0, 1), got {beta}")
    # (1 - beta) is common to every class and cancels in the normalization.
    # 1 - beta**N is evaluated as -expm1(N ln beta) in extended precision so it
    # neither cancels catastrophically near beta = 1 nor underflows for large N.
    n = counts.astype(np.longdouble)
    with np.errstate(divide="ignore"):
        log_beta = np.log(np.longdouble(beta))
    one_minus_pow = -np.expm1(n * log_beta)
    w = np.longdouble(1.0) / one_minus_pow
    b = (w / w.sum()).astype(np.float64)
    return ClassWeights(weights=b, scheme="effective", param=float(beta))


def inverse_frequency_weights(support, r: float = 1.0) -> ClassWeights:
    """Inverse class frequency b_j proportional to N_j**-r."""
    counts = _counts(support)
    if not r > 0:
        raise NonPositiveExponent(f"icf exponent must be positive, got {r}")
    w = np.power(counts.astype(np.longdouble), -np.longdouble(r))
    b = (w / w.sum()).astype(np.float64)
    return ClassWeights(weights=b, scheme="icf", param=float(r))


def uniform_weights(num_classes: int) -> ClassWeights:
    if num_classes < 1:
        raise EmptyClass("uniform weights need at least one class")
    return ClassWeights(weights=np.full(num_classes, 1.0 / num_classes), scheme="uniform")


def class_weights(support, scheme: str = "effective", beta: float = 0.95, r: float = 1.0) -> ClassWeights:
    """Dispatch on the scheme name used by the CLI (``effective``, ``icf``, ``uniform``)."""
    if scheme == "effective":
        return effective_number_weights(support, beta)
    if scheme == "icf":
        return inverse_frequency_weights(support, r)
    if scheme == "uniform":
        return uniform_weights(len(_counts(support)))
    raise ValueError(f"unknown weighting scheme {scheme!r}; expected one of {SCHEMES}")
