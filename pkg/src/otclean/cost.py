"""Sample-to-prototype cost matrices."""
from __future__ import annotations

import numpy as np

from .datamodel import EmbeddingSet, PrototypeBank
from .errors import ShapeMismatch, ZeroNormVector

NORM_FLOOR = 1e-12
METRICS = ("cosine", "euclidean")


def _matrices(e, p):
    z = e.features if isinstance(e, EmbeddingSet) else np.atleast_2d(np.asarray(e, dtype=np.float64))
    if isinstance(p, PrototypeBank):
        p.require_defined()
        c = p.prototypes
    else:
        c = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if z.shape[1] != c.shape[1]:
        raise ShapeMismatch(f"feature dim {z.shape[1]} != prototype dim {c.shape[1]}")
    return z, c


def _unit_rows(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    bad = np.flatnonzero(norms < NORM_FLOOR)
    if bad.size:
        raise ZeroNormVector(f"{what} rows {bad[:5].tolist()} have norm below {NORM_FLOOR}")
    return x / norms[:, None]


def cosine_cost(e, p) -> np.ndarray:
    """D_ij = 1 - cos(z_i, C_j), clipped into [0, 2]."""
    z, c = _matrices(e, p)
    d = 1.0 - _unit_rows(z, "sample") @ _unit_rows(c, "prototype").T
    return np.clip(d, 0.0, 2.0)


def euclidean_cost(e, p) -> np.ndarray:
    """D_ij = ||z_i - C_j||_2."""
    z, c = _matrices(e, p)
    # direct differences keep exact zeros; row blocks bound the n x K x d temporary
    d = np.empty((z.shape[0], c.shape[0]))
    step = max(1, 2_000_000 // max(1, c.size))
    for start in range(0, z.shape[0], step):
        diff = z[start:start + step, None, :] - c[None, :, :]
        d[start:start + step] = np.sqrt(np.einsum("ikd,ikd->ik", diff, diff))
    return d


def cost_matrix(e, p, metric: str = "cosine") -> np.ndarray:
    if metric == "cosine":
        return cosine_cost(e, p)
    if metric == "euclidean":
        return euclidean_cost(e, p)
    raise ValueError(f"unknown cost metric {metric!r}; expected one of {METRICS}")
