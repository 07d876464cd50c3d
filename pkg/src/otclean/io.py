"""On-disk formats.

Embeddings: ``OTSB`` magic, then little-endian u32 version (1), u32 n,
u32 d, followed by n*d little-endian float32 values in row-major order.
Labels: CSV with header ``id,observed[,truth]``. Subsets: CSV with header
``id,pseudo_label,kept``. Epoch reports: JSON Lines.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import struct
from pathlib import Path

import numpy as np

from .datamodel import EmbeddingSet, ExtractionResult, LabelTable
from .errors import DimensionMismatch, OTCleanError

MAGIC = b"OTSB"
VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FormatError(OTCleanError):
    pass


def write_embeddings(path, e: EmbeddingSet) -> None:
    feats = np.ascontiguousarray(e.features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, e.n, e.d))
        fh.write(feats.tobytes(order="C"))


def read_embeddings(path, ids=None) -> EmbeddingSet:
    """Read an OTSB file; rows get ids 0..n-1 unless ``ids`` is given."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 4 * n * d:
        raise FormatError(f"{path}: expected {4 * n * d} payload bytes, found {len(body)}")
    feats = np.frombuffer(body, dtype="<f4").reshape(n, d).astype(np.float64)
    ids = np.arange(n, dtype=np.uint64) if ids is None else np.asarray(ids, dtype=np.uint64)
    return EmbeddingSet(ids=ids, features=feats)


def write_labels(path, ids, labels: LabelTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "observed"] + (["truth"] if labels.has_truth else []))
        for r, i in enumerate(ids):
            row = [int(i), int(labels.observed[r])]
            if labels.has_truth:
                row.append(int(labels.truth[r]))
            w.writerow(row)


def read_labels(path, num_classes: int | None = None):
    """Return ``(ids, LabelTable)``; K defaults to 1 + the largest label seen."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:2] != ["id", "observed"]:
            raise FormatError(f"{path}: header must start with id,observed")
        has_truth = "truth" in reader.fieldnames
        ids, observed, truth = [], [], []
        for row in reader:
            ids.append(int(row["id"]))
            observed.append(int(row["observed"]))
            if has_truth:
                truth.append(int(row["truth"]))
    observed = np.array(observed, dtype=np.int64)
    truth = np.array(truth, dtype=np.int64) if has_truth else None
    if num_classes is None:
        top = [observed.max(initial=-1)] + ([truth.max(initial=-1)] if truth is not None else [])
        num_classes = int(max(top)) + 1
    return np.array(ids, dtype=np.uint64), LabelTable(observed=observed, num_classes=num_classes, truth=truth)


def write_subset(path, ids, result: ExtractionResult) -> None:
    kept = set(int(i) for i in result.kept_ids)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "pseudo_label", "kept"])
        for r, i in enumerate(ids):
            w.writerow([int(i), int(result.pseudo_labels[r]), int(int(i) in kept)])


def read_subset(path):
    """Return ``(ids, pseudo_labels, kept_mask)`` from a subset CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["id", "pseudo_label", "kept"]:
            raise FormatError(f"{path}: header must be id,pseudo_label,kept")
        rows = [(int(r["id"]), int(r["pseudo_label"]), int(r["kept"])) for r in reader]
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    if np.any((arr[:, 2] != 0) & (arr[:, 2] != 1)):
        raise FormatError(f"{path}: kept must be 0 or 1")
    return arr[:, 0].astype(np.uint64), arr[:, 1], arr[:, 2].astype(bool)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def dumps_json(obj) -> str:
    return json.dumps(_json_safe(obj), sort_keys=False)


def append_jsonl(path, record: dict) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(record) + "\n")


def read_jsonl(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def read_matrix_csv(path) -> np.ndarray:
    m = np.loadtxt(path, delimiter=",", ndmin=2)
    if m.size == 0:
        raise DimensionMismatch(f"{path}: empty matrix")
    return m


def read_config(path) -> dict:
    """Flat ``key = value`` file; keys mirror CLI flag names (dashes or underscores)."""
    parser = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[config]\n" + text)
    return {k.replace("-", "_"): v for k, v in parser["config"].items()}
