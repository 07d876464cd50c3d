import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from otclean import EmbeddingSet, PrototypeBank
from otclean.errors import AlphaOutOfRange, LengthMismatch, ShapeMismatch, UndefinedRow
from otclean.labeling import build_prototypes, calibrate_prototypes, filter_clean, pseudo_label, soft_scores
from otclean.ot import sinkhorn


def test_build_prototypes_examples():
    bank = build_prototypes(EmbeddingSet.from_features([[1.0, 0.0], [3.0, 0.0]]), [0, 0], 1)
    assert bank.prototypes.tolist() == [[2.0, 0.0]] and bank.support.tolist() == [2]
    rows = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(build_prototypes(rows, [2, 0, 1], 3).prototypes, rows[[1, 2, 0]])


def test_build_prototypes_loop_oracle(rng):
    x = rng.normal(size=(50, 8))
    y = rng.integers(0, 5, size=50)
    y[y == 3] = 4  # leave class 3 empty
    bank = build_prototypes(x, y, 5)
    for c in range(5):
        members = [x[i] for i in range(50) if y[i] == c]
        assert bank.support[c] == len(members)
        if members:
            np.testing.assert_allclose(bank.prototypes[c], sum(members) / len(members), rtol=1e-12, atol=1e-14)
    assert not bank.defined[3]
    assert bank.support.sum() == 50


def test_pseudo_label_examples():
    assert pseudo_label(np.array([[0.7, 0.3]])).tolist() == [0]
    assert pseudo_label(np.array([[0.5, 0.5]])).tolist() == [0]
    with pytest.raises(UndefinedRow):
        pseudo_label(np.array([[0.5, 0.5], [0.0, 0.0]]))


def test_pseudo_label_row_scan_oracle(rng):
    d, a, b = random_instance(rng, 40, 6)
    plan = sinkhorn(d, a, b).plan
    scan = []
    for row in plan:
        best = 0
        for j in range(1, row.size):
            if row[j] > row[best]:
                best = j
        scan.append(best)
    assert pseudo_label(plan).tolist() == scan


def test_soft_scores_examples(rng):
    np.testing.assert_allclose(soft_scores(np.array([[0.02, 0.08]])), [[0.2, 0.8]])
    np.testing.assert_allclose(soft_scores(np.full((1, 4), 0.1)), np.full((1, 4), 0.25))
    d, a, b = random_instance(rng, 30, 5)
    plan = sinkhorn(d, a, b)
    s = soft_scores(plan)
    assert np.abs(s.sum(axis=1) - 1).max() <= 1e-12
    assert np.array_equal(s.argmax(axis=1), pseudo_label(plan))
    with pytest.raises(UndefinedRow):
        soft_scores(np.zeros((1, 2)))


def test_filter_examples():
    assert filter_clean([0, 1, 2], [0, 2, 2]).kept_ids.tolist() == [0, 2]
    assert filter_clean([0, 1, 2], [0, 1, 2]).size == 3
    assert filter_clean([0, 1], [1, 0]).size == 0
    with pytest.raises(LengthMismatch):
        filter_clean([0, 1], [0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=60))
def test_filter_is_exact_partition(pairs):
    observed, pseudo = map(np.array, zip(*pairs))
    ids = np.arange(observed.size) * 3 + 7
    r = filter_clean(observed, pseudo, ids)
    kept = set(r.kept_ids.tolist())
    for i, o, p in zip(ids, observed, pseudo):
        assert (int(i) in kept) == (o == p)
    assert np.array_equal(r.kept_labels, observed[observed == pseudo])


def test_calibration_examples():
    old = PrototypeBank(np.array([[0.0, 0.0]]), [4])
    cur = PrototypeBank(np.array([[1.0, 1.0]]), [2])
    np.testing.assert_allclose(calibrate_prototypes(old, cur, 0.9).prototypes, [[0.1, 0.1]])
    assert np.array_equal(calibrate_prototypes(old, cur, 1.0).prototypes, old.prototypes)
    assert np.array_equal(calibrate_prototypes(old, cur, 0.0).prototypes, cur.prototypes)


def test_calibration_carries_absent_classes_bit_identically(rng):
    old = PrototypeBank(rng.normal(size=(3, 4)), [5, 6, 7])
    cur = PrototypeBank(rng.normal(size=(3, 4)), [2, 0, 1])
    new = calibrate_prototypes(old, cur, 0.37)
    assert np.array_equal(new.prototypes[1], old.prototypes[1])
    assert new.support.tolist() == [5, 6, 7]


def test_calibration_errors():
    bank = PrototypeBank(np.ones((2, 2)), [1, 1])
    with pytest.raises(AlphaOutOfRange):
        calibrate_prototypes(bank, bank, 1.5)
    with pytest.raises(ShapeMismatch):
        calibrate_prototypes(bank, PrototypeBank(np.ones((3, 2)), [1, 1, 1]), 0.5)
