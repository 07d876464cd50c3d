import numpy as np
import pytest

from oracles import finite_difference
from otclean import EmbeddingSet, ExtractionResult, PrototypeBank
from otclean.classifier import (LinearModel, nearest_prototype_predict, predict, safe_step, softmax_loss_grad,
                                train_on_subset, train_softmax)
from otclean.errors import EmptySubset, ShapeMismatch, UndefinedPrototype


def _gradient_errors(rng, n=10, d=4, k=3, l2=1e-2):
    x = rng.normal(size=(n, d))
    y = rng.integers(0, k, size=n)
    w, b = rng.normal(size=(k, d)), rng.normal(size=k)
    _, gw, gb = softmax_loss_grad(w, b, x, y, l2)
    fw = finite_difference(lambda v: softmax_loss_grad(v, b, x, y, l2)[0], w)
    fb = finite_difference(lambda v: softmax_loss_grad(w, v, x, y, l2)[0], b)
    return max(np.abs(gw - fw).max() / np.abs(fw).max(), np.abs(gb - fb).max() / np.abs(fb).max())


def test_gradient_matches_finite_differences(rng):
    assert max(_gradient_errors(rng) for _ in range(20)) <= 1e-5


def test_separable_pair():
    m = train_softmax([[1.0, 0.0], [-1.0, 0.0]], [0, 1], 2, epochs=50)
    log = m.training_log
    assert all(b < a for a, b in zip(log, log[1:]))
    assert predict(m, np.array([[1.0, 0.0], [-1.0, 0.0]])).tolist() == [0, 1]


def test_identical_features_converge_to_ln2():
    m = train_softmax(np.ones((4, 3)), [0, 1, 0, 1], 2, epochs=2000, l2=1e-2)
    assert m.training_log[-1] == pytest.approx(np.log(2), abs=1e-6)


def test_loss_nonincreasing_at_safe_step(rng):
    x = 3 * rng.normal(size=(60, 5))
    y = rng.integers(0, 4, size=60)
    log = train_softmax(x, y, 4, epochs=200, step=safe_step(x, 1e-3)).training_log
    assert np.all(np.diff(log) <= 1e-9)


def test_predict_examples_and_bias_shift(rng):
    m = LinearModel(np.eye(3), np.zeros(3))
    assert predict(m, np.array([[0.1, 0.9, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 0.0]])).tolist() == [1, 0, 0]
    x = rng.normal(size=(20, 3))
    m2 = LinearModel(rng.normal(size=(3, 3)), rng.normal(size=3))
    shifted = LinearModel(m2.weights, m2.bias + 2.5)
    assert np.array_equal(predict(m2, x), predict(shifted, x))
    with pytest.raises(ShapeMismatch):
        predict(m, np.zeros((1, 2)))


def test_empty_subset():
    with pytest.raises(EmptySubset):
        train_softmax(np.zeros((0, 2)), [], 2)
    data = EmbeddingSet.from_features(np.ones((2, 2)))
    with pytest.raises(EmptySubset):
        train_on_subset(ExtractionResult([], [0, 1], []), data, 2)


def test_train_on_subset_uses_kept_rows():
    data = EmbeddingSet(ids=[10, 11, 12], features=[[1.0, 0.0], [-1.0, 0.0], [5.0, 5.0]])
    r = ExtractionResult(kept_ids=[10, 11], pseudo_labels=[0, 1, 0], kept_labels=[0, 1])
    m = train_on_subset(r, data, 2, epochs=30)
    ref = train_softmax([[1.0, 0.0], [-1.0, 0.0]], [0, 1], 2, epochs=30)
    assert np.array_equal(m.weights, ref.weights)


def test_nearest_prototype(rng):
    bank = PrototypeBank(np.array([[1.0, 0.0], [0.0, 1.0]]), [1, 1])
    assert nearest_prototype_predict(bank, np.array([[0.0, 1.0]])).tolist() == [1]
    assert nearest_prototype_predict(bank, np.array([[1.0, 1.0]])).tolist() == [0]
    protos, x = rng.normal(size=(4, 3)), rng.normal(size=(25, 3))
    rbank = PrototypeBank(protos, [1] * 4)
    loop = [min(range(4), key=lambda j: np.sqrt(((xi - protos[j]) ** 2).sum())) for xi in x]
    assert nearest_prototype_predict(rbank, x, metric="euclidean").tolist() == loop
    with pytest.raises(UndefinedPrototype):
        nearest_prototype_predict(PrototypeBank(np.eye(2), [1, 0]), np.ones((1, 2)))
