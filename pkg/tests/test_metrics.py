import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdcn.metrics import (MetricError, accuracy, argmax_predictions, auc, binary_auc, cohens_kappa,
                          confusion_matrix, metric_report, multiclass_auc, quadratic_weighted_kappa,
                          roc_curve)


def pair_auc(y, s):
    pos, neg = s[y == 1], s[y == 0]
    return np.mean([1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg])


def test_accuracy():
    assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0
    assert accuracy([0, 1], [1, 0]) == 0.0
    assert accuracy([0, 1, 1, 0, 1], [0, 1, 1, 0, 0]) == 0.8


def test_accuracy_length_mismatch():
    with pytest.raises(MetricError):
        accuracy([0, 1], [0])


def test_auc_examples():
    assert binary_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert binary_auc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    assert binary_auc([0, 1, 0, 1], [0.3] * 4) == 0.5


def test_roc_starts_at_origin():
    fpr, tpr, thr = roc_curve([0, 1, 1, 0], [0.2, 0.7, 0.4, 0.4])
    assert (fpr[0], tpr[0]) == (0.0, 0.0) and np.isinf(thr[0])
    assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert auc(fpr, tpr) == pair_auc(np.array([0, 1, 1, 0]), np.array([0.2, 0.7, 0.4, 0.4]))


def test_auc_single_class():
    with pytest.raises(MetricError):
        binary_auc([1, 1], [0.2, 0.3])


def test_multiclass_examples():
    y = np.array([0, 1, 2, 1])
    assert multiclass_auc(y, np.eye(3)[y])[0] == 1.0
    macro, per, absent = multiclass_auc(y, np.full((4, 3), 1 / 3))
    assert macro == 0.5 and set(per.values()) == {0.5} and absent == []


def test_multiclass_absent_class():
    y = np.array([0, 1, 0, 1])
    macro, per, absent = multiclass_auc(y, np.random.default_rng(0).random((4, 3)))
    assert absent == [2] and sorted(per) == [0, 1]


def test_multiclass_crafted():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 3, 60)
    s = rng.integers(0, 5, (60, 3)) / 4
    macro, per, _ = multiclass_auc(y, s)
    expect = {c: pair_auc((y == c).astype(int), s[:, c]) for c in range(3)}
    for c in range(3):
        assert abs(per[c] - expect[c]) < 1e-12
    assert abs(macro - np.mean(list(expect.values()))) < 1e-12


def test_kappa_examples():
    assert cohens_kappa([0, 1, 1, 0], [0, 1, 1, 0]) == 1.0
    # confusion [[2, 1], [0, 2]]
    assert cohens_kappa([0, 0, 0, 1, 1], [0, 0, 1, 1, 1]) == pytest.approx((0.8 - 0.48) / 0.52, abs=1e-15)


def test_kappa_undefined_for_agreeing_constants():
    with pytest.raises(MetricError):
        cohens_kappa([1, 1, 1], [1, 1, 1])


def test_kappa_near_zero_for_independent_labels():
    rng = np.random.default_rng(2)
    values = []
    for _ in range(50):
        y = rng.integers(0, 4, 1000)
        values.append(cohens_kappa(y, rng.permutation(y), 4))
    assert abs(np.mean(values)) < 0.05


def test_quadratic_kappa():
    assert quadratic_weighted_kappa([0, 1, 2, 3], [0, 1, 2, 3]) == 1.0
    # off-by-one costs less than off-by-three
    near = quadratic_weighted_kappa([0, 1, 2, 3, 0, 3], [1, 1, 2, 3, 0, 3])
    far = quadratic_weighted_kappa([0, 1, 2, 3, 0, 3], [3, 1, 2, 3, 0, 3])
    assert far < near < 1.0


def test_confusion():
    assert confusion_matrix([0, 1, 2], [0, 1, 2], 3).tolist() == np.eye(3, dtype=int).tolist()
    assert confusion_matrix([1], [0], 2).tolist() == [[0, 0], [1, 0]]
    rng = np.random.default_rng(3)
    y, p = rng.integers(0, 5, 100), rng.integers(0, 5, 100)
    assert confusion_matrix(y, p, 5).sum(axis=1).tolist() == np.bincount(y, minlength=5).tolist()


def test_confusion_label_range():
    with pytest.raises(MetricError):
        confusion_matrix([0, 3], [0, 1], 3)


def test_argmax_ties_lowest():
    assert argmax_predictions([[0.5, 0.5], [0.2, 0.8]]).tolist() == [0, 1]


def test_report_schema():
    y = np.array([0, 1, 1, 0])
    r = metric_report(y, np.eye(2)[y], 2)
    assert set(r) == {"accuracy", "auc_macro", "auc_per_class", "kappa", "kappa_quadratic", "confusion"}
    assert r["accuracy"] == 1.0 and r["auc_per_class"] == [1.0, 1.0]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 6)), min_size=2, max_size=40))
def test_binary_auc_matches_pairs(rows):
    y = np.array([r[0] for r in rows])
    s = np.array([r[1] for r in rows], dtype=float)
    if y.min() == y.max():
        return
    assert abs(binary_auc(y, s) - pair_auc(y, s)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
def test_kappa_bounds(rows):
    y = [r[0] for r in rows]
    p = [r[1] for r in rows]
    try:
        k = cohens_kappa(y, p, 4)
    except MetricError:
        return
    assert -1.0 <= k <= 1.0
