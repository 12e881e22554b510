"""Classification metrics: accuracy, ROC/AUC, Cohen's kappa, confusion matrix."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    pass


def _labels(y, name="labels") -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise MetricError(f"{name} must be one-dimensional")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise MetricError(f"{name} must be integer class ids")
        arr = arr.astype(np.int64)
    return arr.astype(np.int64)


def _pair(y_true, y_pred):
    t, p = _labels(y_true, "y_true"), _labels(y_pred, "y_pred")
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.size} vs {p.size}")
    if t.size == 0:
        raise MetricError("empty input")
    return t, p


def argmax_predictions(y_score) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest class
    return np.argmax(np.asarray(y_score, dtype=np.float64), axis=1)


def accuracy(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return int(np.count_nonzero(t == p)) / t.size


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    """Row ``i``, column ``j`` counts samples of true class ``i`` predicted ``j``."""
    t, p = _pair(y_true, y_pred)
    for arr, name in ((t, "y_true"), (p, "y_pred")):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise MetricError(f"{name} has labels outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def roc_curve(y_true, scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC points swept over every distinct score, highest threshold first.

    Returns ``(fpr, tpr, thresholds)``; the curve starts at ``(0, 0)`` with an
    infinite threshold. Tied scores move both rates in one step, so the
    trapezoid under a tie segment credits the tie with one half.
    """
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise MetricError("y_true and scores must be equal-length vectors")
    pos = y == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined unless both classes are present")
    order = np.argsort(-s, kind="mergesort")
    s, pos = s[order], pos[order]
    # last index of each run of equal scores
    cut = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(pos)[cut]
    fp = (cut + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[cut]]
    return fpr, tpr, thresholds


def auc(fpr, tpr) -> float:
    fpr, tpr = np.asarray(fpr, dtype=np.float64), np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def binary_auc(y_true, scores) -> float:
    fpr, tpr, _ = roc_curve(y_true, scores)
    return auc(fpr, tpr)


def multiclass_auc(y_true, y_score) -> tuple[float, dict[int, float], list[int]]:
    """Macro one-vs-rest AUC.

    Returns ``(macro, per_class, absent)`` where ``per_class`` maps every
    class present in ``y_true`` to its class-vs-rest AUC and ``absent`` lists
    score columns with no positive sample (excluded from the mean).
    """
    t = _labels(y_true, "y_true")
    scores = np.asarray(y_score, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != t.size:
        raise MetricError("y_score must be an n x K matrix matching y_true")
    present = sorted(set(t.tolist()))
    if len(present) < 2:
        raise MetricError("multiclass AUC needs at least two classes present")
    k = scores.shape[1]
    if present[-1] >= k or present[0] < 0:
        raise MetricError(f"labels outside [0, {k})")
    per_class = {c: binary_auc((t == c).astype(int), scores[:, c]) for c in present}
    absent = [c for c in range(k) if c not in per_class]
    macro = float(np.mean(list(per_class.values())))
    return macro, per_class, absent


def cohens_kappa(y_true, y_pred, num_classes: int | None = None) -> float:
    """Unweighted chance-corrected agreement.

    Evaluated on integer counts as ``(n*trace - sum(r*c)) / (n^2 - sum(r*c))``
    so the only rounding happens in the final division.
    """
    t, p = _pair(y_true, y_pred)
    k = num_classes or int(max(t.max(), p.max())) + 1
    cm = confusion_matrix(t, p, k)
    n = int(cm.sum())
    chance = sum(int(r) * int(c) for r, c in zip(cm.sum(axis=1), cm.sum(axis=0)))
    denom = n * n - chance
    if denom == 0:
        raise MetricError("kappa is undefined when both raters are constant and agree")
    return (n * int(np.trace(cm)) - chance) / denom


def quadratic_weighted_kappa(y_true, y_pred, num_classes: int | None = None) -> float:
    """Kappa with ``(i - j)^2`` disagreement weights, as used for graded labels."""
    t, p = _pair(y_true, y_pred)
    k = num_classes or int(max(t.max(), p.max())) + 1
    if k < 2:
        raise MetricError("weighted kappa needs at least two classes")
    cm = confusion_matrix(t, p, k).astype(np.float64)
    n = cm.sum()
    idx = np.arange(k)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (k - 1) ** 2
    expected = np.outer(cm.sum(axis=1), cm.sum(axis=0)) / n
    denom = float((weights * expected).sum())
    if denom == 0.0:
        raise MetricError("weighted kappa is undefined for constant raters")
    return float(1.0 - (weights * cm).sum() / denom)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def metric_report(y_true, y_score, num_classes: int | None = None) -> dict:
    """Metrics JSON: accuracy, macro and per-class AUC, kappa, confusion."""
    scores = np.asarray(y_score, dtype=np.float64)
    k = num_classes or scores.shape[1]
    t = _labels(y_true, "y_true")
    pred = argmax_predictions(scores)
    macro = per_class = None
    try:
        macro, per, _ = multiclass_auc(t, scores)
        per_class = [per.get(c) for c in range(k)]
    except MetricError:
        pass
    return {
        "accuracy": accuracy(t, pred),
        "auc_macro": macro,
        "auc_per_class": per_class,
        "kappa": _maybe(cohens_kappa, t, pred, k),
        "kappa_quadratic": _maybe(quadratic_weighted_kappa, t, pred, k),
        "confusion": confusion_matrix(t, pred, k).tolist(),
    }
