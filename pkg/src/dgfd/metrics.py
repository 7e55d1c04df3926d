"""Detection metrics: accuracy, ROC-AUC, and equal error rate.

AUC uses the Mann-Whitney rank formulation with half-credit for ties, which
agrees exactly (not just approximately) with O(n^2) pairwise counting.  EER
walks the ROC operating points (predict positive when score >= threshold)
and linearly interpolates in (FPR, FNR) space when no exact crossing exists.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.stats import rankdata


class EerResult(NamedTuple):
    eer: float
    threshold: float


def _validate(scores, labels, need_both_classes: bool):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size == 0:
        raise ValueError("empty score set")
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels differ in length: {scores.size} vs {labels.size}")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary (0/1)")
    labels = labels.astype(np.int64)
    if need_both_classes:
        if not (labels == 1).any():
            raise ValueError("no positive (label 1) samples present")
        if not (labels == 0).any():
            raise ValueError("no negative (label 0) samples present")
    return scores, labels


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    """Fraction of samples where [score >= threshold] matches the label."""
    scores, labels = _validate(scores, labels, need_both_classes=False)
    predictions = (scores >= threshold).astype(np.int64)
    return float(np.mean(predictions == labels))


def auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), via rank statistics."""
    scores, labels = _validate(scores, labels, need_both_classes=True)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def eer(scores, labels) -> EerResult:
    """Equal error rate and its operating threshold.

    FPR(t) = P(score >= t | neg) falls and FNR(t) = P(score < t | pos) rises
    as t sweeps the sorted scores, so a crossing always exists between the
    all-positive and all-negative operating points.
    """
    scores, labels = _validate(scores, labels, need_both_classes=True)
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])

    thresholds = np.unique(scores)
    thresholds = np.append(thresholds, thresholds[-1] + 1.0)  # all-reject endpoint
    fpr = 1.0 - np.searchsorted(neg, thresholds, side="left") / neg.size
    fnr = np.searchsorted(pos, thresholds, side="left") / pos.size

    diff = fnr - fpr  # runs from -1 up to +1
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0:
        return EerResult(float(fpr[k]), float(thresholds[k]))
    alpha = -diff[k - 1] / (diff[k] - diff[k - 1])
    value = fpr[k - 1] + alpha * (fpr[k] - fpr[k - 1])
    threshold = thresholds[k - 1] + alpha * (thresholds[k] - thresholds[k - 1])
    return EerResult(float(value), float(threshold))


def evaluate_scores(scores, labels, threshold: float = 0.5) -> dict:
    """All three metrics for one score set, as a plain dict."""
    return {
        "acc": accuracy(scores, labels, threshold),
        "auc": auc(scores, labels),
        "eer": eer(scores, labels).eer,
        "n": int(np.asarray(scores).reshape(-1).size),
    }
