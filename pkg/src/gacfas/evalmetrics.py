"""Binary-classification evaluation: AUC, HTER at the EER point, TPR@FPR.

Scores are oriented so higher means more positive ("live"). Classification
at a threshold tau predicts positive when score >= tau. Threshold sweeps
enumerate the midpoints between consecutive distinct scores plus -inf and
+inf, which covers every achievable confusion matrix; the ROC is a step
function and nothing is interpolated.

The EER thresholding convention (pick the threshold on the evaluation set
itself that minimizes |FAR - FRR|, ties resolved toward the lower threshold)
is an artifact convention: callers get the threshold back so they can layer
a different policy on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ScoredSet", "hter_at_eer", "roc_auc", "tpr_at_fpr"]


@dataclass(frozen=True)
class ScoredSet:
    """Scores (higher = more positive) with binary labels (1 = positive)."""

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if scores.ndim != 1 or scores.shape != labels.shape:
            raise ValueError(
                f"scores and labels must be equal-length vectors, got {scores.shape} and {labels.shape}"
            )
        if scores.shape[0] < 1:
            raise ValueError("need at least one scored sample")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def split(self):
        pos = self.scores[self.labels == 1]
        neg = self.scores[self.labels == 0]
        if pos.shape[0] == 0 or neg.shape[0] == 0:
            raise ValueError("threshold metrics need at least one positive and one negative")
        return pos, neg


def roc_auc(s: ScoredSet) -> float:
    """Mann-Whitney AUC: P(score+ > score-) + 0.5 P(score+ = score-).

    Computed by the average-rank formula, which reproduces the half-credit
    tie convention exactly.
    """
    pos, neg = s.split()
    scores = s.scores
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.shape[0], dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < sorted_scores.shape[0]:
        j = i
        while j + 1 < sorted_scores.shape[0] and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = float(ranks[s.labels == 1].sum())
    n_pos, n_neg = pos.shape[0], neg.shape[0]
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    uniq = np.unique(scores)
    mids = 0.5 * (uniq[:-1] + uniq[1:])
    return np.concatenate(([-math.inf], mids, [math.inf]))


def _far_frr(pos: np.ndarray, neg: np.ndarray, tau: float):
    far = float(np.count_nonzero(neg >= tau)) / neg.shape[0]
    frr = float(np.count_nonzero(pos < tau)) / pos.shape[0]
    return far, frr


def hter_at_eer(s: ScoredSet) -> tuple[float, float]:
    """HTER = (FAR + FRR)/2 at the threshold minimizing |FAR - FRR|.

    The sweep runs over midpoints between consecutive distinct scores plus
    +-inf; ties on |FAR - FRR| resolve to the lower threshold.
    """
    pos, neg = s.split()
    best_tau = None
    best_diff = math.inf
    best_hter = None
    for tau in _candidate_thresholds(s.scores):
        far, frr = _far_frr(pos, neg, tau)
        diff = abs(far - frr)
        if diff < best_diff:
            best_diff = diff
            best_tau = tau
            best_hter = (far + frr) / 2.0
    return best_hter, best_tau


def tpr_at_fpr(s: ScoredSet, fpr_cap: float = 0.05) -> float:
    """Maximum TPR over thresholds whose FPR <= fpr_cap (step ROC)."""
    if not 0.0 <= fpr_cap <= 1.0:
        raise ValueError(f"fpr_cap must be in [0, 1], got {fpr_cap}")
    pos, neg = s.split()
    best = 0.0
    for tau in _candidate_thresholds(s.scores):
        fpr = float(np.count_nonzero(neg >= tau)) / neg.shape[0]
        if fpr <= fpr_cap:
            tpr = float(np.count_nonzero(pos >= tau)) / pos.shape[0]
            best = max(best, tpr)
    return best
