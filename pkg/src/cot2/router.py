"""Hard-sample identification and the easy-instance fallback.

Classification: an instance is easy when at least a fraction tau of the
external models agree on one label (modal count >= tau * M). Regression:
it is hard when more than M/4 of the model predictions fall strictly
outside [Q1 - 1.5*IQR, Q3 + 1.5*IQR], with quartiles taken by linear
interpolation over the sorted predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import TaskKind

DEFAULT_TAU = 0.75
IQR_SCALE = 1.5


@dataclass(frozen=True)
class HardnessVerdict:
    """Routing decision for one instance.

    `agreement` is the modal same-label count for classification and the
    IQR outlier count for regression.
    """

    is_hard: bool
    agreement: int
    tau: float


def _iqr_outliers(predictions: np.ndarray) -> np.ndarray:
    q1, q3 = np.percentile(predictions, [25, 75])
    iqr = q3 - q1
    lo, hi = q1 - IQR_SCALE * iqr, q3 + IQR_SCALE * iqr
    return (predictions < lo) | (predictions > hi)


def classify_hardness(target_predictions: np.ndarray, task: TaskKind, tau: float = DEFAULT_TAU) -> HardnessVerdict:
    """Route one instance from its M per-model predictions.

    `target_predictions` holds hard labels for classification, reals for
    regression.
    """
    preds = np.asarray(target_predictions)
    m = len(preds)
    if m < 2:
        raise ValueError("need at least 2 model predictions")
    if task.is_classification:
        agreement = int(np.bincount(preds.astype(int)).max())
        return HardnessVerdict(is_hard=agreement < tau * m, agreement=agreement, tau=tau)
    outliers = int(_iqr_outliers(preds.astype(float)).sum())
    return HardnessVerdict(is_hard=outliers > m / 4, agreement=outliers, tau=tau)


def easy_fallback(probability_rows: np.ndarray, task: TaskKind) -> int | float:
    """Consensus prediction for an instance routed past the LLM.

    Classification takes the modal argmax label over the M probability rows
    (M x C input), breaking ties by higher mean probability then lower class
    index. Regression (M-vector input) takes the median of the non-outlier
    predictions.
    """
    rows = np.asarray(probability_rows, dtype=float)
    if task.is_classification:
        labels = np.argmax(rows, axis=1)
        counts = np.bincount(labels, minlength=rows.shape[1])
        best = counts.max()
        tied = np.nonzero(counts == best)[0]
        if len(tied) == 1:
            return int(tied[0])
        mean_probs = rows.mean(axis=0)
        return int(tied[np.argmax(mean_probs[tied])])
    keep = ~_iqr_outliers(rows)
    return float(np.median(rows[keep]))


def hard_ratio(prediction_labels: np.ndarray, task: TaskKind, tau: float = DEFAULT_TAU) -> float:
    """Fraction of a split's instances that classify as hard (N x M input)."""
    matrix = np.asarray(prediction_labels)
    if matrix.size == 0:
        raise ValueError("empty prediction matrix")
    verdicts = [classify_hardness(matrix[i], task, tau).is_hard for i in range(matrix.shape[0])]
    return float(np.mean(verdicts))
