"""Mutual-information feature weights and exact nearest-neighbor retrieval.

The distance between instances is a per-dimension re-weighted Minkowski
distance, ``(sum_l w_l |a_l - b_l|^d)^(1/d)`` with d=1 (man-rw) or d=2
(euc-rw); ``cos`` is plain unweighted cosine distance. Weights come from
the mutual information between each encoded dimension and the label,
min-max scaled and floored at WEIGHT_EPS so every dimension keeps a
strictly positive weight.

The all-rows distance scan is the hot loop: a compiled Cython kernel is
used when the extension built, with a numpy fallback selected at import
(force the fallback with COT2_PURE_PYTHON=1).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

MAN_RW = "man-rw"
EUC_RW = "euc-rw"
COS = "cos"
METRICS = (MAN_RW, EUC_RW, COS)

WEIGHT_EPS = 1e-3
DEFAULT_BINS = 20
DEFAULT_K = 10

if os.environ.get("COT2_PURE_PYTHON"):
    _kernels = None
else:
    try:
        from . import _distance as _kernels
    except ImportError:
        _kernels = None


def kernel_in_use() -> str:
    """Which distance implementation this process is running on."""
    return "compiled" if _kernels is not None else "numpy"


@dataclass
class FeatureWeights:
    """Per-dimension weights plus the metric they were fit for."""

    weights: np.ndarray
    metric: str = MAN_RW
    raw_mi: np.ndarray | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        self.weights = np.ascontiguousarray(self.weights, dtype=float)


@dataclass
class NeighborSet:
    """K nearest train rows, ascending distance (ties: lower row index first)."""

    indices: np.ndarray
    distances: np.ndarray


def discretize(values: np.ndarray, bins: int) -> np.ndarray:
    """Integer codes for MI estimation.

    Columns with at most `bins` distinct values keep one code per value;
    denser columns get equal-frequency bins cut at the empirical quantiles.
    """
    values = np.asarray(values)
    uniques, inverse = np.unique(values, return_inverse=True)
    if len(uniques) <= bins:
        return inverse
    edges = np.unique(np.quantile(values, np.arange(1, bins) / bins))
    return np.searchsorted(edges, values, side="right")


def mutual_information(x_codes: np.ndarray, y_codes: np.ndarray) -> float:
    """Plug-in MI (nats) of two discrete code vectors."""
    n = len(x_codes)
    nx, ny = int(x_codes.max()) + 1, int(y_codes.max()) + 1
    joint = np.bincount(x_codes * ny + y_codes, minlength=nx * ny).reshape(nx, ny) / n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    denom = np.outer(px, py)
    return float(np.sum(joint[nz] * np.log(joint[nz] / denom[nz])))


def mutual_information_weights(
    features: np.ndarray,
    labels: np.ndarray,
    task,
    bins: int = DEFAULT_BINS,
    metric: str = MAN_RW,
) -> FeatureWeights:
    """Estimate per-dimension MI against the label and min-max scale it.

    Classification labels are used as-is; regression labels are discretized
    like any continuous column. If every dimension ties on raw MI (e.g. all
    features constant) the weights fall back to all-ones; otherwise the
    scaled weights are clamped below at WEIGHT_EPS.
    """
    features = np.asarray(features, dtype=float)
    if features.shape[0] < 2:
        raise ValueError("need at least 2 rows to estimate mutual information")
    if task.is_classification:
        y_codes = np.asarray(labels, dtype=int)
    else:
        y_codes = discretize(np.asarray(labels, dtype=float), bins)
    mi = np.array(
        [mutual_information(discretize(features[:, j], bins), y_codes) for j in range(features.shape[1])]
    )
    spread = mi.max() - mi.min()
    if spread == 0:
        weights = np.ones_like(mi)
    else:
        weights = np.maximum((mi - mi.min()) / spread, WEIGHT_EPS)
    return FeatureWeights(weights=weights, metric=metric, raw_mi=mi)


def weighted_distance(a: np.ndarray, b: np.ndarray, w: FeatureWeights) -> float:
    """Distance between two encoded vectors under the weight set's metric."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.shape != w.weights.shape:
        raise ValueError("vector/weight length mismatch")
    if w.metric == MAN_RW:
        return float(np.sum(w.weights * np.abs(a - b)))
    if w.metric == EUC_RW:
        diff = a - b
        return math.sqrt(float(np.sum(w.weights * diff * diff)))
    if np.array_equal(a, b):
        return 0.0  # keep the metric identity exact despite rounding
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(1.0 - np.dot(a, b) / (na * nb))


def _distances_numpy(rows: np.ndarray, query: np.ndarray, w: FeatureWeights) -> np.ndarray:
    if w.metric == MAN_RW:
        return np.abs(rows - query) @ w.weights
    diff = rows - query
    return np.sqrt((diff * diff) @ w.weights)


def _cosine_distances(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(query)
    norms = np.linalg.norm(rows, axis=1)
    out = np.ones(len(rows))
    if qn == 0:
        return out
    ok = norms > 0
    out[ok] = 1.0 - (rows[ok] @ query) / (norms[ok] * qn)
    return out


def distances_to_all(rows: np.ndarray, query: np.ndarray, w: FeatureWeights) -> np.ndarray:
    """Distance from `query` to every row; compiled kernel when available."""
    rows = np.ascontiguousarray(rows, dtype=float)
    query = np.ascontiguousarray(query, dtype=float)
    if rows.shape[1] != query.shape[0] or query.shape[0] != w.weights.shape[0]:
        raise ValueError("vector/weight length mismatch")
    if w.metric == COS:
        return _cosine_distances(rows, query)
    if _kernels is not None:
        fn = _kernels.manhattan_weighted if w.metric == MAN_RW else _kernels.euclidean_weighted
        return fn(rows, query, w.weights)
    return _distances_numpy(rows, query, w)


def k_nearest(target: np.ndarray, train_features: np.ndarray, w: FeatureWeights, k: int = DEFAULT_K) -> NeighborSet:
    """Exact k smallest distances by full scan; ties go to the lower row index."""
    n = len(train_features)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} train rows")
    distances = distances_to_all(train_features, target, w)
    order = np.argsort(distances, kind="stable")[:k]
    return NeighborSet(indices=order, distances=distances[order])
