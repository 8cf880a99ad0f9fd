"""Seed-repeated evaluation, cross-dataset rank aggregation, pairwise
Wilcoxon-Holm significance, and cost reporting.

The signed-rank test uses the exact small-sample null distribution for
n <= 25 tie-free samples and a continuity-corrected normal approximation
(with the usual tie correction) beyond that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .bundle import DatasetBundle, accuracy, rmse
from .gateway import Usage
from .pipeline import run_method

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
EXACT_WILCOXON_MAX_N = 25
DEFAULT_ALPHA = 0.05


def average_ranks(values: np.ndarray, higher_is_better: bool) -> np.ndarray:
    """Ranks 1..n (1 = best) with tied values sharing the average rank."""
    values = np.asarray(values, dtype=float)
    keyed = -values if higher_is_better else values
    order = np.argsort(keyed, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and keyed[order[j + 1]] == keyed[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def mean_ranks(table: np.ndarray, higher_is_better: bool) -> np.ndarray:
    """Per-method mean of per-dataset ranks for a methods x datasets table."""
    table = np.asarray(table, dtype=float)
    if np.any(np.isnan(table)):
        raise ValueError("metric table contains NaN")
    per_dataset = np.stack(
        [average_ranks(table[:, j], higher_is_better) for j in range(table.shape[1])], axis=1
    )
    return per_dataset.mean(axis=1)


def _exact_wilcoxon_cdf_counts(rank_units: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign subsets whose rank sum is s, over the
    actual (tie-averaged) ranks scaled to integers. For tie-free data this
    is the classical distribution over subsets of {1..n}."""
    counts = np.zeros(int(rank_units.sum()) + 1)
    counts[0] = 1.0
    for r in rank_units:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:-r]
        counts += shifted
    return counts


def wilcoxon_signed_rank(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sided signed-rank p-value for paired samples.

    Zero differences are dropped (p = 1 when nothing remains). For n <= 25
    the exact permutation null distribution over the tie-averaged ranks is
    used (identical to the classical tables when tie-free); beyond that a
    normal approximation with tie and continuity corrections.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return 1.0
    abs_ranks = average_ranks(np.abs(d), higher_is_better=False)
    w_plus = float(abs_ranks[d > 0].sum())
    w_minus = float(abs_ranks[d < 0].sum())
    w = min(w_plus, w_minus)

    if n <= EXACT_WILCOXON_MAX_N:
        # average ranks are half-integers: double them to run an integer DP
        units = np.rint(2 * abs_ranks).astype(int)
        counts = _exact_wilcoxon_cdf_counts(units)
        p = 2.0 * counts[: int(round(2 * w)) + 1].sum() / 2.0**n
        return min(1.0, p)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    z = (w - mean + 0.5) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    return min(1.0, p)


def holm_adjust(pvalues: np.ndarray) -> np.ndarray:
    """Holm step-down adjusted p-values (monotone, capped at 1)."""
    pvalues = np.asarray(pvalues, dtype=float)
    m = len(pvalues)
    order = np.argsort(pvalues, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, i in enumerate(order):
        running = max(running, (m - rank) * pvalues[i])
        adjusted[i] = min(1.0, running)
    return adjusted


@dataclass
class SignificanceResult:
    methods: list[str]
    raw_p: np.ndarray
    adjusted_p: np.ndarray
    significant: np.ndarray
    alpha: float


def wilcoxon_holm(table: np.ndarray, methods: list[str] | None = None, alpha: float = DEFAULT_ALPHA) -> SignificanceResult:
    """All-pairs signed-rank tests over per-dataset metrics with Holm
    correction across the pairs."""
    table = np.asarray(table, dtype=float)
    n_methods = table.shape[0]
    if methods is None:
        methods = [f"method_{i}" for i in range(n_methods)]
    pairs = [(a, b) for a in range(n_methods) for b in range(a + 1, n_methods)]
    raw = np.array([wilcoxon_signed_rank(table[a], table[b]) for a, b in pairs])
    adjusted = holm_adjust(raw) if len(raw) else raw

    raw_m = np.ones((n_methods, n_methods))
    adj_m = np.ones((n_methods, n_methods))
    for (a, b), p_raw, p_adj in zip(pairs, raw, adjusted):
        raw_m[a, b] = raw_m[b, a] = p_raw
        adj_m[a, b] = adj_m[b, a] = p_adj
    significant = adj_m <= alpha
    np.fill_diagonal(significant, False)
    return SignificanceResult(methods, raw_m, adj_m, significant, alpha)


@dataclass
class MethodEvaluation:
    method: str
    per_seed: list[float]
    mean: float
    std: float
    usage: Usage = field(default_factory=Usage)


def evaluate_method(bundle_source, method: str, seeds=DEFAULT_SEEDS, split: str = "test", **kwargs) -> MethodEvaluation:
    """Metric mean/std over seeds.

    bundle_source is either a fixed DatasetBundle (external splits, used
    as-is for every seed) or a callable seed -> DatasetBundle when this
    tool owns the splitting.
    """
    scores = []
    usage_total = Usage()
    for seed in seeds:
        bundle: DatasetBundle = bundle_source(seed) if callable(bundle_source) else bundle_source
        predictions, usage = run_method(bundle, method, seed=seed, split=split, **kwargs)
        truth = bundle.labels[split]
        if bundle.task.is_classification:
            scores.append(accuracy(predictions, truth))
        else:
            scores.append(rmse(predictions, truth))
        usage_total.add(usage)
    return MethodEvaluation(
        method=method,
        per_seed=scores,
        mean=float(np.mean(scores)),
        std=float(np.std(scores)),
        usage=usage_total,
    )


COST_COLUMNS = ["dataset", "tau", "metric", "time_s", "input_tokens", "output_tokens", "price"]


def cost_report(rows: list[dict]) -> pd.DataFrame:
    """One row per (dataset, tau): metric, wall time, tokens in/out, price."""
    frame = pd.DataFrame(rows)
    return frame[[c for c in COST_COLUMNS if c in frame.columns]]
