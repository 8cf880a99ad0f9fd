"""Deterministic four-step resolver over a tabular context.

Runs the same evidence a prompted LLM sees through fixed rules: screen
models to the well-performing set, drop outlier neighbors, pick the models
most suitable for the local neighborhood, and fuse their target predictions
into a final verdict. Serves as an offline oracle backend and as an
interpretability floor; every threshold is a config knob on ExpertKnobs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bundle import ModelRecord, TaskKind
from .context import TabularContext, format_real


@dataclass(frozen=True)
class ExpertKnobs:
    """Thresholds for the four steps."""

    acc_band: float = 0.02          # keep models within this much val accuracy of the best
    rmse_rel_band: float = 0.05     # regression: within 5% relative val RMSE of the best
    overfit_gap: float = 0.10       # screen out train/val degradation beyond this
    outlier_vote_fraction: float = 0.5   # neighbor is an outlier below this correct fraction
    suitable_count: int = 3
    suitable_weight: int = 2        # suitable-model votes count this many times
    regression_tolerance: float = 0.1    # fraction of the label span counted as "correct"


@dataclass
class ExpertTrace:
    """Step-by-step record of one expert run."""

    well_performing: list[str]
    outlier_neighbors: list[int]
    suitable: list[str]
    final: int | float
    rationale: list[dict] = field(default_factory=list)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2))


def _screened(record: ModelRecord, classification: bool, knobs: ExpertKnobs) -> bool:
    """Overfitting screen: True when the train/val gap disqualifies the model."""
    if record.train_metric is None:
        return False
    if classification:
        return record.train_metric - record.val_metric > knobs.overfit_gap
    base = max(record.train_metric, 1e-12)
    return (record.val_metric - record.train_metric) / base > knobs.overfit_gap


def step_a_select_well_performing(
    records: list[ModelRecord], task: TaskKind, knobs: ExpertKnobs = ExpertKnobs()
) -> list[int]:
    """Model positions whose val metric sits within the band of the best,
    after the overfitting screen; never empty (falls back to the single
    best-val model)."""
    cls = task.is_classification
    survivors = [i for i, r in enumerate(records) if not _screened(r, cls, knobs)]
    if not survivors:
        vals = [r.val_metric for r in records]
        best = max(range(len(records)), key=lambda i: vals[i]) if cls else min(
            range(len(records)), key=lambda i: vals[i]
        )
        return [best]
    vals = {i: records[i].val_metric for i in survivors}
    if cls:
        best = max(vals.values())
        return [i for i in survivors if vals[i] >= best - knobs.acc_band]
    best = min(vals.values())
    return [i for i in survivors if vals[i] <= best * (1 + knobs.rmse_rel_band)]


def _correct(predictions: np.ndarray, label, task: TaskKind, label_range, knobs: ExpertKnobs) -> np.ndarray:
    if task.is_classification:
        return predictions == label
    lo, hi = label_range
    tol = max(knobs.regression_tolerance * (hi - lo), 1e-12)
    return np.abs(predictions - label) <= tol


def step_b_identify_outliers(
    neighbor_labels: np.ndarray,
    neighbor_predictions_wp: np.ndarray,
    task: TaskKind,
    label_range=None,
    knobs: ExpertKnobs = ExpertKnobs(),
) -> list[int]:
    """Positions of the non-outlier neighbors.

    A neighbor is an outlier when strictly fewer than half of the
    well-performing models predict its true label; if that would discard
    every neighbor, all are kept.
    """
    k, m_wp = neighbor_predictions_wp.shape
    kept = []
    for j in range(k):
        hits = int(_correct(neighbor_predictions_wp[j], neighbor_labels[j], task, label_range, knobs).sum())
        if hits >= knobs.outlier_vote_fraction * m_wp:
            kept.append(j)
    return kept if kept else list(range(k))


def step_c_select_suitable(
    kept_labels: np.ndarray,
    kept_predictions: np.ndarray,
    records: list[ModelRecord],
    task: TaskKind,
    knobs: ExpertKnobs = ExpertKnobs(),
) -> list[int]:
    """Top models by local skill on the non-outlier neighbors.

    Classification ranks by accuracy, regression by RMSE; ties prefer the
    better validation metric, then the lower model position.
    """
    cls = task.is_classification
    scores = []
    for i in range(len(records)):
        preds = kept_predictions[:, i]
        if cls:
            local = float(np.mean(preds == kept_labels))
            val_key = -records[i].val_metric
        else:
            local = -float(np.sqrt(np.mean((preds - kept_labels) ** 2)))
            val_key = records[i].val_metric
        scores.append((-local, val_key, i))
    scores.sort()
    return [i for _, _, i in scores[: knobs.suitable_count]]


def step_d_final(
    kept_labels: np.ndarray,
    target_predictions: np.ndarray,
    suitable: list[int],
    well_performing: list[int],
    frequencies: np.ndarray | None,
    task: TaskKind,
    label_range=None,
    knobs: ExpertKnobs = ExpertKnobs(),
) -> int | float:
    """Fuse the union's target predictions into the final verdict.

    Classification is a weighted majority vote (suitable models count
    suitable_weight times); ties fall back to the majority label among the
    kept neighbors, then the higher train-label frequency, then the lower
    class index. Regression averages the suitable models' predictions and
    clips to the train label range.
    """
    if task.is_classification:
        c = task.n_classes
        votes = np.zeros(c)
        for i in sorted(set(suitable) | set(well_performing)):
            weight = knobs.suitable_weight if i in suitable else 1
            votes[int(target_predictions[i])] += weight
        neighbor_counts = np.bincount(kept_labels.astype(int), minlength=c)
        freqs = frequencies if frequencies is not None else np.zeros(c)
        candidates = [l for l in range(c) if votes[l] > 0]
        return int(min(candidates, key=lambda l: (-votes[l], -neighbor_counts[l], -freqs[l], l)))
    mean = float(np.mean(target_predictions[sorted(suitable)]))
    lo, hi = label_range
    return float(np.clip(mean, lo, hi))


def run_expert(ctx: TabularContext, knobs: ExpertKnobs = ExpertKnobs()) -> ExpertTrace:
    """Run steps a-d over one context and return the full trace."""
    task = ctx.task
    records = ctx.model_records
    wp = step_a_select_well_performing(records, task, knobs)
    kept = step_b_identify_outliers(
        ctx.neighbor_labels, ctx.neighbor_predictions[:, wp], task, ctx.label_range, knobs
    )
    suitable = step_c_select_suitable(
        ctx.neighbor_labels[kept], ctx.neighbor_predictions[kept], records, task, knobs
    )
    final = step_d_final(
        ctx.neighbor_labels[kept],
        ctx.target_predictions,
        suitable,
        wp,
        ctx.frequencies,
        task,
        ctx.label_range,
        knobs,
    )
    outliers = [j for j in range(ctx.k) if j not in set(kept)]
    alias = [r.alias for r in records]
    return ExpertTrace(
        well_performing=[alias[i] for i in wp],
        outlier_neighbors=outliers,
        suitable=[alias[i] for i in suitable],
        final=final,
        rationale=[
            {"step": "well_performing", "kept": [alias[i] for i in wp]},
            {"step": "outliers", "discarded": outliers},
            {"step": "suitable", "kept": [alias[i] for i in suitable]},
            {"step": "final", "value": final if task.is_classification else format_real(final)},
        ],
    )
