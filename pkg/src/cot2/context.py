"""Tabular context assembly: the non-semantic payload describing one target
instance.

A context never contains raw feature values or any semantic string — only
label frequencies (classification), per-model train/val metrics, the true
labels and per-model predictions of the K nearest train neighbors, and the
per-model predictions for the target itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import DatasetBundle, ModelRecord, TaskKind, compute_model_metrics
from .retrieval import DEFAULT_K, FeatureWeights, k_nearest

TARGET_SPLITS = ("val", "test")


def format_real(value: float) -> str:
    """Canonical 4-decimal rendering used everywhere a regression value is
    serialized (prompts, dumps, stub responses)."""
    return f"{float(value):.4f}"


def label_frequencies(train_labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Empirical class frequencies q_i over the train labels; sums to 1."""
    counts = np.bincount(np.asarray(train_labels, dtype=int), minlength=n_classes)
    return counts / counts.sum()


@dataclass
class TabularContext:
    """Everything the prompt (or the deterministic expert) may look at."""

    task: TaskKind
    model_records: list[ModelRecord]
    neighbor_labels: np.ndarray          # (K,) ints or floats
    neighbor_predictions: np.ndarray     # (K, M) hard labels or reals
    target_predictions: np.ndarray       # (M,) hard labels or reals
    frequencies: np.ndarray | None = None    # (C,) classification only
    label_range: tuple[float, float] | None = None  # train min/max, regression only

    @property
    def k(self) -> int:
        return len(self.neighbor_labels)

    @property
    def m(self) -> int:
        return len(self.model_records)

    def to_dict(self) -> dict:
        """JSON-ready dump; regression reals render at exactly 4 decimals."""
        if self.task.is_classification:
            labels = [int(v) for v in self.neighbor_labels]
            neighbor_preds = [[int(v) for v in row] for row in self.neighbor_predictions]
            target_preds = [int(v) for v in self.target_predictions]
        else:
            labels = [format_real(v) for v in self.neighbor_labels]
            neighbor_preds = [[format_real(v) for v in row] for row in self.neighbor_predictions]
            target_preds = [format_real(v) for v in self.target_predictions]
        doc = {
            "task": self.task.kind,
            "k": self.k,
            "m": self.m,
            "models": [
                {
                    "alias": r.alias,
                    "model_id": r.model_id,
                    "train_metric": r.train_metric,
                    "val_metric": r.val_metric,
                }
                for r in self.model_records
            ],
            "neighbor_labels": labels,
            "neighbor_predictions": neighbor_preds,
            "target_predictions": target_preds,
        }
        if self.frequencies is not None:
            doc["label_frequencies"] = [float(q) for q in self.frequencies]
        if self.label_range is not None:
            doc["label_range"] = [format_real(v) for v in self.label_range]
        return doc

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def build_context(
    bundle: DatasetBundle,
    weights: FeatureWeights,
    target: tuple[str, int],
    k: int = DEFAULT_K,
    model_records: list[ModelRecord] | None = None,
) -> TabularContext:
    """Assemble the context for one (split, row) target.

    Neighbors always come from the train split, ordered nearest first.
    Classification predictions are shown as argmax hard labels; probability
    rows stay reserved for the voting baselines. Pass precomputed
    model_records to avoid re-deriving metrics per target.
    """
    split, row = target
    if split not in TARGET_SPLITS:
        raise ValueError(f"target split must be one of {TARGET_SPLITS}, got {split!r}")
    neighbors = k_nearest(bundle.encoded[split][row], bundle.encoded["train"], weights, k)
    if model_records is None:
        model_records = compute_model_metrics(bundle)

    train_label_matrix = bundle.prediction_labels("train") if bundle.has_train_predictions() else None
    if train_label_matrix is None:
        raise ValueError("neighbor predictions need train-split prediction matrices")
    frequencies = None
    label_range = None
    if bundle.task.is_classification:
        frequencies = label_frequencies(bundle.labels["train"], bundle.task.n_classes)
    else:
        label_range = bundle.train_label_range()

    return TabularContext(
        task=bundle.task,
        model_records=model_records,
        neighbor_labels=bundle.labels["train"][neighbors.indices],
        neighbor_predictions=train_label_matrix[neighbors.indices],
        target_predictions=bundle.prediction_labels(split)[row],
        frequencies=frequencies,
        label_range=label_range,
    )
