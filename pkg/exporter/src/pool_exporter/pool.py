"""Pool training: fit every model in the spec and collect prediction
matrices for all three splits, plus the exporter's own metric view used to
cross-check the consuming engine."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .models import build_model
from .preprocess import SPLITS, Preprocessor, split_indices

DEFAULT_MODELS = ["knn", "gbdt", "hist_gbdt", "sgb", "mlp", "resnet", "ft_transformer", "autoint"]


@dataclass
class PoolSpec:
    """Which models to train and with what budget."""

    models: list = field(default_factory=lambda: [{"id": kind, "kind": kind} for kind in DEFAULT_MODELS])
    seed: int = 0
    epochs: int = 200
    batch_size: int = 1024
    patience: int = 20

    @classmethod
    def from_dict(cls, doc: dict) -> "PoolSpec":
        spec = cls()
        if "models" in doc:
            spec.models = [
                {"id": m, "kind": m} if isinstance(m, str) else dict(m) for m in doc["models"]
            ]
        for key in ("seed", "epochs", "batch_size", "patience"):
            if key in doc:
                setattr(spec, key, doc[key])
        return spec


@dataclass
class TrainedPool:
    task: str
    n_classes: int | None
    model_ids: list[str]
    frames: dict[str, pd.DataFrame]
    labels: dict[str, np.ndarray]
    predictions: dict[tuple[str, str], np.ndarray]
    feature_kinds: list[str]


def _accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def _rmse(values: np.ndarray, labels: np.ndarray) -> float:
    return float(np.sqrt(np.mean((values - labels) ** 2)))


def train_pool(
    data: pd.DataFrame,
    label_column: str,
    feature_kinds: list[str],
    task: str,
    spec: PoolSpec,
) -> TrainedPool:
    """Split, encode, fit every model, and collect per-split predictions.

    A model whose training raises is dropped with a warning; the pool stays
    valid as long as at least two models survive.
    """
    classification = task in ("binclass", "multiclass")
    labels_all = data[label_column].to_numpy()
    labels_all = labels_all.astype(int) if classification else labels_all.astype(float)
    features = data.drop(columns=[label_column])
    if len(feature_kinds) != features.shape[1]:
        raise ValueError("feature_kinds must describe every non-label column")
    n_classes = int(labels_all.max()) + 1 if classification else None

    idx = split_indices(labels_all, spec.seed, stratify=classification)
    frames = {s: features.iloc[idx[s]].reset_index(drop=True) for s in SPLITS}
    labels = {s: labels_all[idx[s]] for s in SPLITS}
    prep = Preprocessor(feature_kinds).fit(frames["train"])
    encoded = {s: prep.transform(frames[s]) for s in SPLITS}

    predictions: dict[tuple[str, str], np.ndarray] = {}
    kept_ids: list[str] = []
    for position, entry in enumerate(spec.models):
        model_id, kind = entry["id"], entry["kind"]
        try:
            model = build_model(
                kind,
                classification,
                n_classes,
                seed=spec.seed + position,
                epochs=spec.epochs,
                batch_size=spec.batch_size,
                patience=spec.patience,
                params=entry.get("params"),
            )
            model.fit(encoded["train"], labels["train"], encoded["val"], labels["val"])
            for split in SPLITS:
                predictions[(model_id, split)] = model.predict(encoded[split])
        except Exception as exc:  # drop the model, keep the pool
            warnings.warn(f"model {model_id!r} failed to train and was dropped: {exc}")
            for split in SPLITS:
                predictions.pop((model_id, split), None)
            continue
        kept_ids.append(model_id)
    if len(kept_ids) < 2:
        raise RuntimeError(f"pool needs at least 2 trained models, got {len(kept_ids)}")
    return TrainedPool(
        task=task,
        n_classes=n_classes,
        model_ids=kept_ids,
        frames=frames,
        labels=labels,
        predictions=predictions,
        feature_kinds=feature_kinds,
    )


def pool_metrics(pool: TrainedPool) -> dict:
    """The exporter's own metric computation: per-model train/val/test
    metrics plus best/avg/wavg ensemble metrics on the test split. Used to
    cross-check the consuming engine's numbers."""
    classification = pool.task != "regression"
    score = _accuracy if classification else _rmse
    per_model = {}
    for model_id in pool.model_ids:
        per_model[model_id] = {
            split: score(pool.predictions[(model_id, split)], pool.labels[split]) for split in SPLITS
        }

    test_truth = pool.labels["test"]
    val_scores = [per_model[m]["val"] for m in pool.model_ids]
    best_idx = int(np.argmax(val_scores)) if classification else int(np.argmin(val_scores))
    best_preds = pool.predictions[(pool.model_ids[best_idx], "test")]

    stack = np.stack([pool.predictions[(m, "test")] for m in pool.model_ids])
    avg_preds = stack.mean(axis=0)

    train_scores = np.array([per_model[m]["train"] for m in pool.model_ids])
    weights = train_scores if classification else 1.0 / (train_scores + 1e-12)
    weights = weights / weights.sum()
    wavg_preds = np.tensordot(weights, stack, axes=1)

    return {
        "task": pool.task,
        "per_model": per_model,
        "ensembles": {
            "best": score(best_preds, test_truth),
            "avg": score(avg_preds, test_truth),
            "wavg": score(wavg_preds, test_truth),
        },
    }
