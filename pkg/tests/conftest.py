"""Shared synthetic-bundle builders. Everything is seed-deterministic."""

from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from cot2.bundle import DatasetBundle, TaskKind, encode_features, split_dataset


def prob_rows(rng: np.random.Generator, chosen: np.ndarray, n_classes: int, top: float = 0.9) -> np.ndarray:
    """Probability matrix putting `top` mass on the chosen label per row."""
    n = len(chosen)
    rows = np.full((n, n_classes), (1.0 - top) / (n_classes - 1))
    rows[np.arange(n), chosen] = top
    return rows


def noisy_labels(rng: np.random.Generator, truth: np.ndarray, accuracy: float, n_classes: int) -> np.ndarray:
    """Labels agreeing with the truth at the given rate, uniform otherwise."""
    out = truth.copy()
    flip = rng.random(len(truth)) >= accuracy
    wrong = (truth[flip] + rng.integers(1, n_classes, flip.sum())) % n_classes
    out[flip] = wrong
    return out


def assemble_bundle(task, frames, labels, model_preds, feature_kinds) -> DatasetBundle:
    encoded, encoder = encode_features(frames, feature_kinds)
    return DatasetBundle(
        task=task,
        feature_kinds=feature_kinds,
        model_ids=sorted(model_preds),
        raw_features=frames,
        labels=labels,
        predictions={
            (model_id, split): values
            for model_id, split_map in model_preds.items()
            for split, values in split_map.items()
        },
        encoded=encoded,
        encoder=encoder,
    )


def make_classification_bundle(
    seed: int = 0,
    n: int = 240,
    n_classes: int = 3,
    n_models: int = 4,
    model_accuracy: float = 0.8,
    with_train_preds: bool = True,
    with_categorical: bool = True,
) -> DatasetBundle:
    """Clustered classification data with models of one shared accuracy."""
    rng = np.random.default_rng(seed)
    labels_all = rng.integers(0, n_classes, n)
    centers = rng.normal(scale=4.0, size=(n_classes, 3))
    X_num = centers[labels_all] + rng.normal(scale=0.5, size=(n, 3))
    columns = {f"f{j}": X_num[:, j] for j in range(3)}
    feature_kinds = ["numerical"] * 3
    if with_categorical:
        letters = np.array(["a", "b", "c", "d"])
        cat = letters[labels_all % len(letters)].copy()
        scramble = rng.random(n) < 0.3
        cat[scramble] = rng.choice(letters, scramble.sum())
        columns["f3"] = cat
        feature_kinds.append("categorical")
    full = pd.DataFrame(columns)

    tr, va, te = split_dataset(full, labels_all, seed)
    frames = {"train": full.iloc[tr].reset_index(drop=True),
              "val": full.iloc[va].reset_index(drop=True),
              "test": full.iloc[te].reset_index(drop=True)}
    labels = {"train": labels_all[tr], "val": labels_all[va], "test": labels_all[te]}

    task = TaskKind("multiclass" if n_classes >= 3 else "binclass", class_count=n_classes)
    model_preds = {}
    for m in range(n_models):
        split_map = {}
        for split in ("train", "val", "test"):
            if split == "train" and not with_train_preds:
                continue
            chosen = noisy_labels(rng, labels[split], model_accuracy, n_classes)
            split_map[split] = prob_rows(rng, chosen, n_classes)
        model_preds[f"m{m}"] = split_map
    return assemble_bundle(task, frames, labels, model_preds, feature_kinds)


def make_regression_bundle(
    seed: int = 0, n: int = 240, n_models: int = 4, noise: float = 0.2
) -> DatasetBundle:
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y_all = X @ np.array([1.5, -2.0, 0.5]) + rng.normal(scale=0.1, size=n)
    full = pd.DataFrame({f"f{j}": X[:, j] for j in range(3)})
    tr, va, te = split_dataset(full, y_all, seed)
    frames = {"train": full.iloc[tr].reset_index(drop=True),
              "val": full.iloc[va].reset_index(drop=True),
              "test": full.iloc[te].reset_index(drop=True)}
    labels = {"train": y_all[tr], "val": y_all[va], "test": y_all[te]}
    task = TaskKind("regression", label_range=(float(y_all.min()), float(y_all.max())))
    model_preds = {
        f"m{m}": {
            split: labels[split] + rng.normal(scale=noise * (1 + m / n_models), size=len(labels[split]))
            for split in ("train", "val", "test")
        }
        for m in range(n_models)
    }
    return assemble_bundle(task, frames, labels, model_preds, ["numerical"] * 3)


def make_oracle_noise_bundle(seed: int = 0, n: int = 640) -> DatasetBundle:
    """One perfect model among 7 constant-noise models over 8 well-separated
    classes. Every instance disagrees enough to route hard at tau=0.75, the
    perfect model dominates the expert steps, and average voting fails on
    class 0 by construction."""
    n_classes, n_models = 8, 8
    rng = np.random.default_rng(seed)
    labels_all = rng.permutation(np.arange(n) % n_classes)
    x0 = labels_all + rng.uniform(-0.1, 0.1, n)
    full = pd.DataFrame({"f0": x0, "f1": np.zeros(n)})
    tr, va, te = split_dataset(full, labels_all, seed)
    frames = {"train": full.iloc[tr].reset_index(drop=True),
              "val": full.iloc[va].reset_index(drop=True),
              "test": full.iloc[te].reset_index(drop=True)}
    labels = {"train": labels_all[tr], "val": labels_all[va], "test": labels_all[te]}
    task = TaskKind("multiclass", class_count=n_classes)

    model_preds = {"m0_oracle": {
        split: prob_rows(rng, labels[split], n_classes, top=0.85) for split in ("train", "val", "test")
    }}
    for m in range(1, n_models):
        model_preds[f"m{m}_noise"] = {
            split: prob_rows(rng, np.full(len(labels[split]), m), n_classes, top=0.9)
            for split in ("train", "val", "test")
        }
    return assemble_bundle(task, frames, labels, model_preds, ["numerical", "numerical"])


@pytest.fixture
def classification_bundle():
    return make_classification_bundle(seed=0)


@pytest.fixture
def regression_bundle():
    return make_regression_bundle(seed=0)
