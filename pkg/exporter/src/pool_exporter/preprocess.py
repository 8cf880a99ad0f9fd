"""Feature preparation and splitting for pool training.

One-hot encoding for categorical features and standard normalization for
numerical features (and for regression labels during neural training);
all statistics come from the train split.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

SPLITS = ("train", "val", "test")


def split_indices(labels: np.ndarray, seed: int, stratify: bool) -> dict[str, np.ndarray]:
    """64/16/20 split; per-class proportional allocation when stratifying."""
    n = len(labels)
    n_train, n_val = round(0.64 * n), round(0.16 * n)
    rng = np.random.default_rng(seed)
    if not stratify:
        perm = rng.permutation(n)
        return {
            "train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train : n_train + n_val]),
            "test": np.sort(perm[n_train + n_val :]),
        }
    buckets: dict[str, list] = {"train": [], "val": [], "test": []}
    for c in np.unique(labels):
        pool = rng.permutation(np.nonzero(labels == c)[0])
        t = round(len(pool) * 0.64)
        v = round(len(pool) * 0.16)
        buckets["train"].append(pool[:t])
        buckets["val"].append(pool[t : t + v])
        buckets["test"].append(pool[t + v :])
    return {split: np.sort(np.concatenate(parts)) for split, parts in buckets.items()}


@dataclass
class Preprocessor:
    feature_kinds: list[str]

    def fit(self, train: pd.DataFrame) -> "Preprocessor":
        self.columns = list(train.columns)
        self.means, self.stds, self.vocabs = {}, {}, {}
        for col, kind in zip(self.columns, self.feature_kinds):
            if kind == "numerical":
                values = train[col].to_numpy(dtype=float)
                self.means[col] = float(values.mean())
                self.stds[col] = max(float(values.std()), 1e-12)
            else:
                self.vocabs[col] = sorted(set(train[col].astype(str)))
        return self

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        blocks = []
        for col, kind in zip(self.columns, self.feature_kinds):
            if kind == "numerical":
                values = frame[col].to_numpy(dtype=float)
                blocks.append(((values - self.means[col]) / self.stds[col])[:, None])
            else:
                vocab = self.vocabs[col]
                onehot = np.zeros((len(frame), len(vocab)))
                index = {v: j for j, v in enumerate(vocab)}
                for i, v in enumerate(frame[col].astype(str)):
                    j = index.get(v)
                    if j is not None:
                        onehot[i, j] = 1.0
                blocks.append(onehot)
        return np.hstack(blocks).astype(np.float64)
