"""Small deterministic gradient-boosted regression trees.

Least-squares boosting with exact greedy splits, no subsampling, no
randomness: identical inputs give identical models on every platform.
Classification boosts one-vs-rest on one-hot targets and predicts the
argmax class. Models serialize to a plain JSON tree list (split dim,
threshold, children, leaf value).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

MIN_GAIN = 1e-12


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    seed: int = 0  # accepted for interface parity; the fit is deterministic


class Tree:
    """Flat-node regression tree; node 0 is the root, dim < 0 marks a leaf."""

    def __init__(self):
        self.nodes: list[dict] = []

    def _leaf(self, value: float) -> int:
        self.nodes.append({"dim": -1, "threshold": 0.0, "left": -1, "right": -1, "value": float(value)})
        return len(self.nodes) - 1

    def fit(self, X: np.ndarray, target: np.ndarray, max_depth: int) -> "Tree":
        self.nodes = []
        self._grow(X, target, np.arange(len(target)), max_depth)
        return self

    def _grow(self, X, target, idx, depth) -> int:
        values = target[idx]
        if depth == 0 or len(idx) < 2:
            return self._leaf(values.mean())
        split = self._best_split(X, target, idx)
        if split is None:
            return self._leaf(values.mean())
        dim, threshold = split
        node = {"dim": int(dim), "threshold": float(threshold), "left": -1, "right": -1, "value": 0.0}
        self.nodes.append(node)
        pos = len(self.nodes) - 1
        mask = X[idx, dim] <= threshold
        node["left"] = self._grow(X, target, idx[mask], depth - 1)
        node["right"] = self._grow(X, target, idx[~mask], depth - 1)
        return pos

    @staticmethod
    def _best_split(X, target, idx):
        n = len(idx)
        g = target[idx]
        total = g.sum()
        parent = total * total / n
        best_gain = MIN_GAIN
        best = None
        for dim in range(X.shape[1]):
            x = X[idx, dim]
            order = np.argsort(x, kind="stable")
            xs, gs = x[order], g[order]
            cut = np.nonzero(xs[:-1] < xs[1:])[0]
            if cut.size == 0:
                continue
            csum = np.cumsum(gs)
            left_n = cut + 1
            left_sum = csum[cut]
            right_sum = total - left_sum
            gains = left_sum**2 / left_n + right_sum**2 / (n - left_n) - parent
            j = int(np.argmax(gains))
            if gains[j] > best_gain:
                best_gain = gains[j]
                best = (dim, (xs[cut[j]] + xs[cut[j] + 1]) / 2)
        return best

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        self._apply(0, X, np.arange(len(X)), out)
        return out

    def _apply(self, pos, X, idx, out):
        node = self.nodes[pos]
        if node["dim"] < 0:
            out[idx] = node["value"]
            return
        mask = X[idx, node["dim"]] <= node["threshold"]
        self._apply(node["left"], X, idx[mask], out)
        self._apply(node["right"], X, idx[~mask], out)

    def to_list(self) -> list[dict]:
        return self.nodes

    @classmethod
    def from_list(cls, nodes: list[dict]) -> "Tree":
        tree = cls()
        tree.nodes = nodes
        return tree


class _Booster:
    """One least-squares boosting chain."""

    def __init__(self, params: BoostParams):
        self.params = params
        self.base = 0.0
        self.trees: list[Tree] = []

    def fit(self, X: np.ndarray, y: np.ndarray) -> "_Booster":
        self.base = float(y.mean())
        current = np.full(len(y), self.base)
        self.trees = []
        for _ in range(self.params.rounds):
            tree = Tree().fit(X, y - current, self.params.max_depth)
            current += self.params.learning_rate * tree.predict(X)
            self.trees.append(tree)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(len(X), self.base)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out


class GbdtRegressor:
    def __init__(self, params: BoostParams = BoostParams()):
        self.params = params
        self._booster = _Booster(params)
        self.n_features = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GbdtRegressor":
        X = np.asarray(X, dtype=float)
        self.n_features = X.shape[1]
        self._booster.fit(X, np.asarray(y, dtype=float))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return self._booster.predict(X)

    def to_dict(self) -> dict:
        return {
            "task": "regression",
            "params": asdict(self.params),
            "n_features": self.n_features,
            "base": [self._booster.base],
            "trees": [[t.to_list() for t in self._booster.trees]],
        }


class GbdtClassifier:
    """One-vs-rest squared-error boosting; predicts the argmax class score."""

    def __init__(self, n_classes: int, params: BoostParams = BoostParams()):
        self.n_classes = n_classes
        self.params = params
        self._boosters = [_Booster(params) for _ in range(n_classes)]
        self.n_features = 0

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GbdtClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_features = X.shape[1]
        for c, booster in enumerate(self._boosters):
            booster.fit(X, (y == c).astype(float))
        return self

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.column_stack([b.predict(X) for b in self._boosters])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.scores(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "task": "classification",
            "params": asdict(self.params),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "base": [b.base for b in self._boosters],
            "trees": [[t.to_list() for t in b.trees] for b in self._boosters],
        }


def model_from_dict(doc: dict):
    params = BoostParams(**doc["params"])
    if doc["task"] == "regression":
        model = GbdtRegressor(params)
        boosters = [model._booster]
    else:
        model = GbdtClassifier(doc["n_classes"], params)
        boosters = model._boosters
    model.n_features = doc["n_features"]
    for booster, base, trees in zip(boosters, doc["base"], doc["trees"]):
        booster.base = base
        booster.trees = [Tree.from_list(nodes) for nodes in trees]
    return model


def save_model(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path):
    return model_from_dict(json.loads(Path(path).read_text()))
