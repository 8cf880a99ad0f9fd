"""Dataset bundle: the on-disk package of features, labels and per-model predictions.

A bundle directory looks like::

    meta.json                 task, class_count / label range, model_ids, feature_kinds
    X_train.csv  y_train.csv
    X_val.csv    y_val.csv
    X_test.csv   y_test.csv
    preds/<model_id>/{train,val,test}.csv   (train.csv optional)

Classification prediction CSVs carry C probability columns ``p0..p{C-1}``,
regression ones a single ``y_hat`` column. Everything is CSV, UTF-8, '.'
decimal, with a header row of opaque column ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

SPLITS = ("train", "val", "test")
TRAIN_FRACTION = 0.64
VAL_FRACTION = 0.16

PROB_ROW_TOL = 1e-6
STD_FLOOR = 1e-12


class BundleError(ValueError):
    """A bundle violates the on-disk layout or a data invariant."""


@dataclass(frozen=True)
class TaskKind:
    """Task descriptor: binclass / multiclass / regression."""

    kind: str
    class_count: int | None = None
    label_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("binclass", "multiclass", "regression"):
            raise BundleError(f"unknown task kind {self.kind!r}")
        if self.kind == "binclass" and self.class_count != 2:
            raise BundleError("binclass requires class_count = 2")
        if self.kind == "multiclass" and (self.class_count is None or self.class_count < 3):
            raise BundleError("multiclass requires class_count >= 3")
        if self.kind == "regression":
            if self.class_count is not None:
                raise BundleError("regression has no class_count")
            if self.label_range is not None and self.label_range[0] > self.label_range[1]:
                raise BundleError("label_range min must not exceed max")

    @property
    def is_classification(self) -> bool:
        return self.kind != "regression"

    @property
    def n_classes(self) -> int:
        if self.class_count is None:
            raise BundleError("task has no classes")
        return self.class_count


@dataclass(frozen=True)
class ModelRecord:
    """One external model with its anonymized alias and train/val metrics.

    Metrics are accuracy (classification) or RMSE (regression); train_metric
    is None when the bundle ships no train-split predictions.
    """

    model_id: str
    alias: str
    train_metric: float | None
    val_metric: float


def model_alias(position: int) -> str:
    """Positionally stable anonymized name: Model A, ..., Model Z, Model AA, ..."""
    letters = ""
    i = position
    while True:
        letters = chr(ord("A") + i % 26) + letters
        i = i // 26 - 1
        if i < 0:
            break
    return f"Model {letters}"


class FeatureEncoder:
    """One-hot categorical / standardized numerical encoding, fit on train only.

    Numerical columns are centered and scaled by the train split's mean and
    population std (floored at STD_FLOOR so constant columns map to zeros).
    Categorical vocabularies come from the train split; unseen categories
    encode to an all-zero block.
    """

    def __init__(self, feature_kinds: list[str]):
        self.feature_kinds = list(feature_kinds)
        self.means: dict[str, float] = {}
        self.stds: dict[str, float] = {}
        self.vocabs: dict[str, list[str]] = {}
        self.columns: list[str] = []
        self.encoded_names: list[str] = []

    def fit(self, train: pd.DataFrame) -> "FeatureEncoder":
        if len(train.columns) != len(self.feature_kinds):
            raise BundleError("feature_kinds length does not match feature table width")
        self.columns = list(train.columns)
        self.encoded_names = []
        for col, kind in zip(self.columns, self.feature_kinds):
            if kind == "numerical":
                values = train[col].to_numpy(dtype=float)
                self.means[col] = float(values.mean())
                self.stds[col] = max(float(values.std()), STD_FLOOR)
                self.encoded_names.append(col)
            elif kind == "categorical":
                vocab = sorted(set(train[col].astype(str)))
                self.vocabs[col] = vocab
                self.encoded_names.extend(f"{col}={v}" for v in vocab)
            else:
                raise BundleError(f"unknown feature kind {kind!r}")
        return self

    @property
    def width(self) -> int:
        return len(self.encoded_names)

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        blocks = []
        for col, kind in zip(self.columns, self.feature_kinds):
            if kind == "numerical":
                values = frame[col].to_numpy(dtype=float)
                if not np.all(np.isfinite(values)):
                    raise BundleError(f"non-finite value in numerical column {col!r}")
                blocks.append(((values - self.means[col]) / self.stds[col])[:, None])
            else:
                vocab = self.vocabs[col]
                index = {v: j for j, v in enumerate(vocab)}
                onehot = np.zeros((len(frame), len(vocab)))
                for i, v in enumerate(frame[col].astype(str)):
                    j = index.get(v)
                    if j is not None:
                        onehot[i, j] = 1.0
                blocks.append(onehot)
        if not blocks:
            return np.zeros((len(frame), 0))
        return np.ascontiguousarray(np.hstack(blocks))


def encode_features(
    frames: dict[str, pd.DataFrame], feature_kinds: list[str]
) -> tuple[dict[str, np.ndarray], FeatureEncoder]:
    """Encode all splits with statistics/vocabularies fit on the train split."""
    encoder = FeatureEncoder(feature_kinds).fit(frames["train"])
    return {split: encoder.transform(df) for split, df in frames.items()}, encoder


@dataclass
class DatasetBundle:
    """Validated in-memory bundle; immutable by convention after load."""

    task: TaskKind
    feature_kinds: list[str]
    model_ids: list[str]
    raw_features: dict[str, pd.DataFrame]
    labels: dict[str, np.ndarray]
    predictions: dict[tuple[str, str], np.ndarray]
    encoded: dict[str, np.ndarray] = field(default_factory=dict)
    encoder: FeatureEncoder | None = None

    def n_rows(self, split: str) -> int:
        return len(self.labels[split])

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    def has_train_predictions(self) -> bool:
        return all((m, "train") in self.predictions for m in self.model_ids)

    def hard_labels(self, model_id: str, split: str) -> np.ndarray:
        """Per-row prediction as a label: argmax of the probability row
        (lowest class index wins ties) for classification, the value itself
        for regression."""
        values = self.predictions[(model_id, split)]
        if self.task.is_classification:
            return np.argmax(values, axis=1)
        return values

    def prediction_labels(self, split: str) -> np.ndarray:
        """N x M matrix of hard labels (or reals), models in model_ids order."""
        return np.column_stack([self.hard_labels(m, split) for m in self.model_ids])

    def probability_rows(self, row: int, split: str) -> np.ndarray:
        """M x C probability matrix (classification) or M-vector (regression)
        for one instance."""
        return np.stack([self.predictions[(m, split)][row] for m in self.model_ids])

    def train_label_range(self) -> tuple[float, float]:
        y = self.labels["train"]
        return float(y.min()), float(y.max())


def _validate_prediction_matrix(values: np.ndarray, task: TaskKind, n_rows: int, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise BundleError(f"{where}: non-finite prediction value")
    if task.is_classification:
        if values.ndim != 2 or values.shape != (n_rows, task.n_classes):
            raise BundleError(f"{where}: expected shape ({n_rows}, {task.n_classes}), got {values.shape}")
        if np.any(values < 0):
            raise BundleError(f"{where}: negative probability")
        sums = values.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > PROB_ROW_TOL)[0]
        if bad.size:
            raise BundleError(f"{where}: row not normalized (row {bad[0]}, sum {sums[bad[0]]!r})")
    else:
        if values.ndim != 1 or values.shape[0] != n_rows:
            raise BundleError(f"{where}: expected {n_rows} values, got shape {values.shape}")


def _validate_labels(labels: np.ndarray, task: TaskKind, split: str) -> np.ndarray:
    if task.is_classification:
        as_int = labels.astype(int)
        if np.any(as_int != labels):
            raise BundleError(f"y_{split}: non-integer class label")
        if np.any(as_int < 0) or np.any(as_int >= task.n_classes):
            raise BundleError(f"y_{split}: class label out of range [0, {task.n_classes})")
        return as_int
    if not np.all(np.isfinite(labels)):
        raise BundleError(f"y_{split}: non-finite label")
    return labels.astype(float)


def _task_from_meta(meta: dict) -> TaskKind:
    kind = meta.get("task")
    if kind == "regression":
        lo, hi = meta.get("label_min"), meta.get("label_max")
        rng = (float(lo), float(hi)) if lo is not None and hi is not None else None
        return TaskKind(kind, label_range=rng)
    return TaskKind(kind, class_count=int(meta["class_count"]))


def load_bundle(path: str | Path) -> DatasetBundle:
    """Load and fully validate a bundle directory; encodes features on the way."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise BundleError(f"missing file {meta_path}")
    meta = json.loads(meta_path.read_text())
    task = _task_from_meta(meta)
    model_ids = list(meta["model_ids"])
    if len(model_ids) < 2:
        raise BundleError("bundle needs at least 2 models")
    if len(set(model_ids)) != len(model_ids):
        raise BundleError("duplicate model_id in meta.json")
    feature_kinds = list(meta["feature_kinds"])

    raw_features: dict[str, pd.DataFrame] = {}
    labels: dict[str, np.ndarray] = {}
    for split in SPLITS:
        x_path, y_path = root / f"X_{split}.csv", root / f"y_{split}.csv"
        for p in (x_path, y_path):
            if not p.exists():
                raise BundleError(f"missing file {p}")
        frame = pd.read_csv(x_path, dtype=str, keep_default_na=False)
        if len(frame.columns) != len(feature_kinds):
            raise BundleError(f"X_{split}.csv: width {len(frame.columns)} != {len(feature_kinds)} feature kinds")
        for col, kind in zip(frame.columns, feature_kinds):
            if kind == "numerical":
                try:
                    frame[col] = frame[col].astype(float)
                except ValueError as exc:
                    raise BundleError(f"X_{split}.csv: non-numeric value in numerical column {col!r}") from exc
                if not np.all(np.isfinite(frame[col].to_numpy())):
                    raise BundleError(f"X_{split}.csv: non-finite value in column {col!r}")
        raw_features[split] = frame
        y = pd.read_csv(y_path, float_precision="round_trip").iloc[:, 0].to_numpy()
        if len(y) != len(frame):
            raise BundleError(f"y_{split}.csv: {len(y)} labels for {len(frame)} rows")
        labels[split] = _validate_labels(y, task, split)

    preds_root = root / "preds"
    if preds_root.exists():
        known = set(model_ids)
        for child in sorted(preds_root.iterdir()):
            if child.is_dir() and child.name not in known:
                raise BundleError(f"unknown model_id {child.name!r} in preds directory")

    predictions: dict[tuple[str, str], np.ndarray] = {}
    for model_id in model_ids:
        for split in SPLITS:
            p = preds_root / model_id / f"{split}.csv"
            if not p.exists():
                if split == "train":
                    continue  # train predictions are optional
                raise BundleError(f"missing prediction matrix {p}")
            values = pd.read_csv(p, float_precision="round_trip").to_numpy(dtype=float)
            if not task.is_classification:
                values = values[:, 0]
            _validate_prediction_matrix(values, task, len(labels[split]), str(p))
            predictions[(model_id, split)] = values

    encoded, encoder = encode_features(raw_features, feature_kinds)
    return DatasetBundle(
        task=task,
        feature_kinds=feature_kinds,
        model_ids=model_ids,
        raw_features=raw_features,
        labels=labels,
        predictions=predictions,
        encoded=encoded,
        encoder=encoder,
    )


def write_bundle(bundle: DatasetBundle, path: str | Path) -> None:
    """Write the bundle in the canonical directory layout (load_bundle inverse)."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta: dict = {"task": bundle.task.kind, "model_ids": bundle.model_ids, "feature_kinds": bundle.feature_kinds}
    if bundle.task.is_classification:
        meta["class_count"] = bundle.task.n_classes
    else:
        lo, hi = bundle.task.label_range or bundle.train_label_range()
        meta["label_min"], meta["label_max"] = lo, hi
    (root / "meta.json").write_text(json.dumps(meta, indent=2))

    for split in SPLITS:
        bundle.raw_features[split].to_csv(root / f"X_{split}.csv", index=False)
        pd.DataFrame({"y": bundle.labels[split]}).to_csv(root / f"y_{split}.csv", index=False)

    for (model_id, split), values in bundle.predictions.items():
        target = root / "preds" / model_id
        target.mkdir(parents=True, exist_ok=True)
        if bundle.task.is_classification:
            frame = pd.DataFrame(values, columns=[f"p{i}" for i in range(values.shape[1])])
        else:
            frame = pd.DataFrame({"y_hat": values})
        frame.to_csv(target / f"{split}.csv", index=False)


def _largest_remainder(quotas: np.ndarray, total: int, caps: np.ndarray) -> np.ndarray:
    """Integer allocation summing to `total`, each entry within 1 of its quota
    (subject to availability caps); deterministic tie-break by lower index."""
    counts = np.minimum(np.floor(quotas).astype(int), caps)
    remainders = quotas - np.floor(quotas)
    order = sorted(range(len(quotas)), key=lambda i: (-remainders[i], i))
    short = total - counts.sum()
    for i in order:
        if short <= 0:
            break
        if counts[i] < caps[i]:
            counts[i] += 1
            short -= 1
    # exhaust any leftover against caps in index order
    i = 0
    while short > 0 and i < len(counts):
        room = caps[i] - counts[i]
        take = min(room, short)
        counts[i] += take
        short -= take
        i += 1
    if short != 0:
        raise BundleError("split allocation infeasible")
    return counts


def split_dataset(
    features: np.ndarray | pd.DataFrame, labels: np.ndarray, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw disjoint 64/16/20 train/val/test index sets.

    The permutation is a pure function of the seed. Integer labels trigger
    per-class stratified allocation (each split's class count stays within
    one instance of exact proportionality); float labels split uniformly.
    Raises if stratification leaves a class absent from the train split.
    """
    n = len(labels)
    if len(features) != n:
        raise BundleError("features and labels disagree on row count")
    if n < 10:
        raise BundleError("need at least 10 rows to split")
    n_train = round(TRAIN_FRACTION * n)
    n_val = round(VAL_FRACTION * n)
    rng = np.random.default_rng(seed)

    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        perm = rng.permutation(n)
        return (
            np.sort(perm[:n_train]),
            np.sort(perm[n_train : n_train + n_val]),
            np.sort(perm[n_train + n_val :]),
        )

    classes = np.unique(labels)
    shuffled = {c: rng.permutation(np.nonzero(labels == c)[0]) for c in classes}
    counts = np.array([len(shuffled[c]) for c in classes])
    train_counts = _largest_remainder(counts * n_train / n, n_train, counts)
    if np.any(train_counts == 0):
        missing = classes[np.nonzero(train_counts == 0)[0][0]]
        raise BundleError(f"class {missing} absent from train split after stratification")
    val_counts = _largest_remainder(counts * n_val / n, n_val, counts - train_counts)

    train_idx, val_idx, test_idx = [], [], []
    for c, t, v in zip(classes, train_counts, val_counts):
        pool = shuffled[c]
        train_idx.append(pool[:t])
        val_idx.append(pool[t : t + v])
        test_idx.append(pool[t + v :])
    return (
        np.sort(np.concatenate(train_idx)),
        np.sort(np.concatenate(val_idx)),
        np.sort(np.concatenate(test_idx)),
    )


def accuracy(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean(np.asarray(predicted) == np.asarray(truth)))


def rmse(predicted: np.ndarray, truth: np.ndarray) -> float:
    diff = np.asarray(predicted, dtype=float) - np.asarray(truth, dtype=float)
    return math.sqrt(float(np.mean(diff * diff)))


def compute_model_metrics(bundle: DatasetBundle) -> list[ModelRecord]:
    """Recompute each model's train/val metric from its stored predictions.

    Classification uses argmax accuracy, regression RMSE. Records come back
    in model_ids order with positionally assigned aliases; train_metric is
    None when the bundle carries no train predictions for that model.
    """
    metric = accuracy if bundle.task.is_classification else rmse
    records = []
    for position, model_id in enumerate(bundle.model_ids):
        val_metric = metric(bundle.hard_labels(model_id, "val"), bundle.labels["val"])
        train_metric = None
        if (model_id, "train") in bundle.predictions:
            train_metric = metric(bundle.hard_labels(model_id, "train"), bundle.labels["train"])
        records.append(ModelRecord(model_id, model_alias(position), train_metric, val_metric))
    return records
