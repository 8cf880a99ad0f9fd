"""Static ensembles (best / average / weighted voting) and the context
meta-learner.

The meta-learner trains on fixed-length vectors z = [target predictions ||
neighbor labels || neighbor predictions (row-major by neighbor, then
model)] built from the same tabular contexts the prompts see, fit on the
validation split and evaluated on test.
"""

from __future__ import annotations

import numpy as np

from .bundle import DatasetBundle, ModelRecord, TaskKind, compute_model_metrics
from .context import TabularContext, build_context
from .gbdt import BoostParams, GbdtClassifier, GbdtRegressor
from .retrieval import DEFAULT_K, FeatureWeights

WEIGHT_FLOOR = 1e-12


def best_model_index(records: list[ModelRecord], task: TaskKind) -> int:
    """Position of the model with the best validation metric (highest
    accuracy / lowest RMSE); np.argmax/argmin give the lower position on ties."""
    vals = np.array([r.val_metric for r in records])
    return int(np.argmax(vals)) if task.is_classification else int(np.argmin(vals))


def best_model(records: list[ModelRecord], target_predictions: np.ndarray, task: TaskKind):
    """The best-validation model's prediction for one target."""
    return target_predictions[best_model_index(records, task)]


def average_vote(rows: np.ndarray, task: TaskKind):
    """Unweighted mean of the M probability rows (argmax, lower class index
    on ties) or of the M regression values."""
    rows = np.asarray(rows, dtype=float)
    if task.is_classification:
        return int(np.argmax(rows.mean(axis=0)))
    return float(rows.mean())


def weighted_vote(rows: np.ndarray, train_metrics: np.ndarray, task: TaskKind):
    """Mean weighted by train accuracy (classification) or inverse train
    RMSE (regression), weights normalized to sum 1; all-zero weights fall
    back to the plain average."""
    rows = np.asarray(rows, dtype=float)
    metrics = np.asarray(train_metrics, dtype=float)
    weights = metrics if task.is_classification else 1.0 / (metrics + WEIGHT_FLOOR)
    total = weights.sum()
    if total == 0:
        return average_vote(rows, task)
    weights = weights / total
    if task.is_classification:
        return int(np.argmax(weights @ rows))
    return float(weights @ rows)


def build_meta_features(ctx: TabularContext) -> np.ndarray:
    """The fixed-length layout [target preds (M) || neighbor labels (K) ||
    neighbor preds (K*M, neighbor-major)]; classification entries are class
    indices as reals."""
    return np.concatenate(
        [
            np.asarray(ctx.target_predictions, dtype=float),
            np.asarray(ctx.neighbor_labels, dtype=float),
            np.asarray(ctx.neighbor_predictions, dtype=float).ravel(),
        ]
    )


def meta_feature_matrix(
    bundle: DatasetBundle,
    weights: FeatureWeights,
    split: str,
    k: int = DEFAULT_K,
    model_records: list[ModelRecord] | None = None,
) -> np.ndarray:
    """Stack z vectors for every row of a split; K is fixed across rows."""
    if model_records is None:
        model_records = compute_model_metrics(bundle)
    rows = [
        build_meta_features(build_context(bundle, weights, (split, i), k, model_records))
        for i in range(bundle.n_rows(split))
    ]
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise ValueError(f"meta-feature length varies across instances: {sorted(lengths)}")
    return np.vstack(rows)


def train_meta(z_val: np.ndarray, val_labels: np.ndarray, task: TaskKind, params: BoostParams = BoostParams()):
    """Fit the gradient-boosted meta-learner on validation-context vectors."""
    z_val = np.asarray(z_val, dtype=float)
    if len(z_val) < 20:
        raise ValueError("need at least 20 validation rows to train the meta-learner")
    if task.is_classification:
        return GbdtClassifier(task.n_classes, params).fit(z_val, val_labels)
    return GbdtRegressor(params).fit(z_val, val_labels)


def predict_meta(model, z: np.ndarray) -> np.ndarray:
    """Predict class indices or reals for a matrix of z vectors."""
    return model.predict(np.atleast_2d(np.asarray(z, dtype=float)))
