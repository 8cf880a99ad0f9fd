"""End-to-end runs: route instances, resolve hard ones through a backend,
and produce per-instance prediction records with provenance and cost.

Also hosts the method registry ("best", "avg", "wavg", "meta", "expert",
"llm", and their "router+X" variants) shared by the CLI and the evaluation
harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .bundle import DatasetBundle, ModelRecord, compute_model_metrics
from .context import build_context
from .ensembles import (
    average_vote,
    best_model_index,
    meta_feature_matrix,
    predict_meta,
    train_meta,
    weighted_vote,
)
from .expert import ExpertKnobs
from .gateway import CompletionRequest, ExpertBackend, LlmConfig, Usage, run_batch
from .gbdt import BoostParams
from .prompting import WITH_COT, render_prompt
from .retrieval import DEFAULT_K, MAN_RW, FeatureWeights, mutual_information_weights
from .router import DEFAULT_TAU, classify_hardness, easy_fallback

PROVENANCE_EASY = "easy"
PROVENANCE_LLM = "llm"
PROVENANCE_EXPERT = "expert"
PROVENANCE_BASELINE = "baseline"

ROUTED_METHODS = ("router+expert", "router+llm")
UNROUTED_METHODS = ("best", "avg", "wavg", "meta", "expert", "llm")
METHODS = UNROUTED_METHODS + ROUTED_METHODS


@dataclass
class PredictionRecord:
    """Final verdict for one instance with routing and cost provenance."""

    row: int
    split: str
    prediction: int | float
    provenance: str
    is_hard: bool
    agreement: int
    calls: int = 0
    retries: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    cost: float = 0.0


def records_frame(records: list[PredictionRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.__dict__ for r in records])


def fit_weights(bundle: DatasetBundle, metric: str = MAN_RW) -> FeatureWeights:
    return mutual_information_weights(
        bundle.encoded["train"], bundle.labels["train"], bundle.task, metric=metric
    )


@dataclass
class PredictRun:
    records: list[PredictionRecord]
    usage: Usage
    prompts: dict[int, str]  # row -> rendered prompt text (hard instances)
    traces: dict[int, object]  # row -> ExpertTrace (expert backend only)


def run_predict(
    bundle: DatasetBundle,
    weights: FeatureWeights,
    backend,
    llm_config: LlmConfig,
    split: str = "test",
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    mode: str = WITH_COT,
    anonymize: bool = True,
    route_all: bool = False,
    dry_run: bool = False,
    model_records: list[ModelRecord] | None = None,
) -> PredictRun:
    """Route every instance of a split and resolve it.

    Easy instances take the consensus fallback; hard ones are rendered into
    prompts and dispatched through the backend's bounded pool. route_all
    forces every instance through the backend (the tau=1.0-style all-LLM
    setting); dry_run renders prompts but performs no backend calls.
    """
    task = bundle.task
    if model_records is None:
        model_records = compute_model_metrics(bundle)
    label_matrix = bundle.prediction_labels(split)

    records: list[PredictionRecord] = []
    hard_rows: list[int] = []
    requests: list[CompletionRequest] = []
    prompts: dict[int, str] = {}
    for row in range(bundle.n_rows(split)):
        verdict = classify_hardness(label_matrix[row], task, tau)
        hard = verdict.is_hard or route_all
        if not hard:
            prediction = easy_fallback(bundle.probability_rows(row, split), task)
            records.append(
                PredictionRecord(row, split, prediction, PROVENANCE_EASY, verdict.is_hard, verdict.agreement)
            )
            continue
        ctx = build_context(bundle, weights, (split, row), k, model_records)
        prompt = render_prompt(ctx, mode, anonymize)
        prompts[row] = prompt.text
        requests.append(CompletionRequest(prompt=prompt, context=ctx))
        hard_rows.append(row)
        records.append(PredictionRecord(row, split, np.nan, "pending", verdict.is_hard, verdict.agreement))

    usage = Usage()
    traces: dict[int, object] = {}
    if not dry_run and requests:
        provenance = PROVENANCE_EXPERT if isinstance(backend, ExpertBackend) else PROVENANCE_LLM
        by_row = {r.row: r for r in records}
        results, usage = run_batch(backend, requests, llm_config)
        for row, request, (prediction, call_usage) in zip(hard_rows, requests, results):
            record = by_row[row]
            record.prediction = prediction
            record.provenance = provenance
            record.calls = call_usage.calls
            record.retries = call_usage.retries
            record.input_tokens = call_usage.input_tokens
            record.output_tokens = call_usage.output_tokens
            record.cost = call_usage.cost
            if isinstance(backend, ExpertBackend) and backend.trace_sink is not None:
                trace = backend.trace_sink.pop(id(request), None)
                if trace is not None:
                    traces[row] = trace
    return PredictRun(records=records, usage=usage, prompts=prompts, traces=traces)


def predictions_array(run: PredictRun, task) -> np.ndarray:
    values = [r.prediction for r in run.records]
    return np.asarray(values, dtype=float if not task.is_classification else int)


def run_ensemble_method(
    bundle: DatasetBundle,
    method: str,
    split: str = "test",
    weights: FeatureWeights | None = None,
    k: int = DEFAULT_K,
    boost_params: BoostParams | None = None,
    model_records: list[ModelRecord] | None = None,
):
    """Predictions of a static ensemble over a whole split.

    Returns (predictions, meta_model) — meta_model is None except for
    method="meta".
    """
    task = bundle.task
    if model_records is None:
        model_records = compute_model_metrics(bundle)
    n = bundle.n_rows(split)

    if method == "best":
        idx = best_model_index(model_records, task)
        return bundle.hard_labels(bundle.model_ids[idx], split).copy(), None
    if method == "avg":
        preds = [average_vote(bundle.probability_rows(i, split), task) for i in range(n)]
        return np.asarray(preds), None
    if method == "wavg":
        train_metrics = [r.train_metric for r in model_records]
        if any(t is None for t in train_metrics):
            raise ValueError("weighted voting needs train-split predictions for every model")
        metrics = np.asarray(train_metrics, dtype=float)
        preds = [weighted_vote(bundle.probability_rows(i, split), metrics, task) for i in range(n)]
        return np.asarray(preds), None
    if method == "meta":
        if weights is None:
            weights = fit_weights(bundle)
        params = boost_params or BoostParams()
        z_val = meta_feature_matrix(bundle, weights, "val", k, model_records)
        z_split = meta_feature_matrix(bundle, weights, split, k, model_records)
        model = train_meta(z_val, bundle.labels["val"], task, params)
        return predict_meta(model, z_split), model
    raise ValueError(f"unknown ensemble method {method!r}")


def run_method(
    bundle: DatasetBundle,
    method: str,
    seed: int = 0,
    split: str = "test",
    weights: FeatureWeights | None = None,
    backend=None,
    llm_config: LlmConfig | None = None,
    k: int = DEFAULT_K,
    tau: float = DEFAULT_TAU,
    mode: str = WITH_COT,
    anonymize: bool = True,
    knobs: ExpertKnobs = ExpertKnobs(),
):
    """Uniform entry point for every method name; returns (predictions, Usage)."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if method in ("best", "avg", "wavg", "meta"):
        params = BoostParams(seed=seed)
        preds, _ = run_ensemble_method(bundle, method, split, weights, k, params)
        return preds, Usage()

    routed = method.startswith("router+")
    kind = method.split("+")[-1]
    if kind == "expert":
        backend = ExpertBackend(knobs)
    elif backend is None:
        raise ValueError(f"method {method!r} needs an explicit backend")
    if weights is None:
        weights = fit_weights(bundle)
    config = llm_config or LlmConfig()
    run = run_predict(
        bundle, weights, backend, config, split, k, tau, mode, anonymize, route_all=not routed
    )
    return predictions_array(run, bundle.task), run.usage
