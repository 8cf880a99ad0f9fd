"""Operator entry point.

Subcommands: ingest, route, predict, ensemble, eval, report. Options
resolve as flags > TOML config file > defaults, and every resolved value
is echoed into run_manifest.json in the output directory. Errors exit
nonzero with a single `error: ...` line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .bundle import accuracy, compute_model_metrics, load_bundle, rmse
from .context import build_context
from .evaluation import cost_report, evaluate_method, mean_ranks, wilcoxon_holm
from .gateway import ENV_API_KEY, ExpertBackend, LlmConfig, RemoteBackend, ScriptedBackend
from .gbdt import save_model
from .pipeline import METHODS, fit_weights, records_frame, run_ensemble_method, run_predict
from .prompting import MODES, WITH_COT, WITHOUT_COT
from .retrieval import METRICS
from .router import classify_hardness

BACKENDS = ("remote", "expert", "stub")
DEFAULT_EVAL_METHODS = ("best", "avg", "wavg", "meta", "expert", "router+expert")


@dataclass
class RunConfig:
    """Resolved run options; defaults follow the benchmark configuration
    (k=10 neighbors, tau=0.75, MI-reweighted Manhattan distance, reasoning
    steps on, anonymized model names, temperature 0.2, seeds 0-4)."""

    bundle: str = ""
    out: str = "out"
    split: str = "test"
    k: int = 10
    tau: float = 0.75
    metric: str = "man-rw"
    mode: str = WITH_COT
    anonymize: bool = True
    backend: str = "expert"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    methods: list[str] = field(default_factory=lambda: list(DEFAULT_EVAL_METHODS))
    script: str = ""
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.2
    max_inflight: int = 4
    price_input_per_1k: float = 0.0
    price_output_per_1k: float = 0.0

    def validate(self) -> None:
        if not self.bundle:
            raise ValueError("config: --bundle is required")
        if not 0 < self.tau <= 1:
            raise ValueError(f"config: tau must lie in (0, 1], got {self.tau}")
        if self.k < 1:
            raise ValueError("config: k must be >= 1")
        if self.metric not in METRICS:
            raise ValueError(f"config: metric must be one of {METRICS}")
        if self.mode not in MODES:
            raise ValueError(f"config: mode must be one of {MODES}")
        if self.backend not in BACKENDS:
            raise ValueError(f"config: backend must be one of {BACKENDS}")
        for m in self.methods:
            if m not in METHODS and m != "llm":
                raise ValueError(f"config: unknown method {m!r}")

    def llm_config(self) -> LlmConfig:
        return LlmConfig(
            endpoint=self.endpoint,
            model=self.model,
            temperature=self.temperature,
            max_inflight=self.max_inflight,
            price_input_per_1k=self.price_input_per_1k,
            price_output_per_1k=self.price_output_per_1k,
        )

    def make_backend(self):
        if self.backend == "expert":
            return ExpertBackend(trace_sink={})
        if self.backend == "stub":
            if not self.script:
                raise ValueError("config: stub backend needs --script (JSON list of responses)")
            return ScriptedBackend(json.loads(Path(self.script).read_text()))
        if not self.endpoint:
            raise ValueError("config: remote backend needs --endpoint")
        if not os.environ.get(ENV_API_KEY):
            raise ValueError(f"config: remote backend needs the {ENV_API_KEY} environment variable")
        return RemoteBackend(self.llm_config())


def _load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, "rb") as handle:
            values.update(tomllib.load(handle))
    for key in vars(RunConfig()):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "no_cot", False):
        values["mode"] = WITHOUT_COT
    if getattr(args, "no_anonymize", False):
        values["anonymize"] = False
    if isinstance(values.get("seeds"), str):
        values["seeds"] = [int(s) for s in values["seeds"].split(",") if s]
    if isinstance(values.get("methods"), str):
        values["methods"] = [m for m in values["methods"].split(",") if m]
    config = RunConfig(**values)
    config.validate()
    return config


def _write_manifest(config: RunConfig, command: str, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": command, "config": asdict(config)}
    (out / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file; flags override it")
    parser.add_argument("--bundle", help="bundle directory")
    parser.add_argument("--out", help="output directory (default: out)")
    parser.add_argument("--k", type=int, help="number of neighbors (default 10)")
    parser.add_argument("--tau", type=float, help="hard-sample agreement threshold (default 0.75)")
    parser.add_argument("--metric", choices=METRICS, help="neighbor distance metric")
    parser.add_argument("--no-cot", action="store_true", help="drop the reasoning steps from prompts")
    parser.add_argument("--no-anonymize", action="store_true", help="show real model ids in prompts")
    parser.add_argument("--backend", choices=BACKENDS, help="completion backend")
    parser.add_argument("--script", help="JSON response list for the stub backend")
    parser.add_argument("--seeds", help="comma-separated seed list (default 0,1,2,3,4)")
    parser.add_argument("--split", choices=("val", "test"), help="target split (default test)")
    parser.add_argument("--endpoint", help="chat-completions URL for the remote backend")
    parser.add_argument("--model", help="remote model name")
    parser.add_argument("--temperature", type=float, help="sampling temperature (default 0.2)")
    parser.add_argument("--max-inflight", type=int, dest="max_inflight", help="max concurrent requests")
    parser.add_argument("--price-input-per-1k", type=float, dest="price_input_per_1k")
    parser.add_argument("--price-output-per-1k", type=float, dest="price_output_per_1k")


def cmd_ingest(config: RunConfig) -> int:
    bundle = load_bundle(config.bundle)
    out = Path(config.out)
    _write_manifest(config, "ingest", out)
    weights = fit_weights(bundle, config.metric)
    names = bundle.encoder.encoded_names
    pd.DataFrame(
        {"dimension": names, "raw_mi": weights.raw_mi, "weight": weights.weights}
    ).to_csv(out / "weights.csv", index=False)
    records = compute_model_metrics(bundle)
    pd.DataFrame([r.__dict__ for r in records]).to_csv(out / "model_metrics.csv", index=False)
    for split in ("train", "val", "test"):
        np.save(out / f"encoded_{split}.npy", bundle.encoded[split])
    print(
        f"ingest ok: task={bundle.task.kind} models={bundle.n_models} "
        f"rows={[bundle.n_rows(s) for s in ('train', 'val', 'test')]} width={bundle.encoder.width}"
    )
    return 0


def cmd_route(config: RunConfig) -> int:
    bundle = load_bundle(config.bundle)
    out = Path(config.out)
    _write_manifest(config, "route", out)
    for split in ("val", "test"):
        matrix = bundle.prediction_labels(split)
        rows = []
        for row in range(bundle.n_rows(split)):
            verdict = classify_hardness(matrix[row], bundle.task, config.tau)
            rows.append({"row": row, "is_hard": verdict.is_hard, "agreement": verdict.agreement})
        frame = pd.DataFrame(rows)
        frame.to_csv(out / f"hardness_{split}.csv", index=False)
        print(f"route {split}: hard_ratio={frame['is_hard'].mean():.4f} (tau={config.tau})")
    return 0


def cmd_predict(config: RunConfig, dry_run: bool, dump_traces: bool, dump_contexts: bool) -> int:
    bundle = load_bundle(config.bundle)
    out = Path(config.out)
    _write_manifest(config, "predict", out)
    weights = fit_weights(bundle, config.metric)
    backend = None if dry_run else config.make_backend()
    run = run_predict(
        bundle,
        weights,
        backend,
        config.llm_config(),
        split=config.split,
        k=config.k,
        tau=config.tau,
        mode=config.mode,
        anonymize=config.anonymize,
        dry_run=dry_run,
    )
    if dry_run:
        prompt_dir = out / "prompts"
        prompt_dir.mkdir(parents=True, exist_ok=True)
        for row, text in run.prompts.items():
            (prompt_dir / f"prompt_{config.split}_{row}.txt").write_text(text)
        print(f"predict dry-run: {len(run.prompts)} prompts rendered to {prompt_dir}")
        return 0
    records_frame(run.records).to_csv(out / f"predictions_{config.split}.csv", index=False)
    (out / "usage.json").write_text(json.dumps(run.usage.__dict__, indent=2, sort_keys=True))
    if dump_traces:
        for row, trace in run.traces.items():
            trace.dump(out / f"expert_trace_{row}.json")
    if dump_contexts:
        model_records = compute_model_metrics(bundle)
        for row in run.prompts:
            ctx = build_context(bundle, weights, (config.split, row), config.k, model_records)
            ctx.dump(out / f"context_{config.split}_{row}.json")
    truth = bundle.labels[config.split]
    values = np.array([r.prediction for r in run.records])
    score = accuracy(values, truth) if bundle.task.is_classification else rmse(values, truth)
    kind = "acc" if bundle.task.is_classification else "rmse"
    print(
        f"predict {config.split}: {kind}={score:.4f} hard={sum(r.is_hard for r in run.records)}"
        f"/{len(run.records)} calls={run.usage.calls} cost={run.usage.cost:.4f}"
    )
    return 0


def cmd_ensemble(config: RunConfig) -> int:
    bundle = load_bundle(config.bundle)
    out = Path(config.out)
    _write_manifest(config, "ensemble", out)
    weights = fit_weights(bundle, config.metric)
    truth = bundle.labels[config.split]
    metric = accuracy if bundle.task.is_classification else rmse
    methods = ["best", "avg", "wavg", "meta"]
    if not bundle.has_train_predictions():
        methods.remove("wavg")
        print("note: skipping wavg (bundle has no train-split predictions)")
    table = {"row": np.arange(bundle.n_rows(config.split))}
    scores = []
    for method in methods:
        preds, model = run_ensemble_method(bundle, method, config.split, weights, config.k)
        table[method] = preds
        scores.append({"method": method, "metric": metric(preds, truth)})
        if model is not None:
            save_model(model, out / "meta_model.json")
    pd.DataFrame(table).to_csv(out / f"ensemble_predictions_{config.split}.csv", index=False)
    pd.DataFrame(scores).to_csv(out / "ensemble_metrics.csv", index=False)
    for row in scores:
        print(f"ensemble {row['method']}: {row['metric']:.6f}")
    return 0


def cmd_eval(config: RunConfig, bundles: list[str]) -> int:
    out = Path(config.out)
    _write_manifest(config, "eval", out)
    metric_rows = []
    cost_rows = []
    for bundle_path in bundles:
        bundle = load_bundle(bundle_path)
        name = Path(bundle_path).name
        weights = fit_weights(bundle, config.metric)
        backend = config.make_backend() if any("llm" in m for m in config.methods) else None
        for method in config.methods:
            started = time.perf_counter()
            result = evaluate_method(
                bundle,
                method,
                seeds=tuple(config.seeds),
                split=config.split,
                weights=weights,
                backend=backend,
                llm_config=config.llm_config(),
                k=config.k,
                tau=config.tau,
                mode=config.mode,
                anonymize=config.anonymize,
            )
            elapsed = time.perf_counter() - started
            for seed, value in zip(config.seeds, result.per_seed):
                metric_rows.append({"dataset": name, "method": method, "seed": seed, "value": value})
            cost_rows.append(
                {
                    "dataset": name,
                    "tau": config.tau,
                    "metric": result.mean,
                    "time_s": round(elapsed, 3),
                    "input_tokens": result.usage.input_tokens,
                    "output_tokens": result.usage.output_tokens,
                    "price": result.usage.cost,
                }
            )
            print(f"eval {name} {method}: {result.mean:.6f} +/- {result.std:.6f}")
    out.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(metric_rows).to_csv(out / "metrics.csv", index=False)
    cost_report(cost_rows).to_csv(out / "cost.csv", index=False)
    return 0


def cmd_report(config: RunConfig, metrics_csv: str, higher_is_better: bool) -> int:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    frame = pd.read_csv(metrics_csv)
    pivot = frame.pivot_table(index="method", columns="dataset", values="value", aggfunc="mean")
    methods = list(pivot.index)
    table = pivot.to_numpy()
    ranks = mean_ranks(table, higher_is_better)
    pd.DataFrame({"method": methods, "mean_rank": ranks}).to_csv(out / "ranks.csv", index=False)
    result = wilcoxon_holm(table, methods)
    sig = pd.DataFrame(result.adjusted_p, index=methods, columns=methods)
    sig.to_csv(out / "significance.csv")
    print(f"report: {len(methods)} methods x {table.shape[1]} datasets -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cot2", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("ingest", "route", "ensemble"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("predict")
    _add_common(p)
    p.add_argument("--dry-run", action="store_true", help="render prompts only, no backend calls")
    p.add_argument("--dump-traces", action="store_true", help="write expert_trace_<row>.json files")
    p.add_argument("--dump-contexts", action="store_true", help="write context_<split>_<row>.json files")

    p = sub.add_parser("eval")
    _add_common(p)
    p.add_argument("--bundles", nargs="+", help="extra bundle directories (besides --bundle)")
    p.add_argument("--methods", help="comma-separated method list")

    p = sub.add_parser("report")
    _add_common(p)
    p.add_argument("--metrics-csv", help="metrics.csv produced by eval (default <out>/metrics.csv)")
    p.add_argument("--lower-is-better", action="store_true", help="rank RMSE-style metrics")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "route":
            return cmd_route(config)
        if args.command == "predict":
            return cmd_predict(config, args.dry_run, args.dump_traces, args.dump_contexts)
        if args.command == "ensemble":
            return cmd_ensemble(config)
        if args.command == "eval":
            bundles = [config.bundle] + (args.bundles or [])
            return cmd_eval(config, bundles)
        if args.command == "report":
            metrics_csv = args.metrics_csv or str(Path(config.out) / "metrics.csv")
            return cmd_report(config, metrics_csv, not args.lower_is_better)
        raise ValueError(f"unknown command {args.command!r}")
    except Exception as exc:  # single-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
