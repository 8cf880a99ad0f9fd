"""Standalone exporter entry point.

    pool-export --data table.csv --spec pool.yaml --out bundle_dir

The spec file (YAML or JSON) names the label column, the task, per-column
feature kinds, and optionally the model list / training budget:

    task: binclass
    label_column: y
    feature_kinds: [numerical, numerical, categorical]
    models: [knn, gbdt, hist_gbdt, sgb, mlp, resnet, ft_transformer, autoint]
    seed: 0
    epochs: 200
    batch_size: 1024
    patience: 20
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd
import yaml

from .export import export_bundle
from .pool import PoolSpec, train_pool


def load_spec_file(path: str | Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        return yaml.safe_load(text)
    return json.loads(text)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pool-export", description=__doc__)
    parser.add_argument("--data", required=True, help="raw dataset CSV (features + label column)")
    parser.add_argument("--spec", required=True, help="pool spec file (YAML or JSON)")
    parser.add_argument("--out", required=True, help="bundle output directory")
    args = parser.parse_args(argv)

    try:
        doc = load_spec_file(args.spec)
        data = pd.read_csv(args.data, float_precision="round_trip")
        pool = train_pool(
            data,
            label_column=doc["label_column"],
            feature_kinds=list(doc["feature_kinds"]),
            task=doc["task"],
            spec=PoolSpec.from_dict(doc),
        )
        root = export_bundle(pool, args.out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"exported {len(pool.model_ids)} models to {root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
