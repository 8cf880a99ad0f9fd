"""Bundle writer: the canonical directory layout the ensemble engine loads.

    meta.json, X_{train,val,test}.csv, y_{train,val,test}.csv,
    preds/<model_id>/{train,val,test}.csv

Classification prediction CSVs carry columns p0..p{C-1}; regression a
single y_hat column. This module intentionally has no dependency on the
engine package: the directory layout is the only contract.
"""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd

from .pool import SPLITS, TrainedPool, pool_metrics


def export_bundle(pool: TrainedPool, out_dir: str | Path) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    meta: dict = {
        "task": pool.task,
        "model_ids": pool.model_ids,
        "feature_kinds": pool.feature_kinds,
    }
    if pool.task == "regression":
        meta["label_min"] = float(pool.labels["train"].min())
        meta["label_max"] = float(pool.labels["train"].max())
    else:
        meta["class_count"] = pool.n_classes
    (root / "meta.json").write_text(json.dumps(meta, indent=2))

    for split in SPLITS:
        pool.frames[split].to_csv(root / f"X_{split}.csv", index=False)
        pd.DataFrame({"y": pool.labels[split]}).to_csv(root / f"y_{split}.csv", index=False)
        for model_id in pool.model_ids:
            target = root / "preds" / model_id
            target.mkdir(parents=True, exist_ok=True)
            values = pool.predictions[(model_id, split)]
            if pool.task == "regression":
                frame = pd.DataFrame({"y_hat": values})
            else:
                frame = pd.DataFrame(values, columns=[f"p{i}" for i in range(values.shape[1])])
            frame.to_csv(target / f"{split}.csv", index=False)

    (root / "pool_metrics.json").write_text(json.dumps(pool_metrics(pool), indent=2))
    return root
