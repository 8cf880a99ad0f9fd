"""Train a pool of tabular models and export a canonical prediction bundle."""

from .export import export_bundle
from .pool import DEFAULT_MODELS, PoolSpec, TrainedPool, pool_metrics, train_pool

__all__ = [
    "DEFAULT_MODELS",
    "PoolSpec",
    "TrainedPool",
    "export_bundle",
    "pool_metrics",
    "train_pool",
]
