"""Instance-level ensemble engine for tabular prediction.

Builds a non-semantic tabular context (nearest neighbors plus external-model
predictions) around each target instance, routes easy instances past the
language model, and resolves hard ones through a structured four-step
prompt — or its deterministic in-repo expert equivalent — with voting and
meta-learner baselines and an evaluation harness alongside.
"""

from .bundle import (
    BundleError,
    DatasetBundle,
    ModelRecord,
    TaskKind,
    compute_model_metrics,
    encode_features,
    load_bundle,
    split_dataset,
    write_bundle,
)
from .context import TabularContext, build_context, label_frequencies
from .ensembles import (
    average_vote,
    best_model,
    build_meta_features,
    predict_meta,
    train_meta,
    weighted_vote,
)
from .evaluation import evaluate_method, mean_ranks, wilcoxon_holm, wilcoxon_signed_rank
from .expert import ExpertKnobs, ExpertTrace, run_expert
from .gateway import (
    CompletionRequest,
    ExpertBackend,
    ExtractionExhausted,
    LlmConfig,
    RemoteBackend,
    ScriptedBackend,
    TransportError,
    Usage,
    complete,
    predict_with_retry,
)
from .prompting import NoMatch, PromptDoc, extract_prediction, render_prompt
from .retrieval import (
    FeatureWeights,
    NeighborSet,
    k_nearest,
    kernel_in_use,
    mutual_information_weights,
    weighted_distance,
)
from .router import HardnessVerdict, classify_hardness, easy_fallback, hard_ratio

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
