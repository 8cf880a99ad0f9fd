"""Prompt rendering and response parsing.

The template is frozen and snapshot-tested: any wording change must show up
as an explicit diff under prompt_snapshots/. Predictions are extracted with
a single first-match regular-expression search; a miss (or an out-of-range
class) raises NoMatch so the caller's retry loop can re-enter the prompt.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .bundle import TaskKind
from .context import TabularContext, format_real

WITH_COT = "with_cot"
WITHOUT_COT = "without_cot"
MODES = (WITH_COT, WITHOUT_COT)

CLASSIFICATION_PATTERN = r"I predict the label of the target instance as (\d+)"
REGRESSION_PATTERN = r"(-?\d+\.\d+)"

STEP_HEADINGS = (
    "Well-performing Model Selection",
    "Outlier Identification",
    "Suitable Model Selection",
    "Final Prediction",
)

_STEP_TEXTS = (
    "Compare every model's training and validation metrics, identify models "
    "that overfit or underfit the dataset, and keep the set of models that "
    "perform well overall.",
    "Using the well-performing models' predictions for the neighbors, the "
    "neighbors' true labels, and the label statistics, identify neighbors "
    "that look like outliers (neighbors most well-performing models get "
    "wrong) and set them aside.",
    "Using the remaining neighbors' true labels and every model's "
    "predictions for them, select the models most suitable for the "
    "neighborhood of the target instance.",
    "Combine the remaining neighbors' true labels, the label statistics, "
    "and the target-instance predictions of the suitable and "
    "well-performing models, then decide the final prediction.",
)


class NoMatch(ValueError):
    """The response contains no extractable prediction."""


@dataclass
class PromptDoc:
    """Rendered prompt text plus the pattern that will parse its answer."""

    text: str
    task: TaskKind
    mode: str
    anonymized: bool
    extraction_pattern: str


def _metric_line(name: str, record, classification: bool) -> str:
    metric = "accuracy" if classification else "RMSE"
    train = "unavailable" if record.train_metric is None else format_real(record.train_metric)
    return f"{name}: train {metric} {train}, validation {metric} {format_real(record.val_metric)}"


def _value(v, classification: bool) -> str:
    return str(int(v)) if classification else format_real(v)


def render_prompt(ctx: TabularContext, mode: str = WITH_COT, anonymize: bool = True) -> PromptDoc:
    """Render the tabular context into deterministic prompt text.

    Models appear under their positional aliases unless anonymize is off,
    in which case the real model_ids are shown. with_cot appends the four
    numbered reasoning-step instructions.
    """
    if mode not in MODES:
        raise ValueError(f"unknown prompt mode {mode!r}")
    cls = ctx.task.is_classification
    names = [(r.alias if anonymize else r.model_id) for r in ctx.model_records]

    lines = [
        "You are an expert at combining the predictions of multiple machine "
        "learning models on a tabular dataset. No raw feature values and no "
        "feature or dataset descriptions are available; use only the "
        "information below.",
        "",
        "== Task ==",
    ]
    if ctx.task.kind == "binclass":
        lines.append("Binary classification with 2 classes; labels are 0 and 1.")
    elif ctx.task.kind == "multiclass":
        c = ctx.task.n_classes
        lines.append(f"Multiclass classification with {c} classes; labels are the integers 0 to {c - 1}.")
    else:
        lo, hi = ctx.label_range
        lines.append(
            "Regression; training labels lie between "
            f"{format_real(lo)} and {format_real(hi)}."
        )
    if cls:
        freqs = ", ".join(
            f"label {i}: {format_real(q)}" for i, q in enumerate(ctx.frequencies)
        )
        lines.append(f"Label frequencies in the training data: {freqs}.")

    lines += [
        "",
        "== External models ==",
        "Every model was trained on the same training split of this dataset.",
    ]
    lines += [_metric_line(n, r, cls) for n, r in zip(names, ctx.model_records)]

    lines += [
        "",
        "== Nearest neighbors of the target instance ==",
        f"The {ctx.k} training instances most similar to the target, nearest first.",
        "Each row shows the neighbor's true label and every model's prediction for it.",
    ]
    for j in range(ctx.k):
        preds = ", ".join(
            f"{n}: {_value(v, cls)}" for n, v in zip(names, ctx.neighbor_predictions[j])
        )
        lines.append(f"Neighbor {j + 1}: true label {_value(ctx.neighbor_labels[j], cls)} | {preds}")

    target = ", ".join(f"{n}: {_value(v, cls)}" for n, v in zip(names, ctx.target_predictions))
    lines += ["", "== Target instance ==", f"Model predictions for the target instance: {target}"]

    if mode == WITH_COT:
        lines += ["", "== Reasoning steps ==", "Work through the following four steps in order before answering."]
        for i, (heading, text) in enumerate(zip(STEP_HEADINGS, _STEP_TEXTS)):
            lines.append(f"Step {chr(ord('a') + i)}) {heading}: {text}")

    lines += ["", "== Answer format =="]
    if cls:
        lines += [
            "Explain your reasoning, then end your response with exactly one "
            "sentence of the form: I predict the label of the target instance as <label>",
            "Your answer will be extracted with the regular expression: "
            + CLASSIFICATION_PATTERN,
        ]
        pattern = CLASSIFICATION_PATTERN
    else:
        lines += [
            "Explain your reasoning, then end your response with exactly one "
            "sentence of the form: I predict the value of the target instance "
            "as <value>, where <value> is a decimal number with four decimal "
            "places (for example 12.3456).",
            "Your answer will be extracted with the regular expression: "
            + REGRESSION_PATTERN,
        ]
        pattern = REGRESSION_PATTERN

    return PromptDoc(
        text="\n".join(lines) + "\n",
        task=ctx.task,
        mode=mode,
        anonymized=anonymize,
        extraction_pattern=pattern,
    )


def extract_prediction(response: str, task: TaskKind):
    """First-match extraction of the prediction from a response string.

    Classification returns a class index in [0, C); anything else (no
    match, or a matched integer outside the label set) raises NoMatch.
    Regression returns the first decimal number in the response.
    """
    if task.is_classification:
        match = re.search(CLASSIFICATION_PATTERN, response)
        if match is None:
            raise NoMatch("no prediction sentence in response")
        label = int(match.group(1))
        if not 0 <= label < task.n_classes:
            raise NoMatch(f"matched label {label} outside [0, {task.n_classes})")
        return label
    match = re.search(REGRESSION_PATTERN, response)
    if match is None:
        raise NoMatch("no decimal value in response")
    return float(match.group(1))
