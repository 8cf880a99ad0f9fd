"""Completion backends with retry, bounded concurrency and cost accounting.

Three backends share one interface: `remote` speaks an OpenAI-compatible
chat-completions HTTP API, `scripted` replays a canned response list keyed
by call order, and `expert` answers with the deterministic four-step
resolver wrapped in the extractable sentence. Extraction failures and
transport failures share one retry budget; the loop aborts after
max_consecutive_failures misses.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .context import TabularContext, format_real
from .expert import ExpertKnobs, run_expert
from .prompting import NoMatch, PromptDoc, extract_prediction

ENV_API_KEY = "COT2_API_KEY"
DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_FAILURES = 10


class TransportError(RuntimeError):
    """Retryable transport-level failure (network, bad status, empty body)."""


class ExtractionExhausted(RuntimeError):
    """The retry budget ran out without one extractable response."""


@dataclass
class LlmConfig:
    endpoint: str = ""
    model: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    max_inflight: int = 4
    max_consecutive_failures: int = DEFAULT_MAX_FAILURES
    price_input_per_1k: float = 0.0
    price_output_per_1k: float = 0.0
    timeout: float = 60.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_consecutive_failures < 1:
            raise ValueError("max_consecutive_failures must be >= 1")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")


@dataclass
class Usage:
    """Call/token/cost counters; cost always equals the token price identity."""

    calls: int = 0
    retries: int = 0
    input_tokens: int = 0
    output_tokens: int = 0
    cost: float = 0.0

    def record_call(self, input_tokens: int, output_tokens: int, config: LlmConfig) -> None:
        self.calls += 1
        self.input_tokens += input_tokens
        self.output_tokens += output_tokens
        self.cost += (
            input_tokens / 1000.0 * config.price_input_per_1k
            + output_tokens / 1000.0 * config.price_output_per_1k
        )

    def add(self, other: "Usage") -> None:
        self.calls += other.calls
        self.retries += other.retries
        self.input_tokens += other.input_tokens
        self.output_tokens += other.output_tokens
        self.cost += other.cost


@dataclass
class CompletionRequest:
    """One prompt plus the context it was rendered from (the expert backend
    answers from the context, not the text)."""

    prompt: PromptDoc
    context: TabularContext | None = None


def approx_tokens(text: str) -> int:
    """ceil(chars / 4): offline stand-in so cost accounting stays testable."""
    return -(-len(text) // 4)


class RemoteBackend:
    """POSTs one chat-completion per call; reads COT2_API_KEY for auth."""

    name = "remote"

    def __init__(self, config: LlmConfig, api_key: str | None = None):
        self.config = config
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        if not config.endpoint:
            raise ValueError("remote backend needs an endpoint URL")

    def complete(self, request: CompletionRequest):
        body = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": request.prompt.text}],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(self.config.endpoint, json=body, headers=headers, timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"status {response.status_code}: {response.text[:200]}")
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise TransportError("completion missing response text")
        usage = data.get("usage") or {}
        return (
            text,
            int(usage.get("prompt_tokens", approx_tokens(request.prompt.text))),
            int(usage.get("completion_tokens", approx_tokens(text))),
        )


class ScriptedBackend:
    """Replays a response script in call order; exceptions in the script are
    raised as transport failures. Thread-safe."""

    name = "scripted"

    def __init__(self, script: list):
        self.script = list(script)
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest):
        with self._lock:
            if self._cursor >= len(self.script):
                raise TransportError("response script exhausted")
            entry = self.script[self._cursor]
            self._cursor += 1
        if isinstance(entry, Exception):
            raise TransportError(str(entry))
        return entry, approx_tokens(request.prompt.text), approx_tokens(entry)


class ExpertBackend:
    """Answers from the deterministic expert and wraps the verdict in the
    extractable sentence."""

    name = "expert"

    def __init__(self, knobs: ExpertKnobs = ExpertKnobs(), trace_sink: dict | None = None):
        self.knobs = knobs
        self.trace_sink = trace_sink

    def complete(self, request: CompletionRequest):
        if request.context is None:
            raise ValueError("expert backend needs the tabular context")
        trace = run_expert(request.context, self.knobs)
        if self.trace_sink is not None:
            self.trace_sink[id(request)] = trace
        if request.prompt.task.is_classification:
            text = f"I predict the label of the target instance as {int(trace.final)}"
        else:
            text = f"I predict the value of the target instance as {format_real(trace.final)}"
        return text, approx_tokens(request.prompt.text), approx_tokens(text)


def complete(backend, request: CompletionRequest, config: LlmConfig):
    """One backend call; returns (response text, per-call Usage)."""
    text, in_tokens, out_tokens = backend.complete(request)
    usage = Usage()
    usage.record_call(in_tokens, out_tokens, config)
    return text, usage


def predict_with_retry(backend, request: CompletionRequest, config: LlmConfig):
    """Call-and-extract loop: returns on the first extractable response,
    raises ExtractionExhausted after max_consecutive_failures misses.
    Transport errors and extraction misses share the budget; every attempt
    is counted in the returned Usage."""
    usage = Usage()
    failures = 0
    while failures < config.max_consecutive_failures:
        try:
            text, call_usage = complete(backend, request, config)
        except TransportError:
            usage.calls += 1  # attempt counted even though no tokens came back
            failures += 1
            usage.retries = failures
            continue
        usage.add(call_usage)
        try:
            prediction = extract_prediction(text, request.prompt.task)
        except NoMatch:
            failures += 1
            usage.retries = failures
            continue
        usage.retries = failures
        return prediction, usage
    raise ExtractionExhausted(f"{failures} consecutive failures")


def run_batch(backend, requests_: list[CompletionRequest], config: LlmConfig):
    """Dispatch many requests with at most max_inflight outstanding.

    Results come back ordered by request index regardless of completion
    order; the total usage is the sum of the per-call usages.
    """
    if not requests_:
        return [], Usage()
    with ThreadPoolExecutor(max_workers=config.max_inflight) as pool:
        results = list(pool.map(lambda r: predict_with_retry(backend, r, config), requests_))
    total = Usage()
    for _, usage in results:
        total.add(usage)
    return results, total
