"""Pluggable pseudo-label providers metered by a shared call budget.

Three interchangeable labelers: a remote LLM client driven by a few-shot
prompt template, a gold-lookup oracle for offline testing, and a keyword-rule
labeler. Every network attempt (not just successes) counts against the
budget, and budget accounting is atomic so concurrent label calls can never
overspend.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol

import requests

from .dataset import Item, Label
from .samplers import KeywordRules, matches_rules

API_KEY_ENV = "LTS_LLM_API_KEY"

_ACCEPTED_TOKENS = {"1": Label.RELEVANT, "0": Label.IRRELEVANT,
                    "relevant": Label.RELEVANT, "irrelevant": Label.IRRELEVANT}


class BudgetExhaustedError(RuntimeError):
    """Raised when a label call would exceed the budget's call ceiling."""


class LabelParseError(ValueError):
    """Raised when a raw response does not reduce to a 0/1 label."""


class TransportError(RuntimeError):
    """Raised when the remote endpoint cannot be reached or answers garbage."""


class LabelFailedError(RuntimeError):
    """Raised when retries are spent without obtaining a parseable label."""


class OracleMissError(KeyError):
    """Raised when the oracle is asked about an item outside its lookup."""


@dataclass(frozen=True)
class Shot:
    """One in-context example: a title, its label, and a brief rationale."""

    title: str
    label: Label
    rationale: str


@dataclass(frozen=True)
class PromptTemplate:
    task_description: str
    shots: tuple[Shot, ...]
    answer_instruction: str = "Answer with a single character: 1 or 0."

    def __post_init__(self) -> None:
        labels = {shot.label for shot in self.shots}
        if Label.RELEVANT not in labels or Label.IRRELEVANT not in labels:
            raise ValueError("template needs at least one positive and one negative shot")


def render_prompt(tpl: PromptTemplate, item: Item) -> str:
    """Deterministic prompt text: task, shots, instruction, then the query title.

    The rendering is byte-identical across runs and ends with the query title
    followed by a bare "Label:" for the model to complete.
    """
    blocks: list[str] = []
    if tpl.task_description:
        blocks.append(tpl.task_description)
    for shot in tpl.shots:
        blocks.append(f"Title: {shot.title}\nLabel: {int(shot.label)}\nReason: {shot.rationale}")
    if tpl.answer_instruction:
        blocks.append(tpl.answer_instruction)
    blocks.append(f"Title: {item.title}\nLabel:")
    return "\n\n".join(blocks)


def parse_label(raw: str) -> Label:
    """Strict first-token parse: "1", "0", or case-insensitive (ir)relevant."""
    tokens = raw.strip().split()
    if not tokens:
        raise LabelParseError("empty response")
    token = tokens[0].lower()
    if token not in _ACCEPTED_TOKENS:
        raise LabelParseError(f"unparseable response {raw!r}")
    return _ACCEPTED_TOKENS[token]


@dataclass
class Budget:
    """Global call ceiling with per-call cost; reserve() is thread-safe."""

    max_calls: int
    per_call_cost: float = 0.0
    spent_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def reserve(self) -> None:
        """Consume one call or raise; never leaves spent_calls > max_calls."""
        with self._lock:
            if self.spent_calls >= self.max_calls:
                raise BudgetExhaustedError(
                    f"label budget exhausted ({self.spent_calls}/{self.max_calls} calls)"
                )
            self.spent_calls += 1

    @property
    def remaining(self) -> int:
        return self.max_calls - self.spent_calls

    @property
    def total_cost(self) -> float:
        return self.spent_calls * self.per_call_cost


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0
    backoff_max: float = 8.0

    def delay(self, attempt: int) -> float:
        """Backoff before retry number `attempt` (1-based on failures)."""
        return min(self.backoff_base * self.backoff_factor ** (attempt - 1), self.backoff_max)


@dataclass(frozen=True)
class LabelResult:
    item_id: str
    label: Label
    raw_response: str
    cost: float
    attempts: int


class CompletionEndpoint(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpEndpoint:
    """Chat-style completion endpoint over HTTP POST.

    The authorization token is read from the LTS_LLM_API_KEY environment
    variable at construction time.
    """

    def __init__(self, url: str, model_name: str, timeout: float = 30.0):
        self.url = url
        self.model_name = model_name
        self.timeout = timeout
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise RuntimeError(f"environment variable {API_KEY_ENV} is not set")
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.model_name,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = requests.post(self.url, json=payload, headers=self._headers, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except requests.RequestException as exc:
            raise TransportError(f"completion request failed: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


def label_llm(
    endpoint: CompletionEndpoint,
    tpl: PromptTemplate,
    item: Item,
    budget: Budget,
    retry: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
) -> LabelResult:
    """Label one item through the completion endpoint.

    Retries on transport errors and parse failures with exponential backoff.
    Every attempt reserves one budget call first, so the budget can run out
    mid-retry; in that case the exhaustion error propagates.
    """
    prompt = render_prompt(tpl, item)
    attempts = 0
    last_error: Exception | None = None
    while attempts < retry.max_attempts:
        budget.reserve()
        attempts += 1
        try:
            raw = endpoint.complete(prompt)
            label = parse_label(raw)
        except (TransportError, LabelParseError) as exc:
            last_error = exc
            if attempts < retry.max_attempts:
                sleep(retry.delay(attempts))
            continue
        return LabelResult(
            item_id=item.id,
            label=label,
            raw_response=raw,
            cost=attempts * budget.per_call_cost,
            attempts=attempts,
        )
    raise LabelFailedError(
        f"no label for item {item.id!r} after {attempts} attempts: {last_error}"
    ) from last_error


def label_oracle(gold_lookup: Mapping[str, Label], item: Item) -> LabelResult:
    """Return the known gold label; zero cost, one attempt."""
    try:
        label = gold_lookup[item.id]
    except KeyError:
        raise OracleMissError(item.id) from None
    return LabelResult(
        item_id=item.id, label=label, raw_response=str(int(label)), cost=0.0, attempts=1
    )


def label_keyword(rules: KeywordRules, item: Item) -> LabelResult:
    """Relevant iff the title matches the keyword predicate; zero cost."""
    label = Label.RELEVANT if matches_rules(item.title, rules) else Label.IRRELEVANT
    return LabelResult(
        item_id=item.id, label=label, raw_response=str(int(label)), cost=0.0, attempts=1
    )


class Labeler(Protocol):
    """What the orchestration loop needs from a label provider."""

    name: str
    budget: Budget
    # calls consumed per labeled item when known up front, else None
    calls_per_item: int | None

    def label(self, item: Item) -> LabelResult: ...


@dataclass
class OracleLabeler:
    lookup: Mapping[str, Label]
    budget: Budget
    name: str = "oracle"
    calls_per_item: int | None = 1

    def label(self, item: Item) -> LabelResult:
        self.budget.reserve()
        return label_oracle(self.lookup, item)


@dataclass
class KeywordLabeler:
    rules: KeywordRules
    budget: Budget
    name: str = "keyword"
    calls_per_item: int | None = 1

    def label(self, item: Item) -> LabelResult:
        self.budget.reserve()
        return label_keyword(self.rules, item)


@dataclass
class LlmLabeler:
    endpoint: CompletionEndpoint
    template: PromptTemplate
    budget: Budget
    retry: RetryPolicy = RetryPolicy()
    name: str = "llm"
    calls_per_item: int | None = None

    def label(self, item: Item) -> LabelResult:
        return label_llm(self.endpoint, self.template, item, self.budget, self.retry)
