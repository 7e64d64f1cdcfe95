"""Synthetic imbalanced corpora with known ground truth, plus the paired-seed
harness that compares sampling strategies on them.

The generator plants positives inside a minority of topics so that clustering
exposes pockets of relevance. Positive titles carry an animal token and a
product token; the benchmark keyword rules deliberately know only half of each
vocabulary, which is what caps keyword-based sampling's recall.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bandit import BanditConfig
from .classifier import SearchGrid, TrainConfig, evaluate
from .dataset import Corpus, Item, Label, split_pool_gold
from .features import FeaturizerConfig
from .labelers import Budget, OracleLabeler
from .lts import LtsConfig, featurize_gold, run_baseline, run_lts
from .samplers import KeywordRules

_ANIMALS = (
    "pangolin", "tiger", "elephant", "rhino", "leopard", "turtle",
    "shark", "otter", "macaw", "cobra", "gibbon", "manta",
    "lemur", "ocelot", "caiman", "ibis", "saiga", "serow",
    "langur", "tapir", "dugong", "hornbill", "tortoise", "monitor",
    "python", "falcon", "antelope", "seahorse", "civet", "bison",
    "crane", "salamander",
)
_PRODUCTS = (
    "pelt", "tusk", "claw", "fin",
    "shell", "hide", "fang", "plume",
    "horn", "scale", "bone", "feather",
    "skin", "tooth", "carapace", "talon",
)


@dataclass(frozen=True)
class SynthSpec:
    n_items: int = 20000
    positive_rate: float = 0.05
    n_topics: int = 20
    positive_topics: tuple[int, ...] = (0, 7, 14)
    vocab_size: int = 25  # filler tokens per topic
    title_len: tuple[int, int] = (4, 10)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if not (0.0 < self.positive_rate < 1.0):
            raise ValueError("positive_rate must lie in (0, 1)")
        if self.n_topics < 1:
            raise ValueError("n_topics must be >= 1")
        if not self.positive_topics:
            raise ValueError("positive_topics must be nonempty")
        if len(set(self.positive_topics)) != len(self.positive_topics):
            raise ValueError("positive_topics must be unique")
        if any(not (0 <= t < self.n_topics) for t in self.positive_topics):
            raise ValueError("positive_topics must index into range(n_topics)")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        lo, hi = self.title_len
        if lo < 1 or hi < lo:
            raise ValueError("title_len must satisfy 1 <= lo <= hi")


def default_spec(seed: int = 0) -> SynthSpec:
    return SynthSpec(seed=seed)


def diffuse_spec(seed: int = 0) -> SynthSpec:
    """Adversarial variant: positives spread over every topic, so clustering
    exposes no pocket and the bandit has nothing to exploit."""
    return SynthSpec(positive_topics=tuple(range(20)), seed=seed)


def _topic_markers(vocab: tuple[str, ...], slot: int, n_slots: int) -> tuple[str, ...]:
    """Marker subset for one positive topic: everything except one stride.

    Subsets overlap pairwise but differ per topic, so each pocket has its own
    marker flavor while an enriched sample can still cover the whole
    vocabulary.
    """
    if n_slots == 1:
        return vocab
    excluded = (slot - 1) % n_slots
    return tuple(tok for j, tok in enumerate(vocab) if j % n_slots != excluded)


def generate(spec: SynthSpec) -> Corpus:
    """Deterministic corpus with exactly round(rate * n) positives.

    Positive titles carry one animal and one product token from their topic's
    marker subset. Filler tokens are topic-prefixed, which keeps topic
    vocabularies disjoint.
    """
    expected = spec.positive_rate * spec.n_items
    if expected < 1.0:
        raise ValueError("infeasible spec: positive_rate * n_items < 1")
    n_pos = int(round(expected))
    rng = np.random.default_rng(spec.seed)

    flags = np.zeros(spec.n_items, dtype=bool)
    flags[:n_pos] = True
    rng.shuffle(flags)

    pos_topics = tuple(sorted(spec.positive_topics))
    slot_of = {topic: i for i, topic in enumerate(pos_topics)}
    lo, hi = spec.title_len

    items = []
    for i in range(spec.n_items):
        positive = bool(flags[i])
        if positive:
            topic = pos_topics[int(rng.integers(len(pos_topics)))]
        else:
            topic = int(rng.integers(spec.n_topics))
        length = int(rng.integers(lo, hi + 1))
        words = [
            f"topic{topic}term{int(rng.integers(spec.vocab_size))}"
            for _ in range(length)
        ]
        if positive:
            slot = slot_of[topic]
            animals = _topic_markers(_ANIMALS, slot, len(pos_topics))
            products = _topic_markers(_PRODUCTS, slot, len(pos_topics))
            animal = animals[int(rng.integers(len(animals)))]
            product = products[int(rng.integers(len(products)))]
            words.insert(int(rng.integers(len(words) + 1)), animal)
            words.insert(int(rng.integers(len(words) + 1)), product)
        items.append(Item(
            id=f"s{i:06d}",
            title=" ".join(words),
            gold_label=Label.RELEVANT if positive else Label.IRRELEVANT,
        ))
    return Corpus(items=tuple(items), embedding_dim=None)


def benchmark_rules() -> KeywordRules:
    """Keyword rules covering a quarter of each marker vocabulary.

    Deliberately incomplete: a keyword list never keeps up with the long tail
    of marker terms, which is what caps keyword sampling's recall.
    """
    return KeywordRules(
        animal_names=_ANIMALS[:6],
        product_terms=_PRODUCTS[:3],
    )


def gold_split_ids(corpus: Corpus, fraction: float = 0.1, seed: int = 0) -> list[str]:
    """Stratified holdout of ids to serve as the gold set."""
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng([seed, 9])
    chosen: list[str] = []
    for label in (Label.RELEVANT, Label.IRRELEVANT):
        ids = [item.id for item in corpus if item.gold_label == label]
        take = max(1, int(round(fraction * len(ids))))
        picks = rng.choice(len(ids), size=take, replace=False)
        chosen.extend(ids[i] for i in picks)
    return sorted(chosen)


def benchmark_lts_config(seed: int = 0) -> LtsConfig:
    """Loop hyperparameters used by the benchmark harness.

    Small batches buy the bandit enough rounds to locate the positive pockets
    within a 1,000-call budget; the pessimistic arm prior and zero starting
    baseline make early wins on pocket arms count.
    """
    return LtsConfig(
        k=6,
        n_per_iter=50,
        max_pos=35,
        baseline_init=0.0,
        max_iterations=60,
        bandit=BanditConfig(alpha=1.0, beta=3.0, delta=0.99),
        train=TrainConfig(learning_rate=10.0, weight_decay=0.0, max_epochs=60,
                          patience=20, batch=32, seed=seed),
        grid=SearchGrid((10.0, 3.0), (0.0, 1e-4)),
        seed=seed,
        replay_all=False,
    )


@dataclass(frozen=True)
class CompareRow:
    strategy: str
    budget: int
    seed: int
    f1: float
    precision: float
    recall: float
    s_pos: int
    s_neg: int
    ratio: float
    calls: int
    cost: float
    wall_s: float
    truncated: bool
    no_data: bool


_CSV_HEADER = ("strategy,budget,seed,f1,precision,recall,s_pos,s_neg,ratio,"
               "calls,cost,wall_s,truncated,no_data")


@dataclass(frozen=True)
class CompareTable:
    rows: tuple[CompareRow, ...]

    def rows_for(self, strategy: str, budget: int | None = None) -> list[CompareRow]:
        return [r for r in self.rows
                if r.strategy == strategy and (budget is None or r.budget == budget)]

    def median(self, strategy: str, field: str, budget: int | None = None) -> float:
        rows = self.rows_for(strategy, budget)
        if not rows:
            raise ValueError(f"no rows for strategy {strategy!r}")
        return statistics.median(getattr(r, field) for r in rows)

    def to_csv_lines(self) -> list[str]:
        lines = [_CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.strategy},{r.budget},{r.seed},{r.f1!r},{r.precision!r},"
                f"{r.recall!r},{r.s_pos},{r.s_neg},{r.ratio!r},{r.calls},"
                f"{r.cost!r},{r.wall_s!r},{int(r.truncated)},{int(r.no_data)}"
            )
        return lines

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.to_csv_lines()) + "\n")


def paired_compare(
    corpus: Corpus,
    gold_split: Iterable[str],
    strategies: Sequence[str],
    budgets: Sequence[int],
    seeds: Sequence[int],
    base_cfg: LtsConfig | None = None,
    fcfg: FeaturizerConfig | None = None,
    rules: KeywordRules | None = None,
    per_call_cost: float = 0.02,
) -> CompareTable:
    """Run every strategy with identical budgets under paired seeds.

    Each cell gets a fresh oracle labeler capped at the cell's budget, so no
    state leaks between runs. One row per (strategy, budget, seed).
    """
    if not strategies:
        raise ValueError("strategies must be nonempty")
    fcfg = fcfg or FeaturizerConfig()
    rules = rules or benchmark_rules()
    lookup = {item.id: item.gold_label for item in corpus}
    pool, gold = split_pool_gold(corpus, list(gold_split))
    gold_pairs = featurize_gold(gold, fcfg)

    rows = []
    for budget in budgets:
        for seed in seeds:
            cfg = replace(base_cfg, seed=seed) if base_cfg else benchmark_lts_config(seed)
            for strategy in strategies:
                labeler = OracleLabeler(
                    lookup=lookup,
                    budget=Budget(max_calls=budget, per_call_cost=per_call_cost),
                )
                t0 = time.perf_counter()
                if strategy == "lts":
                    res = run_lts(pool, gold, labeler, cfg, fcfg)
                    metrics = evaluate(res.target_weights, gold_pairs)
                elif strategy in ("random", "kbs"):
                    res = run_baseline(pool, gold, labeler, strategy, budget,
                                       cfg, fcfg, rules=rules)
                    metrics = res.metrics
                else:
                    raise ValueError(f"unknown strategy {strategy!r}")
                wall = time.perf_counter() - t0
                rows.append(CompareRow(
                    strategy=strategy,
                    budget=budget,
                    seed=seed,
                    f1=metrics.f1_pos,
                    precision=metrics.precision_pos,
                    recall=metrics.recall_pos,
                    s_pos=res.labeled.s_pos,
                    s_neg=res.labeled.s_neg,
                    ratio=res.labeled.ratio,
                    calls=labeler.budget.spent_calls,
                    cost=labeler.budget.total_cost,
                    wall_s=wall,
                    truncated=res.truncated,
                    no_data=res.no_data,
                ))
    return CompareTable(rows=tuple(rows))
