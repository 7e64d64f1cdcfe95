"""The sampling orchestrator: cluster once, then iterate.

Each iteration selects a cluster arm, draws a batch from it (model-guided
after the first iteration), pseudo-labels the batch, retrains the classifier
warm-started from the current best weights, and converts validation
improvement into the bandit reward. Losing iterations revert to the previous
best weights. The run ends on budget exhaustion, iteration cap, or a target
F1; the accumulated labels then train the final target classifier from
scratch via grid search.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bandit import BanditConfig, BanditState, select_arm, update
from .classifier import (
    ModelWeights,
    SearchGrid,
    TrainConfig,
    evaluate,
    grid_search,
    predict,
    train,
)
from .clustering import cluster
from .dataset import Corpus, GoldSet, Item, Label
from .features import FeatureVector, FeaturizerConfig, featurize_item
from .labelers import (
    BudgetExhaustedError,
    Labeler,
    LabelFailedError,
    LabelResult,
    TransportError,
)
from .samplers import KeywordRules, kbs_candidates, kbs_sample, random_sample


class ClusterExhaustedError(RuntimeError):
    """Selected cluster has no unlabeled items left."""


@dataclass(frozen=True)
class LtsConfig:
    k: int = 20
    n_per_iter: int = 200
    max_pos: int | None = None  # defaults to n_per_iter // 2
    baseline_init: float = 0.5
    target_f1: float | None = None
    max_iterations: int = 50
    bandit: BanditConfig = BanditConfig()
    train: TrainConfig = TrainConfig()
    grid: SearchGrid = SearchGrid()
    seed: int = 0
    replay_all: bool = False
    random_select_only: bool = False
    parallel_labels: int = 4

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_per_iter < 1:
            raise ValueError("n_per_iter must be >= 1")
        mp = self.resolved_max_pos
        if not (0 < mp <= self.n_per_iter):
            raise ValueError(f"max_pos must lie in (0, n_per_iter], got {mp}")
        if not (0.0 <= self.baseline_init <= 1.0):
            raise ValueError("baseline_init must lie in [0, 1]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.parallel_labels < 1:
            raise ValueError("parallel_labels must be >= 1")

    @property
    def resolved_max_pos(self) -> int:
        return self.max_pos if self.max_pos is not None else max(1, self.n_per_iter // 2)


@dataclass(frozen=True)
class LabeledExample:
    item: Item
    label: Label
    provenance: str
    iteration: int


class LabeledSet:
    """Accumulated pseudo-labeled sample; item ids are unique."""

    def __init__(self) -> None:
        self.entries: list[LabeledExample] = []
        self._ids: set[str] = set()

    def add(self, item: Item, label: Label, provenance: str, iteration: int) -> None:
        if item.id in self._ids:
            raise ValueError(f"item {item.id!r} already labeled")
        self._ids.add(item.id)
        self.entries.append(LabeledExample(item, label, provenance, iteration))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._ids

    @property
    def ids(self) -> frozenset[str]:
        return frozenset(self._ids)

    @property
    def s_pos(self) -> int:
        return sum(1 for e in self.entries if e.label == Label.RELEVANT)

    @property
    def s_neg(self) -> int:
        return len(self.entries) - self.s_pos

    @property
    def ratio(self) -> float:
        return self.s_pos / self.s_neg if self.s_neg else float("inf")

    def export(self, path: str | Path) -> None:
        """Line-delimited records: id, label, provenance, iteration."""
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                record = {
                    "id": e.item.id,
                    "label": int(e.label),
                    "provenance": e.provenance,
                    "iteration": e.iteration,
                }
                fh.write(json.dumps(record) + "\n")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    cluster: int
    n_labeled: int
    n_pseudo_pos: int
    f1_before: float
    f1_after: float
    reward: int
    baseline_after: float
    reverted: bool
    cumulative_calls: int
    cumulative_cost: float


ITERATION_LOG_COLUMNS = (
    "t", "cluster", "n_labeled", "n_pseudo_pos", "f1_before", "f1_after",
    "reward", "baseline_after", "reverted", "cumulative_calls", "cumulative_cost",
)


def write_iteration_log(records: Sequence[IterationRecord], path: str | Path) -> None:
    """One comma-separated line per iteration, column order fixed."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(
                f"{r.t},{r.cluster},{r.n_labeled},{r.n_pseudo_pos},"
                f"{r.f1_before!r},{r.f1_after!r},{r.reward},{r.baseline_after!r},"
                f"{int(r.reverted)},{r.cumulative_calls},{r.cumulative_cost!r}\n"
            )


@dataclass
class PhaseTimings:
    clustering: float = 0.0
    inference: float = 0.0
    labeling: float = 0.0
    training: float = 0.0
    total: float = 0.0

    def as_dict(self) -> dict:
        return {
            "clustering": self.clustering,
            "inference": self.inference,
            "labeling": self.labeling,
            "training": self.training,
            "total": self.total,
        }


@dataclass
class LtsResult:
    labeled: LabeledSet
    target_weights: ModelWeights
    records: list[IterationRecord]
    truncated: bool = False
    no_data: bool = False
    timings: PhaseTimings = field(default_factory=PhaseTimings)


@dataclass
class BaselineResult:
    labeled: LabeledSet
    target_weights: ModelWeights
    metrics: object
    truncated: bool = False
    no_data: bool = False
    timings: PhaseTimings = field(default_factory=PhaseTimings)


def select_samples(
    cluster_members: Sequence[Item],
    model: ModelWeights | None,
    n: int,
    max_pos: int,
    rng: np.random.Generator,
    vectors: Mapping[str, FeatureVector] | None = None,
) -> list[Item]:
    """Pick up to n items from one cluster's unlabeled members.

    Without a model the pick is uniform. With a model, the highest-probability
    predicted positives are taken first (capped at max_pos) and the remaining
    slots are filled with predicted negatives in descending probability order.
    A cluster holding fewer than n unlabeled items is returned whole.
    """
    members = list(cluster_members)
    if not members:
        raise ClusterExhaustedError("cluster has no unlabeled items")
    if len(members) <= n:
        return members
    if model is None:
        picks = rng.choice(len(members), size=n, replace=False)
        return [members[i] for i in picks]

    if vectors is None:
        raise ValueError("model-guided selection needs the feature vectors")
    probs = [predict(model, vectors[item.id]) for item in members]
    order = sorted(range(len(members)), key=lambda i: (-probs[i], i))
    positives = [i for i in order if probs[i] >= 0.5]
    negatives = [i for i in order if probs[i] < 0.5]

    chosen = positives[:max_pos]
    chosen += negatives[: n - len(chosen)]
    if len(chosen) < n:
        # negatives ran out; overflow positives fill the remaining slots
        chosen += positives[max_pos : max_pos + (n - len(chosen))]
    return [members[i] for i in chosen]


def _label_batch(
    batch: Sequence[Item], labeler: Labeler, parallel: int
) -> tuple[list[tuple[Item, LabelResult]], bool]:
    """Label a batch, preserving order; returns (results, cut_short).

    For fixed-cost labelers the batch is trimmed to the remaining budget up
    front, which keeps truncation deterministic even under parallel labeling.
    """
    items = list(batch)
    if not items:
        return [], False
    cut = False
    if labeler.calls_per_item == 1:
        take = min(len(items), labeler.budget.remaining)
        if take < len(items):
            cut = True
            items = items[:take]
    if not items:
        return [], cut

    results: list[tuple[Item, LabelResult]] = []
    if parallel > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            futures = [pool.submit(labeler.label, item) for item in items]
        for item, future in zip(items, futures):
            try:
                results.append((item, future.result()))
            except (BudgetExhaustedError, LabelFailedError, TransportError):
                cut = True
    else:
        for item in items:
            try:
                results.append((item, labeler.label(item)))
            except (BudgetExhaustedError, LabelFailedError, TransportError):
                cut = True
                break
    return results, cut


def featurize_gold(gold: GoldSet, fcfg: FeaturizerConfig) -> list[tuple[FeatureVector, Label]]:
    return [(featurize_item(item, fcfg), item.gold_label) for item in gold]


def run_lts(
    pool: Corpus,
    gold: GoldSet,
    labeler: Labeler,
    cfg: LtsConfig,
    fcfg: FeaturizerConfig,
) -> LtsResult:
    """Execute the full loop; see the module docstring for the shape.

    The pool is clustered exactly once. Labeled items leave their cluster's
    member list regardless of label, and exhausted clusters are masked from
    arm selection rather than deleted, preserving the arm-index mapping.
    """
    if len(gold) == 0:
        raise ValueError("gold set must be nonempty")
    overlap = pool.ids & gold.ids
    if overlap:
        raise ValueError(f"pool and gold overlap: {sorted(overlap)[:5]!r}")

    t_run = time.perf_counter()
    result = LtsResult(labeled=LabeledSet(), target_weights=ModelWeights.zeros(fcfg.dim),
                       records=[])
    timings = result.timings

    t0 = time.perf_counter()
    vectors = {item.id: featurize_item(item, fcfg) for item in pool}
    assignment = cluster(pool, fcfg, cfg.k, cfg.seed)
    timings.clustering = time.perf_counter() - t0

    by_id = {item.id: item for item in pool}
    members: list[list[Item]] = [
        [by_id[i] for i in ids] for ids in assignment.member_lists
    ]
    gold_pairs = featurize_gold(gold, fcfg)

    bandit_rng = np.random.default_rng([cfg.seed, 1])
    select_rng = np.random.default_rng([cfg.seed, 2])
    bandit = BanditState.fresh(cfg.k)

    best_weights = ModelWeights.zeros(fcfg.dim)
    baseline = cfg.baseline_init
    budget = labeler.budget

    for t in range(1, cfg.max_iterations + 1):
        if budget.remaining <= 0:
            break
        eligible = [i for i in range(cfg.k) if members[i]]
        if not eligible:
            break
        arm = select_arm(bandit, cfg.bandit, bandit_rng, eligible)

        model = None if (t == 1 or cfg.random_select_only) else best_weights
        t0 = time.perf_counter()
        batch = select_samples(
            members[arm], model, cfg.n_per_iter, cfg.resolved_max_pos, select_rng, vectors
        )
        timings.inference += time.perf_counter() - t0

        t0 = time.perf_counter()
        labeled_batch, cut = _label_batch(batch, labeler, cfg.parallel_labels)
        timings.labeling += time.perf_counter() - t0
        if cut:
            result.truncated = True
        if not labeled_batch:
            break

        labeled_ids = {item.id for item, _ in labeled_batch}
        members[arm] = [item for item in members[arm] if item.id not in labeled_ids]
        for item, res in labeled_batch:
            result.labeled.add(item, res.label, labeler.name, t)

        if cfg.replay_all:
            train_pairs = [(vectors[e.item.id], e.label) for e in result.labeled.entries]
        else:
            train_pairs = [(vectors[item.id], res.label) for item, res in labeled_batch]

        t0 = time.perf_counter()
        new_weights = train(best_weights, train_pairs, cfg.train, gold_pairs)
        timings.training += time.perf_counter() - t0

        f1_after = evaluate(new_weights, gold_pairs).f1_pos
        f1_before = baseline
        won = f1_after > baseline
        if won:
            best_weights = new_weights
            baseline = f1_after
        update(bandit, arm, won, cfg.bandit)

        result.records.append(IterationRecord(
            t=t,
            cluster=arm,
            n_labeled=len(labeled_batch),
            n_pseudo_pos=sum(1 for _, r in labeled_batch if r.label == Label.RELEVANT),
            f1_before=f1_before,
            f1_after=f1_after,
            reward=int(won),
            baseline_after=baseline,
            reverted=(not won) and t > 1,
            cumulative_calls=budget.spent_calls,
            cumulative_cost=budget.total_cost,
        ))

        if result.truncated:
            break
        if cfg.target_f1 is not None and baseline >= cfg.target_f1:
            break

    if result.labeled.entries:
        all_pairs = [(vectors[e.item.id], e.label) for e in result.labeled.entries]
        t0 = time.perf_counter()
        _, result.target_weights = grid_search(
            ModelWeights.zeros(fcfg.dim), all_pairs, cfg.grid, gold_pairs, cfg.train
        )
        timings.training += time.perf_counter() - t0
    else:
        result.no_data = True

    timings.total = time.perf_counter() - t_run
    return result


def run_baseline(
    pool: Corpus,
    gold: GoldSet,
    labeler: Labeler,
    strategy: str,
    m: int,
    cfg: LtsConfig,
    fcfg: FeaturizerConfig,
    rules: KeywordRules | None = None,
) -> BaselineResult:
    """One-shot baseline: draw m items by the strategy, label them all, and
    train the target classifier on the result."""
    if len(gold) == 0:
        raise ValueError("gold set must be nonempty")
    if strategy == "random":
        drawn = random_sample(pool, m, cfg.seed)
    elif strategy == "kbs":
        if rules is None:
            raise ValueError("kbs strategy needs keyword rules")
        drawn = kbs_sample(kbs_candidates(pool, rules), pool, m, cfg.seed)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    t_run = time.perf_counter()
    result = BaselineResult(labeled=LabeledSet(), target_weights=ModelWeights.zeros(fcfg.dim),
                            metrics=None)
    timings = result.timings

    t0 = time.perf_counter()
    labeled_batch, cut = _label_batch(drawn, labeler, cfg.parallel_labels)
    timings.labeling = time.perf_counter() - t0
    result.truncated = cut
    for item, res in labeled_batch:
        result.labeled.add(item, res.label, labeler.name, 0)

    gold_pairs = featurize_gold(gold, fcfg)
    if result.labeled.entries:
        vectors = {item.id: featurize_item(item, fcfg) for item, _ in labeled_batch}
        pairs = [(vectors[e.item.id], e.label) for e in result.labeled.entries]
        t0 = time.perf_counter()
        _, result.target_weights = grid_search(
            ModelWeights.zeros(fcfg.dim), pairs, cfg.grid, gold_pairs, cfg.train
        )
        timings.training = time.perf_counter() - t0
    else:
        result.no_data = True
    result.metrics = evaluate(result.target_weights, gold_pairs)
    timings.total = time.perf_counter() - t_run
    return result
