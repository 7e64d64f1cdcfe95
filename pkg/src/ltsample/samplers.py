"""Baseline sampling strategies: uniform random and knowledge-based keywords.

The keyword predicate matches on token boundaries, not raw substrings, so a
rule like "ray" never fires inside "rayon". Multiword rule entries match as
consecutive token sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import Corpus, Item
from .features import tokenize


@dataclass(frozen=True)
class KeywordRules:
    """Animal-name and product-term keyword lists; entries lowercase, trimmed."""

    animal_names: tuple[str, ...]
    product_terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.animal_names or not self.product_terms:
            raise ValueError("both keyword lists must be nonempty")
        for entry in (*self.animal_names, *self.product_terms):
            if not entry or entry != entry.strip().lower():
                raise ValueError(f"keyword entries must be lowercase and trimmed: {entry!r}")


def load_rules(path: str | Path) -> KeywordRules:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return KeywordRules(
        animal_names=tuple(raw["animal_names"]),
        product_terms=tuple(raw["product_terms"]),
    )


def _contains_sequence(tokens: list[str], entry_tokens: list[str]) -> bool:
    span = len(entry_tokens)
    if span == 0 or span > len(tokens):
        return False
    return any(tokens[i : i + span] == entry_tokens for i in range(len(tokens) - span + 1))


def matches_rules(title: str, rules: KeywordRules) -> bool:
    """True iff the title contains at least one animal name AND one product term."""
    tokens = tokenize(title)
    has_animal = any(_contains_sequence(tokens, tokenize(e)) for e in rules.animal_names)
    if not has_animal:
        return False
    return any(_contains_sequence(tokens, tokenize(e)) for e in rules.product_terms)


def random_sample(pool: Corpus, m: int, seed: int) -> list[Item]:
    """Uniform sample of m items without replacement, deterministic given seed."""
    if m > len(pool):
        raise ValueError(f"sample size {m} exceeds pool size {len(pool)}")
    if m < 0:
        raise ValueError("sample size must be nonnegative")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=m, replace=False)
    return [pool.items[i] for i in picks]


def kbs_candidates(pool: Corpus, rules: KeywordRules) -> list[Item]:
    """Order-preserving filter of pool items whose title matches the rules."""
    return [item for item in pool if matches_rules(item.title, rules)]


def kbs_sample(
    candidates: list[Item],
    pool: Corpus,
    m: int,
    seed: int,
    candidate_fraction: float = 0.5,
) -> list[Item]:
    """Mix keyword candidates with random non-candidates.

    Targets ceil(m * candidate_fraction) candidates; if fewer exist, all of
    them are taken and the remainder is drawn uniformly from non-candidates
    (and vice versa when non-candidates run short).
    """
    if m > len(pool):
        raise ValueError(f"sample size {m} exceeds pool size {len(pool)}")
    if not (0.0 <= candidate_fraction <= 1.0):
        raise ValueError("candidate_fraction must lie in [0, 1]")
    candidate_ids = {item.id for item in candidates}
    others = [item for item in pool if item.id not in candidate_ids]

    target = math.ceil(m * candidate_fraction)
    n_cand = min(target, len(candidates))
    n_other = m - n_cand
    if n_other > len(others):
        n_cand += n_other - len(others)
        n_other = len(others)

    rng = np.random.default_rng(seed)
    picked: list[Item] = []
    if n_cand:
        picked.extend(candidates[i] for i in rng.choice(len(candidates), size=n_cand, replace=False))
    if n_other:
        picked.extend(others[i] for i in rng.choice(len(others), size=n_other, replace=False))
    return picked
