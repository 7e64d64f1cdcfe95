"""Deterministic hashed bag-of-words features for clustering and classification.

Tokens are maximal runs of alphanumeric characters in lowercased text, hashed
with 64-bit FNV-1a and masked to the (power-of-two) feature dimension. Weights
are term frequencies, L2-normalized, so identical text always maps to the
identical vector on any platform.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .dataset import Item

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Maximal runs of alphanumeric characters; underscores split tokens.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

SUPPORTED_HASHES = ("fnv1a64",)


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a over raw bytes."""
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    """Lowercase and split into maximal alphanumeric runs."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class FeaturizerConfig:
    """Featurizer parameters, serialized with every run for reproducibility."""

    dim: int = 2**18
    hash: str = "fnv1a64"
    lowercase: bool = True
    title_only: bool = False

    def __post_init__(self) -> None:
        if self.dim < 2**10 or self.dim & (self.dim - 1):
            raise ValueError(f"dim must be a power of two >= 1024, got {self.dim}")
        if self.hash not in SUPPORTED_HASHES:
            raise ValueError(f"unsupported hash {self.hash!r}")
        if not self.lowercase:
            raise ValueError("lowercasing is fixed on")


@dataclass(frozen=True)
class FeatureVector:
    """Sparse L2-normalized vector: index -> weight, all indices in [0, dim)."""

    entries: dict[int, float]
    dim: int

    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.entries.values()))

    def dot_dense(self, dense: np.ndarray) -> float:
        return float(sum(dense[i] * w for i, w in self.entries.items()))


def featurize(text: str, cfg: FeaturizerConfig) -> FeatureVector:
    """Hashed term-frequency vector, L2-normalized; empty text maps to zero."""
    counts: dict[int, int] = {}
    for token in tokenize(text):
        idx = fnv1a_64(token.encode("utf-8")) & (cfg.dim - 1)
        counts[idx] = counts.get(idx, 0) + 1
    if not counts:
        return FeatureVector(entries={}, dim=cfg.dim)
    norm = math.sqrt(sum(c * c for c in counts.values()))
    return FeatureVector(
        entries={idx: c / norm for idx, c in sorted(counts.items())},
        dim=cfg.dim,
    )


def item_text(item: Item, cfg: FeaturizerConfig) -> str:
    """The text fed to the featurizer: title, plus description unless title_only."""
    if cfg.title_only or not item.description:
        return item.title
    return item.title + " " + item.description


def featurize_item(item: Item, cfg: FeaturizerConfig) -> FeatureVector:
    return featurize(item_text(item, cfg), cfg)


def fuse_mean(a, b) -> np.ndarray:
    """Elementwise mean of two equal-dimension real vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return (a + b) / 2.0
