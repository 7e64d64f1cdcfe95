"""Warm-start logistic regression over hashed feature vectors.

Mini-batch gradient descent with L2 weight decay, early stopping on
positive-class validation F1 (patience-based), exact integer-confusion
metrics, and a small grid search over learning rate and weight decay.
The model deliberately stays linear: warm start and revert semantics are
exact, and training is deterministic given (init, sample order, config).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .dataset import Label
from .features import FeatureVector

# (FeatureVector, Label) pairs; the validation set is the featurized gold set.
SamplePairs = Sequence[tuple[FeatureVector, Label]]


class NonFiniteLossError(ArithmeticError):
    """Loss or weights became non-finite; the learning rate is too large."""


@dataclass(frozen=True)
class ModelWeights:
    w: np.ndarray
    b: float
    version: int = 0

    @classmethod
    def zeros(cls, dim: int) -> ModelWeights:
        return cls(w=np.zeros(dim), b=0.0, version=0)

    @property
    def dim(self) -> int:
        return int(self.w.shape[0])

    def save(self, path: str | Path) -> None:
        """Flat text format: dim/version/bias header, then nonzero entries."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"dim {self.dim}\n")
            fh.write(f"version {self.version}\n")
            fh.write(f"b {float(self.b)!r}\n")
            for idx in np.flatnonzero(self.w):
                fh.write(f"{int(idx)} {float(self.w[idx])!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> ModelWeights:
        with open(path, encoding="utf-8") as fh:
            dim = int(fh.readline().split()[1])
            version = int(fh.readline().split()[1])
            b = float(fh.readline().split()[1])
            w = np.zeros(dim)
            for line in fh:
                idx, value = line.split()
                w[int(idx)] = float(value)
        return cls(w=w, b=b, version=version)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.0
    weight_decay: float = 0.0
    max_epochs: int = 100
    patience: int = 5
    batch: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        if self.max_epochs < 0 or self.patience < 0 or self.batch < 1:
            raise ValueError("invalid epoch/patience/batch settings")


@dataclass(frozen=True)
class Metrics:
    """Per-class precision/recall/F1 plus accuracy, all from integer counts."""

    tp: int
    fp: int
    fn: int
    tn: int
    precision_pos: float
    recall_pos: float
    f1_pos: float
    precision_neg: float
    recall_neg: float
    f1_neg: float
    accuracy: float
    macro_f1: float

    @classmethod
    def from_confusion(cls, tp: int, fp: int, fn: int, tn: int) -> Metrics:
        def prf(p_num: int, p_den: int, r_num: int, r_den: int) -> tuple[float, float, float]:
            precision = p_num / p_den if p_den else 0.0
            recall = r_num / r_den if r_den else 0.0
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            return precision, recall, f1

        p1, r1, f1 = prf(tp, tp + fp, tp, tp + fn)
        p0, r0, f0 = prf(tn, tn + fn, tn, tn + fp)
        total = tp + fp + fn + tn
        return cls(
            tp=tp, fp=fp, fn=fn, tn=tn,
            precision_pos=p1, recall_pos=r1, f1_pos=f1,
            precision_neg=p0, recall_neg=r0, f1_neg=f0,
            accuracy=(tp + tn) / total if total else 0.0,
            macro_f1=(f1 + f0) / 2.0,
        )

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision_pos": self.precision_pos, "recall_pos": self.recall_pos,
            "f1_pos": self.f1_pos, "precision_neg": self.precision_neg,
            "recall_neg": self.recall_neg, "f1_neg": self.f1_neg,
            "accuracy": self.accuracy, "macro_f1": self.macro_f1,
        }


def stack_pairs(pairs: SamplePairs, dim: int) -> tuple[sparse.csr_matrix, np.ndarray]:
    """CSR matrix plus 0/1 label array, row order preserved."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    labels = np.empty(len(pairs))
    for row, (vec, label) in enumerate(pairs):
        if vec.dim != dim:
            raise ValueError(f"feature dimension {vec.dim} != model dimension {dim}")
        for idx, weight in vec.entries.items():
            indices.append(idx)
            data.append(weight)
        indptr.append(len(indices))
        labels[row] = float(label)
    x = sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(pairs), dim),
    )
    return x, labels


def logistic_loss(w: np.ndarray, b: float, x: sparse.csr_matrix, y: np.ndarray,
                  weight_decay: float) -> float:
    """Mean binary cross-entropy plus (weight_decay / 2) * ||w||^2."""
    z = x @ w + b
    # softplus(z) - y*z is BCE with a numerically stable log(1 + e^z)
    bce = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return bce + 0.5 * weight_decay * float(w @ w)


def logistic_grad(w: np.ndarray, b: float, x: sparse.csr_matrix, y: np.ndarray,
                  weight_decay: float) -> tuple[np.ndarray, float]:
    """Analytic gradient of logistic_loss with respect to (w, b)."""
    residual = expit(x @ w + b) - y
    gw = (x.T @ residual) / len(y) + weight_decay * w
    gb = float(np.mean(residual))
    return np.asarray(gw).ravel(), gb


def _f1_pos(scores: np.ndarray, y: np.ndarray) -> float:
    pred = scores >= 0.0  # threshold 0.5 on the probability scale
    actual = y >= 0.5
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def train(
    init: ModelWeights,
    samples: SamplePairs,
    cfg: TrainConfig,
    validation: SamplePairs,
    on_epoch: Callable[[int, np.ndarray, float, float], None] | None = None,
) -> ModelWeights:
    """Warm-start mini-batch gradient descent with patience-based early stop.

    After each epoch the positive-class F1 on the validation set is computed;
    training stops once it has failed to improve for `patience` consecutive
    epochs (or at max_epochs), and the weights of the best epoch are returned.
    The version counter always advances by one, even for max_epochs=0.

    `on_epoch(epoch, weights, bias, val_f1)` observes each post-epoch state,
    which keeps training trajectories testable without exposing internals.
    """
    if not samples:
        raise ValueError("samples must be nonempty")
    x, y = stack_pairs(samples, init.dim)
    xval, yval = stack_pairs(validation, init.dim)

    w = init.w.copy()
    b = init.b
    rng = np.random.default_rng(cfg.seed)

    best_f1 = _f1_pos(xval @ w + b, yval)
    best_w, best_b = w.copy(), b
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(samples), cfg.batch):
            rows = order[start : start + cfg.batch]
            gw, gb = logistic_grad(w, b, x[rows], y[rows], cfg.weight_decay)
            w -= cfg.learning_rate * gw
            b -= cfg.learning_rate * gb
        if not (np.all(np.isfinite(w)) and np.isfinite(b)):
            raise NonFiniteLossError(
                f"weights diverged at epoch {epoch} (learning_rate={cfg.learning_rate})"
            )
        f1 = _f1_pos(xval @ w + b, yval)
        if on_epoch is not None:
            on_epoch(epoch, w, b, f1)
        if f1 > best_f1:
            best_f1 = f1
            best_w, best_b = w.copy(), b
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return ModelWeights(w=best_w, b=best_b, version=init.version + 1)


def predict(weights: ModelWeights, x: FeatureVector) -> float:
    """Probability of the positive class; classification threshold is 0.5."""
    if x.dim != weights.dim:
        raise ValueError(f"feature dimension {x.dim} != model dimension {weights.dim}")
    return float(expit(x.dot_dense(weights.w) + weights.b))


def evaluate(weights: ModelWeights, validation: SamplePairs) -> Metrics:
    """Thresholded predictions against gold labels, reduced to exact metrics."""
    if not validation:
        raise ValueError("validation set must be nonempty")
    x, y = stack_pairs(validation, weights.dim)
    pred = (x @ weights.w + weights.b) >= 0.0
    actual = y >= 0.5
    tp = int(np.sum(pred & actual))
    fp = int(np.sum(pred & ~actual))
    fn = int(np.sum(~pred & actual))
    tn = int(np.sum(~pred & ~actual))
    return Metrics.from_confusion(tp=tp, fp=fp, fn=fn, tn=tn)


@dataclass(frozen=True)
class SearchGrid:
    learning_rates: tuple[float, ...] = (1.0, 0.3)
    weight_decays: tuple[float, ...] = (0.0, 1e-4)

    def __post_init__(self) -> None:
        if not self.learning_rates or not self.weight_decays:
            raise ValueError("grid must be nonempty")


def grid_search(
    init: ModelWeights,
    samples: SamplePairs,
    grid: SearchGrid,
    validation: SamplePairs,
    base: TrainConfig,
) -> tuple[TrainConfig, ModelWeights]:
    """Train one model per (learning_rate, weight_decay) cell from the same
    init and seed; return the cell with the best validation F1.

    Ties break to the smaller learning rate, then the smaller weight decay.
    Cells that diverge are skipped; if every cell fails, the last error
    propagates.
    """
    cells = sorted(itertools.product(grid.learning_rates, grid.weight_decays))
    best: tuple[float, TrainConfig, ModelWeights] | None = None
    last_error: Exception | None = None
    for lr, wd in cells:
        cfg = replace(base, learning_rate=lr, weight_decay=wd)
        try:
            weights = train(init, samples, cfg, validation)
        except NonFiniteLossError as exc:
            last_error = exc
            continue
        f1 = evaluate(weights, validation).f1_pos
        if best is None or f1 > best[0]:
            best = (f1, cfg, weights)
    if best is None:
        raise NonFiniteLossError(f"every grid cell failed: {last_error}")
    return best[1], best[2]
