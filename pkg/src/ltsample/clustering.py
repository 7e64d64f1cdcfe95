"""One-shot k-means partition of the unlabeled pool.

Clustering runs exactly once per run, over the L2-normalized hashed text
features. k-means++ seeding plus Lloyd iterations, all driven by a single
integer seed so the assignment is bit-reproducible. Empty clusters are
reseeded to the point farthest from its own centroid, so the returned
assignment never contains an empty cluster.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .dataset import Corpus
from .features import FeaturizerConfig, featurize_item

_MOVEMENT_TOL = 1e-6
_MAX_ITER = 100


@dataclass(frozen=True)
class ClusterAssignment:
    """Partition of the pool: item id -> cluster index, plus centroids."""

    k: int
    assignment: dict[str, int]
    centroids: np.ndarray
    member_lists: tuple[tuple[str, ...], ...]

    def export(self, path: str | Path) -> None:
        """Two-column audit file: id, cluster index."""
        with open(path, "w", encoding="utf-8") as fh:
            for item_id, idx in self.assignment.items():
                fh.write(f"{item_id},{idx}\n")


def build_matrix(corpus: Corpus, cfg: FeaturizerConfig) -> sparse.csr_matrix:
    """Stack featurized items into one CSR matrix, row order = corpus order."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for item in corpus:
        vec = featurize_item(item, cfg)
        for idx, weight in vec.entries.items():
            indices.append(idx)
            data.append(weight)
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(corpus), cfg.dim),
    )


def _sq_dists(x: sparse.csr_matrix, sq_norms: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ||x - c||^2 = ||x||^2 - 2 x.c + ||c||^2, clipped against tiny negatives
    cross = x @ centroids.T
    c_sq = np.einsum("ij,ij->i", centroids, centroids)
    d2 = sq_norms[:, None] - 2.0 * cross + c_sq[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(
    x: sparse.csr_matrix, sq_norms: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = x.shape[0]
    centroids = np.zeros((k, x.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = x[first].toarray().ravel()
    d2 = _sq_dists(x, sq_norms, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            probs = d2 / total
            pick = int(rng.choice(n, p=probs))
        else:
            # all remaining distances zero (duplicate points): fall back to uniform
            pick = int(rng.integers(n))
        centroids[j] = x[pick].toarray().ravel()
        d2 = np.minimum(d2, _sq_dists(x, sq_norms, centroids[j : j + 1]).ravel())
    return centroids


def _fill_empty(
    labels: np.ndarray,
    centroids: np.ndarray,
    x: sparse.csr_matrix,
    sq_norms: np.ndarray,
    k: int,
) -> bool:
    """Reseed each empty cluster to the point farthest from its own centroid.

    The stolen point is explicitly relabeled, and only points from clusters of
    size >= 2 are taken, so filling one cluster never empties another. Returns
    True when anything changed.
    """
    sizes = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(sizes == 0)
    if empty.size == 0:
        return False
    d2 = _sq_dists(x, sq_norms, centroids)
    own = d2[np.arange(len(labels)), labels].copy()
    for j in empty:
        donors = np.flatnonzero(sizes[labels] >= 2)
        if donors.size == 0:
            break
        steal = donors[int(np.argmax(own[donors]))]
        sizes[labels[steal]] -= 1
        labels[steal] = j
        sizes[j] = 1
        centroids[j] = x[steal].toarray().ravel()
        own[steal] = 0.0
    return True


def cluster(pool: Corpus, cfg: FeaturizerConfig, k: int, seed: int) -> ClusterAssignment:
    """k-means over featurized pool items, deterministic given the seed."""
    n = len(pool)
    if n == 0:
        raise ValueError("pool is empty")
    if k < 1:
        raise ValueError(f"cluster count must be >= 1, got {k}")
    if k > n:
        raise ValueError(f"cluster count {k} exceeds pool size {n}")

    x = build_matrix(pool, cfg)
    sq_norms = np.asarray(x.multiply(x).sum(axis=1)).ravel()
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(x, sq_norms, k, rng)

    for _ in range(_MAX_ITER):
        labels = np.argmin(_sq_dists(x, sq_norms, centroids), axis=1)
        _fill_empty(labels, centroids, x, sq_norms, k)
        moved = centroids.copy()
        for j in range(k):
            members = np.flatnonzero(labels == j)
            if members.size:
                centroids[j] = np.asarray(x[members].mean(axis=0)).ravel()
        movement = float(np.sqrt(((centroids - moved) ** 2).sum(axis=1)).sum())
        if movement < _MOVEMENT_TOL:
            break

    # Final assignment against the converged centroids; repeat the empty-fix
    # until stable so every returned cluster is nonempty and every point sits
    # nearest its own centroid (stolen points sit exactly on theirs).
    for _ in range(k + 1):
        labels = np.argmin(_sq_dists(x, sq_norms, centroids), axis=1)
        if not _fill_empty(labels, centroids, x, sq_norms, k):
            break

    ids = [item.id for item in pool]
    assignment = {item_id: int(label) for item_id, label in zip(ids, labels)}
    members: list[list[str]] = [[] for _ in range(k)]
    for item_id, label in zip(ids, labels):
        members[label].append(item_id)
    return ClusterAssignment(
        k=k,
        assignment=assignment,
        centroids=centroids,
        member_lists=tuple(tuple(m) for m in members),
    )
