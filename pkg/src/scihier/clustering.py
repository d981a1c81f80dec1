"""Deterministic k-means (Lloyd + k-means++ with restarts) and proportional
sub-cluster budget allocation."""
from __future__ import annotations

from dataclasses import dataclass
from math import floor
from typing import Sequence

import numpy as np


class ClusteringError(Exception):
    pass


class AllocationError(ClusteringError):
    pass


@dataclass(frozen=True)
class ClusteringResult:
    assignments: np.ndarray  # item index -> cluster index, shape (n,)
    centroids: np.ndarray    # shape (k, d)
    inertia: float
    n_iter: int
    restart: int


def _pairwise_sq(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * (x @ c.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: sample several D^2-weighted candidates per step and
    keep the one that lowers the potential most."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    closest = ((x - x[chosen[0]]) ** 2).sum(1)
    trials = 2 + int(np.log(k)) if k > 1 else 1
    for _ in range(1, k):
        total = float(closest.sum())
        if total <= 0.0:
            # all remaining mass sits on already-chosen points (duplicates);
            # fall back to the lowest-index unused point
            used = set(chosen)
            idx = next(i for i in range(n) if i not in used)
        else:
            candidates = rng.choice(n, size=trials, p=closest / total)
            idx, best_potential = -1, np.inf
            for candidate in candidates:
                potential = float(np.minimum(
                    closest, ((x - x[candidate]) ** 2).sum(1)).sum())
                if potential < best_potential - 1e-15:
                    idx, best_potential = int(candidate), potential
        chosen.append(idx)
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(1))
    return x[chosen].copy()


def _repair_empty(x: np.ndarray, d2: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point farthest from its assigned centroid.

    Only points from clusters with >= 2 members are taken (ascending empty
    index, lowest point index on distance ties), so no donor empties out.
    """
    counts = np.bincount(labels, minlength=k)
    for empty in np.flatnonzero(counts == 0):
        dist_to_own = d2[np.arange(len(labels)), labels].copy()
        dist_to_own[counts[labels] < 2] = -np.inf
        farthest = int(np.argmax(dist_to_own))
        counts[labels[farthest]] -= 1
        labels[farthest] = empty
        counts[empty] += 1
    return labels


def _lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int) -> tuple[np.ndarray, np.ndarray, float, int]:
    n, _ = x.shape
    k = centroids.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    prev_inertia = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        d2 = _pairwise_sq(x, centroids)
        new_labels = d2.argmin(1)  # argmin takes the lowest index on ties
        new_labels = _repair_empty(x, d2, new_labels, k)
        for j in range(k):
            members = new_labels == j
            centroids[j] = x[members].mean(0)
        inertia = float(_pairwise_sq(x, centroids)[np.arange(n), new_labels].sum())
        assert inertia <= prev_inertia + 1e-9 * max(1.0, prev_inertia), \
            f"Lloyd inertia increased: {prev_inertia} -> {inertia}"
        if np.array_equal(new_labels, labels):
            break
        labels, prev_inertia = new_labels, inertia
    final = float(_pairwise_sq(x, centroids)[np.arange(n), labels].sum())
    return labels, centroids, final, iteration


def kmeans(points: Sequence[Sequence[float]] | np.ndarray, k: int, seed: int = 0,
           restarts: int = 8, max_iter: int = 100) -> ClusteringResult:
    """Best-of-restarts Lloyd iterations from k-means++ seeding.

    Deterministic for identical (points, k, seed, restarts): restart r draws
    from an RNG keyed by (seed, r), distance ties resolve to the lowest
    cluster index, and the winning restart is the lowest inertia with ties
    going to the lowest restart index.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise ClusteringError(f"points must be a 2-d array, got shape {x.shape}")
    n, d = x.shape
    if d < 1:
        raise ClusteringError("zero-dimensional input")
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} out of range for {n} points")
    if not np.all(np.isfinite(x)):
        raise ClusteringError("points contain non-finite values")
    if restarts < 1 or max_iter < 1:
        raise ClusteringError("restarts and max_iter must be >= 1")

    best: ClusteringResult | None = None
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        centroids = _kmeanspp_init(x, k, rng)
        labels, centroids, inertia, n_iter = _lloyd(x, centroids.copy(), max_iter)
        if best is None or inertia < best.inertia - 1e-12:
            best = ClusteringResult(assignments=labels, centroids=centroids,
                                    inertia=inertia, n_iter=n_iter, restart=r)
    return best  # type: ignore[return-value]


def allocate_subclusters(parent_sizes: Sequence[int], total_k: int,
                         caps: Sequence[int] | None = None) -> list[int]:
    """Split a layer budget across parents proportionally to their sizes.

    Largest-remainder rounding with a floor of 1 per parent and an optional
    per-parent cap (a parent of m items cannot host more than m subclusters).
    The result sums to total_k exactly and is deterministic.
    """
    m = len(parent_sizes)
    if m == 0:
        raise AllocationError("no parents to allocate to")
    if any(s < 1 for s in parent_sizes):
        raise AllocationError("all parent sizes must be >= 1")
    if total_k < m:
        raise AllocationError(f"total budget {total_k} is below {m} parents")
    cap_list = list(caps) if caps is not None else [total_k] * m
    if len(cap_list) != m or any(c < 1 for c in cap_list):
        raise AllocationError("caps must be >= 1 per parent")
    if sum(cap_list) < total_k:
        raise AllocationError(f"caps sum to {sum(cap_list)}, below budget {total_k}")

    total = float(sum(parent_sizes))
    quota = [total_k * s / total for s in parent_sizes]
    alloc = [floor(q) for q in quota]
    remainder = total_k - sum(alloc)
    for i in sorted(range(m), key=lambda i: (-(quota[i] - alloc[i]), i))[:remainder]:
        alloc[i] += 1

    alloc = [min(max(a, 1), cap_list[i]) for i, a in enumerate(alloc)]
    while sum(alloc) < total_k:
        # most under-allocated relative to its quota, with headroom
        receivers = [i for i in range(m) if alloc[i] < cap_list[i]]
        i = max(receivers, key=lambda i: (quota[i] - alloc[i], -i))
        alloc[i] += 1
    while sum(alloc) > total_k:
        donors = [i for i in range(m) if alloc[i] > 1]
        i = max(donors, key=lambda i: (alloc[i] - quota[i], i))
        alloc[i] -= 1
    return alloc
