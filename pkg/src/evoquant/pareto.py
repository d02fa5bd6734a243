"""Multi-objective primitives.

Everything in this module works on plain numpy arrays in *minimization*
orientation: an objective vector is a 1-d float array, a population is an
``(n, k)`` matrix with one row per candidate. The building blocks are Pareto
dominance, fast non-dominated sorting, simplex-lattice weight vectors, the
R2 indicator (weighted-Tchebycheff scalarization averaged over a weight
set), and reference-point niching selection in the NSGA-III style.

All functions are pure; the selection routines take an explicit
``numpy.random.Generator`` so results are reproducible by seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrontPartition",
    "dominates",
    "non_dominated_sort",
    "uniform_weight_vectors",
    "r2_indicator",
    "nsga3_order",
    "nsga3_select",
]

# Divisor floor used when an objective collapses to a single value.
RANGE_EPS = 1e-12


def _as_objective_matrix(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2:
        raise ValueError(f"expected an (n, k) matrix of objective vectors, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("objective vectors must be finite")
    return pts


def dominates(a, b) -> bool:
    """Return True iff ``a`` Pareto-dominates ``b`` (minimization).

    ``a`` dominates ``b`` when it is no worse in every coordinate and
    strictly better in at least one. Equal vectors never dominate.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


@dataclass(frozen=True)
class FrontPartition:
    """Result of non-dominated sorting.

    ``fronts`` lists index sets from best (front 0) to worst; ``rank`` maps
    every input index to its front number.
    """

    fronts: tuple[tuple[int, ...], ...]
    rank: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rank", np.asarray(self.rank, dtype=int))


def non_dominated_sort(points) -> FrontPartition:
    """Partition points into successive non-dominated fronts.

    Uses the classic domination-count bookkeeping: front 0 holds every point
    no other point dominates, front 1 the points dominated only by front 0,
    and so on. Deterministic for a given input order (indices ascend within
    each front).

    Args:
        points: (n, k) matrix of objective vectors, n >= 1.

    Returns:
        FrontPartition whose fronts cover all indices exactly once.
    """
    pts = _as_objective_matrix(points)
    n = pts.shape[0]
    if n == 0:
        raise ValueError("cannot partition an empty set of points")

    # dom[i, j] == True iff point i dominates point j.
    le = np.all(pts[:, None, :] <= pts[None, :, :], axis=2)
    lt = np.any(pts[:, None, :] < pts[None, :, :], axis=2)
    dom = le & lt

    counts = dom.sum(axis=0)
    rank = np.full(n, -1, dtype=int)
    fronts: list[tuple[int, ...]] = []
    assigned = np.zeros(n, dtype=bool)
    level = 0
    current = np.flatnonzero(counts == 0)
    while current.size:
        rank[current] = level
        fronts.append(tuple(int(i) for i in current))
        assigned[current] = True
        counts = counts - dom[current].sum(axis=0)
        current = np.flatnonzero((counts == 0) & ~assigned)
        level += 1
    return FrontPartition(fronts=tuple(fronts), rank=rank)


def _compositions(total: int, parts: int):
    """Yield all non-negative integer tuples of length ``parts`` summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def uniform_weight_vectors(k: int, target_count: int) -> np.ndarray:
    """Generate simplex-lattice weight vectors covering the k-simplex uniformly.

    Picks the smallest lattice division count H such that the lattice size
    C(H + k - 1, k - 1) reaches ``target_count`` and returns the full
    lattice, so the result may hold slightly more vectors than requested.
    Every vector is non-negative and sums to 1.

    Args:
        k: objective-space dimension, >= 2.
        target_count: minimum number of vectors, >= k.

    Returns:
        (m, k) matrix with m = C(H + k - 1, k - 1) >= target_count.
    """
    if k < 2:
        raise ValueError("weight vectors need k >= 2")
    if target_count < k:
        raise ValueError("target_count must be at least k")
    h = 1
    while math.comb(h + k - 1, k - 1) < target_count:
        h += 1
    lattice = np.array(list(_compositions(h, k)), dtype=float) / h
    return lattice


def r2_indicator(front, weights, utopia=None) -> float:
    """R2 quality of a point set relative to a utopian point.

    For each weight vector the indicator takes the weighted Chebyshev
    distance from the utopian point to the closest member of the set, then
    averages across the weight set. Lower is better; 0 means the utopian
    point itself belongs to the set.

    Args:
        front: (n, k) matrix of objective vectors, n >= 1.
        weights: (m, k) matrix of non-negative weight vectors.
        utopia: optional (k,) reference; defaults to the origin.

    Returns:
        Non-negative scalar.
    """
    pts = _as_objective_matrix(front)
    if pts.shape[0] == 0:
        raise ValueError("R2 is undefined for an empty point set")
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[1] != pts.shape[1]:
        raise ValueError(f"weight matrix shape {w.shape} incompatible with points {pts.shape}")
    z = np.zeros(pts.shape[1]) if utopia is None else np.asarray(utopia, dtype=float)
    diff = np.abs(pts - z)  # (n, k)
    chebyshev = np.max(w[:, None, :] * diff[None, :, :], axis=2)  # (m, n)
    return float(np.mean(np.min(chebyshev, axis=1)))


def _associate(normalized: np.ndarray, refs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Assign each point to the reference direction with the smallest
    perpendicular distance. Returns (direction index, distance) per point."""
    norms = np.linalg.norm(refs, axis=1)
    unit = refs / np.maximum(norms, RANGE_EPS)[:, None]
    proj = normalized @ unit.T  # (n, m)
    sq = np.sum(normalized**2, axis=1, keepdims=True) - proj**2
    dist = np.sqrt(np.maximum(sq, 0.0))
    assoc = np.argmin(dist, axis=1)
    return assoc, dist[np.arange(len(normalized)), assoc]


def nsga3_order(points, refs, rng: np.random.Generator) -> np.ndarray:
    """Produce a full survival ordering of points by rank and niching.

    Points are normalized by translating to the population ideal point and
    scaling each objective by its population range (floored at 1e-12 for
    degenerate coordinates), then associated to the reference direction of
    smallest perpendicular distance. Fronts are emitted in rank order;
    inside a front, members are drained one at a time from the currently
    least-crowded direction (ties between directions broken uniformly at
    random; an empty niche takes its closest member, an occupied niche a
    random one), which is exactly the niching used to fill the boundary
    front in reference-point selection.

    Any prefix of the ordering is therefore a valid niched selection.

    Args:
        points: (n, k) matrix of objective vectors.
        refs: (m, k) reference directions (weight vectors reused as such).
        rng: seeded generator for tie-breaking.

    Returns:
        Permutation of range(n), best survivor first.
    """
    pts = _as_objective_matrix(points)
    refs = np.asarray(refs, dtype=float)
    partition = non_dominated_sort(pts)

    ideal = pts.min(axis=0)
    span = np.maximum(pts.max(axis=0) - ideal, RANGE_EPS)
    normalized = (pts - ideal) / span
    assoc, perp = _associate(normalized, refs)

    niche_count = np.zeros(len(refs), dtype=int)
    order: list[int] = []
    for front in partition.fronts:
        pockets: dict[int, list[int]] = {}
        for i in front:
            pockets.setdefault(int(assoc[i]), []).append(i)
        remaining = len(front)
        while remaining:
            active = sorted(pockets)
            counts = niche_count[active]
            lowest = counts.min()
            ties = [d for d, c in zip(active, counts) if c == lowest]
            direction = ties[rng.integers(len(ties))] if len(ties) > 1 else ties[0]
            members = pockets[direction]
            if niche_count[direction] == 0:
                pick = min(range(len(members)), key=lambda p: (perp[members[p]], members[p]))
            else:
                pick = int(rng.integers(len(members)))
            chosen = members.pop(pick)
            if not members:
                del pockets[direction]
            order.append(chosen)
            niche_count[direction] += 1
            remaining -= 1
    return np.array(order, dtype=int)


def nsga3_select(candidates, target_size: int, refs, rng: np.random.Generator) -> np.ndarray:
    """Select ``target_size`` candidates by rank, niching the boundary front.

    Whole fronts are taken in rank order until the next front would
    overflow; that front is filtered by reference-point niching. The result
    is rank-consistent: no selected point has a worse front index than an
    unselected one.

    Args:
        candidates: (n, k) matrix with n >= target_size.
        target_size: number of survivors, >= 1.
        refs: reference directions.
        rng: seeded generator.

    Returns:
        Array of ``target_size`` selected indices (survival order).
    """
    pts = _as_objective_matrix(candidates)
    if target_size < 1:
        raise ValueError("target_size must be positive")
    if target_size > pts.shape[0]:
        raise ValueError(f"cannot select {target_size} from {pts.shape[0]} candidates")
    return nsga3_order(pts, refs, rng)[:target_size]
