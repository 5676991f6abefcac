"""Tree-distance matrices, inverse-distance strengths and distance corruption.

A distance matrix D holds shortest directed path lengths over the subword
edge set, with 0 on the diagonal and 0 for unreachable pairs. Its
row-normalized inverse form S gives syntactically closer tokens larger
aggregation weights.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

# Sentinel for a corrupted (hidden) distance entry; outside the valid range.
DIST_MASK = -1


def compute_distances(edges: list[tuple[int, int]], n: int,
                      mode: str = "directed") -> np.ndarray:
    """All-pairs shortest path lengths by breadth-first search from each node.

    Edge endpoints are 0-based and must lie in [0, n). In undirected mode the
    edge set is symmetrized first. Unreachable pairs and the diagonal are 0.
    """
    if mode not in ("directed", "undirected"):
        raise ValueError(f"unknown mode {mode!r}")
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        if not (0 <= a < n and 0 <= b < n):
            raise ValueError(f"edge ({a},{b}) out of range for n={n}")
        adj[a].append(b)
        if mode == "undirected":
            adj[b].append(a)
    dist = np.zeros((n, n), dtype=np.int64)
    for src in range(n):
        seen = [False] * n
        seen[src] = True
        queue = deque([(src, 0)])
        while queue:
            node, d = queue.popleft()
            for nxt in adj[node]:
                if not seen[nxt]:
                    seen[nxt] = True
                    dist[src, nxt] = d + 1
                    queue.append((nxt, d + 1))
    return dist


def normalize(dist: np.ndarray) -> np.ndarray:
    """Row-normalized inverse distances: s[i,j] = (1/d[i,j]) / sum_z 1/d[i,z].

    The sum runs over the nonzero entries of row i; all-zero rows stay zero.
    """
    d = np.asarray(dist)
    if np.any(d < 0):
        raise ValueError("distance matrix has negative entries; resolve the mask sentinel first")
    with np.errstate(divide="ignore"):
        inv = np.where(d > 0, 1.0 / d, 0.0)
    row_sum = inv.sum(axis=1, keepdims=True)
    return np.divide(inv, row_sum, out=np.zeros_like(inv), where=row_sum > 0)


def bucketize(distance: int, n_classes: int) -> int:
    """Class id for a positive distance: exact classes 1..K-1, overflow >= K."""
    if distance < 1:
        raise ValueError(f"distance must be >= 1, got {distance}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    return min(distance, n_classes) - 1


@dataclass(frozen=True)
class DpCorruption:
    """Distance-prediction corruption: selected cells, corrupted matrix, targets."""

    positions: np.ndarray  # (P, 2) int, row/col of each selected nonzero cell
    corrupted: np.ndarray  # (n, n) int, DIST_MASK where hidden
    targets: np.ndarray    # (P,) int class ids from the original distances


def corrupt_for_dp(dist: np.ndarray, rate: float, rng: np.random.Generator,
                   n_classes: int = 16) -> DpCorruption:
    """Select nonzero cells at `rate`; hide 80%, randomize 10%, keep 10%.

    Hidden cells are set to DIST_MASK; randomized cells get a uniform value
    in [1, n_classes - 1]. Targets are the original bucketized classes.
    """
    if not 0 < rate < 1:
        raise ValueError(f"rate must be in (0, 1), got {rate}")
    dist = np.asarray(dist)
    rows, cols = np.nonzero(dist)
    corrupted = dist.copy()
    if rows.size == 0:
        empty = np.zeros((0,), dtype=np.int64)
        return DpCorruption(positions=np.zeros((0, 2), dtype=np.int64),
                            corrupted=corrupted, targets=empty)
    selected = rng.random(rows.size) < rate
    rows, cols = rows[selected], cols[selected]
    action = rng.random(rows.size)
    hide = action < 0.8
    randomize = (action >= 0.8) & (action < 0.9)
    corrupted[rows[hide], cols[hide]] = DIST_MASK
    corrupted[rows[randomize], cols[randomize]] = rng.integers(
        1, n_classes, size=int(randomize.sum()))
    targets = np.minimum(dist[rows, cols], n_classes) - 1
    return DpCorruption(positions=np.stack([rows, cols], axis=1),
                        corrupted=corrupted, targets=targets)


def corrupted_strength(corrupted: np.ndarray, policy: str = "as_distance_one") -> np.ndarray:
    """Strength matrix for a corrupted distance matrix.

    as_distance_one: hidden cells act like distance 1 (strongest weight), so
    masked pairs stay visible to the attention pathway, mirroring how the
    MASK token remains in a corrupted token sequence. drop: hidden cells are
    removed (treated as 0).
    """
    if policy == "as_distance_one":
        resolved = np.where(corrupted == DIST_MASK, 1, corrupted)
    elif policy == "drop":
        resolved = np.where(corrupted == DIST_MASK, 0, corrupted)
    else:
        raise ValueError(f"unknown dp mask policy {policy!r}")
    return normalize(resolved)
