"""Shared test oracles: flood fill, brute-force assignment, random graphs."""
from __future__ import annotations

from itertools import permutations

import numpy as np

from uniap import FeatureMap, TokenMask, l2_normalize_rows


def random_feature_map(rng, height, width, dim) -> FeatureMap:
    data = rng.standard_normal((height * width, dim)).astype(np.float32)
    return l2_normalize_rows(FeatureMap(height, width, dim, data))


def flood_fill_connected(mask: TokenMask, height: int, width: int) -> bool:
    """True iff the set bits form a single 4-connected region (or are empty)."""
    grid = mask.bits.reshape(height, width)
    seeds = np.argwhere(grid)
    if seeds.size == 0:
        return True
    seen = np.zeros_like(grid, dtype=bool)
    stack = [tuple(seeds[0])]
    seen[tuple(seeds[0])] = True
    count = 0
    while stack:
        r, c = stack.pop()
        count += 1
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and grid[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                stack.append((nr, nc))
    return count == mask.area


def brute_force_components(num_nodes: int, edges) -> list[int]:
    """Reference partition by repeated set merging; labels = min member."""
    groups = {i: {i} for i in range(num_nodes)}
    owner = list(range(num_nodes))
    for i, j in edges:
        a, b = owner[int(i)], owner[int(j)]
        if a == b:
            continue
        keep, drop = (a, b) if a < b else (b, a)
        for x in groups[drop]:
            owner[x] = keep
        groups[keep] |= groups.pop(drop)
    roots = sorted(set(owner))
    renumber = {r: k for k, r in enumerate(roots)}
    return [renumber[owner[x]] for x in range(num_nodes)]


def brute_force_max_matching(scores: np.ndarray) -> float:
    """Exact maximum total over all min(rows, cols)-sized matchings."""
    import math

    rows, cols = scores.shape
    if rows <= cols:
        best = -np.inf
        for perm in permutations(range(cols), rows):
            total = math.fsum(scores[s, t] for s, t in enumerate(perm))
            best = max(best, total)
        return best
    best = -np.inf
    for perm in permutations(range(rows), cols):
        total = math.fsum(scores[s, t] for t, s in enumerate(perm))
        best = max(best, total)
    return best


def random_edges(rng, num_nodes: int, density: float) -> np.ndarray:
    if num_nodes < 2:
        return np.empty((0, 2), dtype=np.int64)
    i, j = np.triu_indices(num_nodes, k=1)
    keep = rng.random(i.size) < density
    return np.stack([i[keep], j[keep]], axis=1).astype(np.int64)
