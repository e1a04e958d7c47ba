"""Connected-component labeling over marked undirected edges.

Two routes: a data-parallel min-label propagation scheme, and a sequential
union-find used both as the test oracle and as the direct path for small
graphs where parallel overhead is not worth it. Both number components by
their smallest member index, ascending, so outputs are interchangeable.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import IndexOutOfRange
from .graph import Assignment

# Graphs below this size take the sequential path regardless of workers.
PARALLEL_NODE_THRESHOLD = 1024
_EDGE_CHUNK = 65536  # fixed; propagation results must not depend on workers


def _check_edges(num_nodes: int, edges: np.ndarray) -> np.ndarray:
    edges = np.ascontiguousarray(edges, dtype=np.int64).reshape(-1, 2)
    if num_nodes < 1:
        raise IndexOutOfRange("need at least one node")
    if edges.size:
        if edges.min() < 0 or edges.max() >= num_nodes:
            raise IndexOutOfRange(
                f"edge endpoint outside [0, {num_nodes})"
            )
        if (edges[:, 0] == edges[:, 1]).any():
            raise IndexOutOfRange("self-loop edges are not allowed")
    return edges


def _normalize_labels(roots: np.ndarray) -> Assignment:
    """Renumber component roots to 0..k-1 by smallest member index."""
    uniq, amap = np.unique(roots, return_inverse=True)
    return Assignment(map=amap.astype(np.int64), num_supernodes=int(uniq.size))


def union_find_oracle(num_nodes: int, marked_edges) -> Assignment:
    """Sequential union-find with path compression; the reference partition."""
    edges = _check_edges(num_nodes, np.asarray(marked_edges, dtype=np.int64))
    parent = list(range(num_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            # union by smaller root keeps the min-index numbering exact
            if ri < rj:
                parent[rj] = ri
            else:
                parent[ri] = rj
    roots = np.fromiter((find(x) for x in range(num_nodes)), dtype=np.int64)
    return _normalize_labels(roots)


def _propagate_labels(num_nodes: int, edges: np.ndarray, workers: int) -> np.ndarray:
    """Min-label propagation with pointer jumping until stable.

    Each round every edge proposes the smaller endpoint label to both ends;
    min-combining makes the result independent of edge order and of how the
    edge list is chunked across workers.
    """
    labels = np.arange(num_nodes, dtype=np.int64)
    if edges.size == 0:
        return labels
    chunks = [edges[s : s + _EDGE_CHUNK] for s in range(0, edges.shape[0], _EDGE_CHUNK)]

    def propose(chunk: np.ndarray, current: np.ndarray) -> np.ndarray:
        li = current[chunk[:, 0]]
        lj = current[chunk[:, 1]]
        m = np.minimum(li, lj)
        out = current.copy()
        np.minimum.at(out, chunk[:, 0], m)
        np.minimum.at(out, chunk[:, 1], m)
        return out

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 and len(chunks) > 1 else None
    try:
        while True:
            if pool is None:
                proposals = [propose(c, labels) for c in chunks]
            else:
                proposals = list(pool.map(lambda c: propose(c, labels), chunks))
            new = proposals[0]
            for p in proposals[1:]:
                np.minimum(new, p, out=new)
            # pointer jumping: labels chase their own labels to the component min
            while True:
                jumped = new[new]
                if np.array_equal(jumped, new):
                    break
                new = jumped
            if np.array_equal(new, labels):
                return labels
            labels = new
    finally:
        if pool is not None:
            pool.shutdown()


def connected_components(
    num_nodes: int,
    marked_edges,
    workers: int = 1,
    min_parallel_nodes: int = PARALLEL_NODE_THRESHOLD,
) -> Assignment:
    """Partition nodes into components of the marked-edge subgraph.

    Components are numbered by smallest member index, ascending; isolated
    nodes become singleton supernodes. The result does not depend on edge
    order or on the worker count.
    """
    edges = _check_edges(num_nodes, np.asarray(marked_edges, dtype=np.int64))
    if num_nodes < min_parallel_nodes:
        return union_find_oracle(num_nodes, edges)
    roots = _propagate_labels(num_nodes, edges, max(1, int(workers)))
    return _normalize_labels(roots)
