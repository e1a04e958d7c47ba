"""Coarsening-graph state: token masks, node features, sparse adjacency.

Because the masks of a live graph always partition the token grid, node
membership is stored as one token -> node label array; TokenMask views are
derived from it on demand. Values are treated as immutable after construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyMask, InvalidAssignment
from .tensor import FeatureMap, _read_only


@dataclass
class TokenMask:
    """A fixed-length bitset over the row-major token grid."""

    bits: np.ndarray  # (H*W,) bool

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 1:
            raise DimensionMismatch("mask bits must be one-dimensional")
        self.bits = _read_only(bits)
        self._area = int(bits.sum())

    @classmethod
    def from_indices(cls, length: int, indices) -> "TokenMask":
        bits = np.zeros(length, dtype=bool)
        bits[np.asarray(list(indices), dtype=np.int64)] = True
        return cls(bits)

    @property
    def area(self) -> int:
        return self._area

    @property
    def length(self) -> int:
        return self.bits.shape[0]

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenMask) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())


@dataclass
class Assignment:
    """Node -> supernode map; every supernode index must be hit at least once."""

    map: np.ndarray  # (num_nodes,) int64
    num_supernodes: int

    def __post_init__(self):
        amap = np.ascontiguousarray(self.map, dtype=np.int64)
        if amap.ndim != 1:
            raise InvalidAssignment("assignment map must be one-dimensional")
        if self.num_supernodes < 1 or amap.size < 1:
            raise InvalidAssignment("assignment needs at least one node and supernode")
        if amap.min() < 0 or amap.max() >= self.num_supernodes:
            raise InvalidAssignment(
                f"map values must lie in [0, {self.num_supernodes})"
            )
        hit = np.zeros(self.num_supernodes, dtype=bool)
        hit[amap] = True
        if not hit.all():
            missing = int(np.flatnonzero(~hit)[0])
            raise InvalidAssignment(f"supernode {missing} has no members")
        self.map = _read_only(amap)


@dataclass
class Graph:
    """Graph state at one coarsening step.

    features is None transiently between apply_assignment and the feature
    update; a finished graph always carries unit-norm rows.
    """

    level: int
    labels: np.ndarray  # (token_count,) int64, token -> node index
    edges: np.ndarray  # (m, 2) int64, i < j per row, lexicographically sorted
    features: np.ndarray | None = None  # (num_nodes, d) float32, unit rows
    areas: np.ndarray = field(default=None)  # (num_nodes,) int64, cached

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size < 1:
            raise DimensionMismatch("labels must be a non-empty vector")
        n = int(labels.max()) + 1
        if labels.min() < 0:
            raise DimensionMismatch("labels must be non-negative")
        areas = np.bincount(labels, minlength=n)
        if (areas == 0).any():
            raise EmptyMask("every node must own at least one token")
        self.labels = _read_only(labels)
        self.areas = _read_only(areas.astype(np.int64))
        edges = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise DimensionMismatch("edge endpoints outside node range")
            if (edges[:, 0] >= edges[:, 1]).any():
                raise DimensionMismatch("edges must satisfy i < j with no self-loops")
            key = edges[:, 0] * n + edges[:, 1]
            if (np.diff(key) <= 0).any():
                raise DimensionMismatch("edges must be sorted and deduplicated")
        self.edges = _read_only(edges)
        if self.features is not None:
            feats = np.ascontiguousarray(self.features, dtype=np.float32)
            if feats.shape[0] != n:
                raise DimensionMismatch(
                    f"feature rows {feats.shape[0]} != node count {n}"
                )
            self.features = _read_only(feats)

    @property
    def num_nodes(self) -> int:
        return self.areas.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def token_count(self) -> int:
        return self.labels.shape[0]

    @property
    def masks(self) -> tuple[TokenMask, ...]:
        """Per-node token masks; pairwise disjoint and covering by construction."""
        return tuple(TokenMask(self.labels == k) for k in range(self.num_nodes))

    def mask_of(self, node: int) -> TokenMask:
        return TokenMask(self.labels == node)


def _sorted_unique_edges(pairs: np.ndarray) -> np.ndarray:
    """Canonical edge list: i < j, deduplicated, lexicographically sorted."""
    if pairs.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    keep = lo != hi
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    key = np.unique(lo * (hi.max() + 1) + hi)
    out = np.empty((key.size, 2), dtype=np.int64)
    out[:, 0] = key // (hi.max() + 1)
    out[:, 1] = key % (hi.max() + 1)
    return out


def grid_edges(height: int, width: int) -> np.ndarray:
    """4-neighborhood edge list over a row-major H x W grid."""
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel(), ], axis=1)
    return _sorted_unique_edges(np.concatenate([horiz, vert], axis=0))


def init_grid_graph(fm: FeatureMap) -> Graph:
    """One node per token with singleton masks and 4-neighborhood edges."""
    if not fm.normalized:
        raise ValueError("init_grid_graph requires a normalized feature map")
    labels = np.arange(fm.token_count, dtype=np.int64)
    return Graph(
        level=0,
        labels=labels,
        edges=grid_edges(fm.height, fm.width),
        features=fm.data.copy(),
    )


def make_fully_connected(g: Graph) -> Graph:
    """Same nodes, masks and features, with all node pairs as edges."""
    n = g.num_nodes
    if n < 1:
        raise DimensionMismatch("graph must have at least one node")
    i, j = np.triu_indices(n, k=1)
    edges = np.stack([i.astype(np.int64), j.astype(np.int64)], axis=1)
    feats = None if g.features is None else g.features.copy()
    return Graph(level=g.level, labels=g.labels.copy(), edges=edges, features=feats)


def apply_assignment(g: Graph, a: Assignment) -> Graph:
    """Merge nodes per the assignment: masks union, adjacency pooled.

    A supernode edge (k, l) exists iff some old edge joined their member sets;
    self-loops are dropped. Features are left unset for the caller to refresh.
    """
    amap = a.map
    if amap.shape[0] != g.num_nodes:
        raise InvalidAssignment(
            f"assignment covers {amap.shape[0]} nodes, graph has {g.num_nodes}"
        )
    labels = amap[g.labels]
    edges = _sorted_unique_edges(amap[g.edges]) if g.num_edges else g.edges
    return Graph(level=g.level + 1, labels=labels, edges=edges, features=None)
