"""Agglomerative pooling core: edge scoring, fixpoint coarsening, feature
refresh, per-threshold instance + semantic pooling, and mask deduplication.

Per-edge scores blend feature similarity (cosine of node features) with
spatial similarity (agreement of the nodes' affinity profiles over the
original token grid). All edges at or above the active threshold are marked
simultaneously and merged through connected-component labeling, so results
never depend on edge ordering or on the worker count.

Hot-path products run in float32 on the stored features with float64
reductions for the per-edge profile distances; tests pin this against the
float64 tensor-op formulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from ._parallel import chunk_bounds, map_chunks
from .ccl import connected_components
from .errors import DegenerateFeature, DimensionMismatch, InvalidConfig
from .graph import Assignment, Graph, TokenMask, apply_assignment, init_grid_graph, make_fully_connected
from .maskops import mask_iou
from .tensor import MIN_ROW_NORM, FeatureMap, row_softmax

_NODE_CHUNK = 256
_EDGE_CHUNK = 4096
_BOUND_SLACK = 1e-6  # keeps float32 rounding from pruning a true candidate

DEFAULT_THRESHOLDS = (0.8, 0.7, 0.6, 0.5, 0.4)


@dataclass
class UniapConfig:
    """Pooling hyper-parameters; defaults follow the reference setting."""

    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    sigma: float = 0.07
    omega_f: float = 0.6
    omega_s: float = 0.4
    phi: int = 5
    dedup_iou: float = 0.9
    spatial_from_level: int = 0

    def __post_init__(self):
        t = tuple(float(x) for x in self.thresholds)
        if len(t) == 0:
            raise InvalidConfig("thresholds must be non-empty")
        if any(not (-1.0 < x < 1.0) for x in t):
            raise InvalidConfig("thresholds must lie in (-1, 1)")
        if any(b >= a for a, b in zip(t, t[1:])):
            raise InvalidConfig("thresholds must be strictly decreasing")
        if not self.sigma > 0:
            raise InvalidConfig("sigma must be > 0")
        if self.omega_f < 0 or self.omega_s < 0:
            raise InvalidConfig("similarity weights must be >= 0")
        if abs(self.omega_f + self.omega_s - 1.0) > 1e-9:
            raise InvalidConfig("omega_f + omega_s must equal 1")
        if self.phi < 1:
            raise InvalidConfig("phi must be >= 1")
        if not (0.0 < self.dedup_iou <= 1.0):
            raise InvalidConfig("dedup_iou must lie in (0, 1]")
        if self.spatial_from_level < 0:
            raise InvalidConfig("spatial_from_level must be >= 0")
        self.thresholds = t

    @property
    def num_layers(self) -> int:
        return len(self.thresholds)


@dataclass
class PseudoMask:
    """One emitted mask with the supernode feature that produced it."""

    mask: TokenMask
    feature: np.ndarray | None
    level: int
    kind: str  # "instance" | "semantic"

    def __post_init__(self):
        if self.kind not in ("instance", "semantic"):
            raise InvalidConfig(f"unknown mask kind {self.kind!r}")
        if self.feature is not None:
            self.feature = np.ascontiguousarray(self.feature, dtype=np.float32)

    @property
    def area(self) -> int:
        return self.mask.area


@dataclass
class PyramidLevel:
    tau: float
    instance: list[PseudoMask] = field(default_factory=list)
    semantic: list[PseudoMask] = field(default_factory=list)


@dataclass
class MaskPyramid:
    """Per-threshold instance and semantic masks over one token grid."""

    height: int
    width: int
    levels: list[PyramidLevel] = field(default_factory=list)

    def all_masks(self, kind: str | None = None) -> list[PseudoMask]:
        out = []
        for level in self.levels:
            for pm in level.instance + level.semantic:
                if kind is None or pm.kind == kind:
                    out.append(pm)
        return out


class _Engine:
    """Shared per-run state: feature copies, config, worker pool size."""

    def __init__(self, fm: FeatureMap, cfg: UniapConfig, workers: int = 1):
        if not fm.normalized:
            raise ValueError("pooling requires a normalized feature map")
        self.cfg = cfg
        self.workers = max(1, int(workers))
        self.hw = fm.token_count
        self.f32 = fm.data  # (HW, d) float32, read-only
        self.f64 = fm.data.astype(np.float64)

    # -- node aggregates ---------------------------------------------------

    def node_sums(self, g: Graph) -> np.ndarray:
        """Per-node sums of original feature rows, float64, (num_nodes, d)."""
        if g.num_nodes == g.token_count and np.array_equal(
            g.labels, np.arange(g.token_count)
        ):
            return self.f64  # singleton masks in token order
        order = np.argsort(g.labels, kind="stable")
        sl = g.labels[order]
        starts = np.flatnonzero(np.concatenate([[True], sl[1:] != sl[:-1]]))
        return np.add.reduceat(self.f64[order], starts, axis=0)

    def profile_sums(self, sums64: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Affinity-profile sums (mask-sum features dotted with every token)."""
        # the level-0 fast path hands back the f64 view of the stored rows
        src = self.f32[rows] if sums64 is self.f64 else sums64[rows].astype(np.float32)
        out = np.empty((rows.size, self.hw), dtype=np.float32)
        ft = self.f32.T

        def run(a, b):
            out[a:b] = src[a:b] @ ft

        map_chunks(run, chunk_bounds(rows.size, _NODE_CHUNK), self.workers)
        return out

    # -- edge scoring ------------------------------------------------------

    def feature_similarity(self, g: Graph, edges: np.ndarray) -> np.ndarray:
        out = np.empty(edges.shape[0], dtype=np.float64)

        def run(a, b):
            vi = g.features[edges[a:b, 0]]
            vj = g.features[edges[a:b, 1]]
            out[a:b] = np.einsum("ij,ij->i", vi, vj, dtype=np.float64)

        map_chunks(run, chunk_bounds(edges.shape[0], _EDGE_CHUNK), self.workers)
        return out

    def spatial_similarity(
        self, g: Graph, edges: np.ndarray, sums64: np.ndarray
    ) -> np.ndarray:
        """1 - mean absolute difference of the two mean affinity profiles."""
        nodes = np.unique(edges)
        row_of = np.full(g.num_nodes, -1, dtype=np.int64)
        row_of[nodes] = np.arange(nodes.size)
        pmean = self.profile_sums(sums64, nodes)
        pmean *= (1.0 / g.areas[nodes]).astype(np.float32)[:, None]
        out = np.empty(edges.shape[0], dtype=np.float64)

        def run(a, b):
            diff = pmean[row_of[edges[a:b, 0]]]
            diff -= pmean[row_of[edges[a:b, 1]]]
            np.abs(diff, out=diff)
            out[a:b] = 1.0 - diff.sum(axis=1, dtype=np.float64) / self.hw

        map_chunks(run, chunk_bounds(edges.shape[0], _EDGE_CHUNK), self.workers)
        return out

    def spatial_active(self, g: Graph) -> bool:
        return g.level >= self.cfg.spatial_from_level

    def score_edges(self, g: Graph, edges: np.ndarray, tau: float | None = None):
        """Blended scores per edge; with tau given, edges whose score cannot
        reach tau are skipped and reported as -inf alongside the marked set."""
        cfg = self.cfg
        if edges.shape[0] == 0:
            return np.empty(0, dtype=np.float64)
        sf = self.feature_similarity(g, edges)
        # omega_s == 0 forces omega_f == 1, so the blend collapses to S_f
        if not self.spatial_active(g) or cfg.omega_s == 0.0:
            return sf
        if tau is None:
            ss = self.spatial_similarity(g, edges, self.node_sums(g))
            return cfg.omega_f * sf + cfg.omega_s * ss
        # upper bound with S_s <= 1 prunes edges that can never be marked
        cand = np.flatnonzero(cfg.omega_f * sf + cfg.omega_s >= tau - _BOUND_SLACK)
        scores = np.full(edges.shape[0], -np.inf, dtype=np.float64)
        if cand.size:
            ss = self.spatial_similarity(g, edges[cand], self.node_sums(g))
            scores[cand] = cfg.omega_f * sf[cand] + cfg.omega_s * ss
        return scores

    # -- feature refresh ---------------------------------------------------

    def merged_features(self, g: Graph, rows: np.ndarray) -> np.ndarray:
        """Softmax-voted features for the given nodes (float32 unit rows)."""
        sums64 = self.node_sums(g)
        psum = self.profile_sums(sums64, rows)
        out = np.empty((rows.size, self.f32.shape[1]), dtype=np.float32)

        def run(a, b):
            weights = row_softmax(psum[a:b].astype(np.float64), self.cfg.sigma)
            mixed = weights @ self.f64
            norms = np.linalg.norm(mixed, axis=1)
            if np.any(norms < MIN_ROW_NORM):
                raise DegenerateFeature("softmax-voted feature has near-zero norm")
            out[a:b] = (mixed / norms[:, None]).astype(np.float32)

        map_chunks(run, chunk_bounds(rows.size, _NODE_CHUNK), self.workers)
        return out

    def refresh_after_merge(self, old: Graph, a: Assignment, new: Graph) -> Graph:
        """Fill features: merged supernodes are re-voted, survivors inherit."""
        children = np.bincount(a.map, minlength=a.num_supernodes)
        feats = np.empty((new.num_nodes, self.f32.shape[1]), dtype=np.float32)
        single = children == 1
        if single.any():
            donors = np.full(a.num_supernodes, -1, dtype=np.int64)
            donors[a.map] = np.arange(a.map.size)
            feats[single] = old.features[donors[single]]
        merged = np.flatnonzero(~single)
        if merged.size:
            feats[merged] = self.merged_features(new, merged)
        return Graph(
            level=new.level, labels=new.labels, edges=new.edges, features=feats
        )

    # -- coarsening --------------------------------------------------------

    def coarsen(self, g: Graph, tau: float) -> Graph:
        while g.num_edges:
            scores = self.score_edges(g, g.edges, tau=tau)
            marked = scores >= tau
            if not marked.any():
                break
            assignment = connected_components(
                g.num_nodes, g.edges[marked], workers=self.workers
            )
            merged = apply_assignment(g, assignment)
            g = self.refresh_after_merge(g, assignment, merged)
        return g

    def emit(self, g: Graph, level: int, kind: str) -> list[PseudoMask]:
        keep = np.flatnonzero(g.areas >= self.cfg.phi)
        return [
            PseudoMask(
                mask=g.mask_of(int(k)),
                feature=g.features[int(k)].copy(),
                level=level,
                kind=kind,
            )
            for k in keep
        ]


def _check_inputs(g: Graph, fm: FeatureMap) -> None:
    if g.token_count != fm.token_count:
        raise DimensionMismatch(
            f"graph tokens {g.token_count} != feature map tokens {fm.token_count}"
        )
    if g.features is not None and g.features.shape[1] != fm.dim:
        raise DimensionMismatch("graph feature width differs from the feature map")


def edge_similarities(
    g: Graph, fm: FeatureMap, cfg: UniapConfig, workers: int = 1
) -> np.ndarray:
    """Blended similarity score for every edge of g, in edge order."""
    _check_inputs(g, fm)
    return _Engine(fm, cfg, workers).score_edges(g, g.edges)


def update_features(
    g: Graph, fm: FeatureMap, sigma: float, workers: int = 1
) -> Graph:
    """Recompute every node feature by softmax-voted token mixing.

    Weights are the softmax (temperature sigma) of the node's affinity-profile
    sums, so boundary tokens contribute little; rows come back unit-norm.
    """
    _check_inputs(g, fm)
    cfg = UniapConfig(sigma=sigma)
    eng = _Engine(fm, cfg, workers)
    rows = np.arange(g.num_nodes, dtype=np.int64)
    feats = eng.merged_features(g, rows)
    return Graph(level=g.level, labels=g.labels, edges=g.edges, features=feats)


def coarsen_to_fixpoint(
    g: Graph, fm: FeatureMap, tau: float, cfg: UniapConfig, workers: int = 1
) -> Graph:
    """Merge strongly similar adjacent nodes until no edge scores >= tau.

    Each pass marks all qualifying edges at once, merges their connected
    groups, and re-votes the merged supernode features; untouched nodes keep
    their current features. Returns the input unchanged when the first pass
    marks nothing.
    """
    _check_inputs(g, fm)
    return _Engine(fm, cfg, workers).coarsen(g, tau)


def pool_layer(
    g: Graph, fm: FeatureMap, tau: float, cfg: UniapConfig, workers: int = 1
) -> tuple[Graph, list[tuple[TokenMask, np.ndarray]]]:
    """One threshold layer: instance pooling, then semantic pooling on the
    fully connected copy. Returns the instance graph (input to the next
    layer) and the semantic nodes as (mask, feature) pairs."""
    _check_inputs(g, fm)
    eng = _Engine(fm, cfg, workers)
    instance = eng.coarsen(g, tau)
    semantic = eng.coarsen(make_fully_connected(instance), tau)
    nodes = [
        (semantic.mask_of(k), semantic.features[k].copy())
        for k in range(semantic.num_nodes)
    ]
    return instance, nodes


def dedup_masks(masks: list[PseudoMask], dedup_iou: float) -> list[PseudoMask]:
    """Greedy scan in the given order; drop a mask iff it overlaps an already
    kept mask of the same kind with IoU above the threshold."""
    if not (0.0 < dedup_iou <= 1.0):
        raise InvalidConfig("dedup_iou must lie in (0, 1]")
    kept: list[PseudoMask] = []
    for pm in masks:
        dup = any(
            other.kind == pm.kind and mask_iou(pm.mask, other.mask) > dedup_iou
            for other in kept
        )
        if not dup:
            kept.append(pm)
    return kept


def run_uniap(fm: FeatureMap, cfg: UniapConfig, workers: int = 1) -> MaskPyramid:
    """Full multi-granular pooling: one instance + semantic pass per threshold.

    Masks with area below cfg.phi are withheld; near-duplicate masks across
    levels are pruned per kind. Deterministic for any worker count.
    """
    with threadpool_limits(limits=1, user_api="blas"):
        eng = _Engine(fm, cfg, workers)
        g = init_grid_graph(fm)
        levels = []
        for level, tau in enumerate(cfg.thresholds):
            g = eng.coarsen(g, tau)
            instance = eng.emit(g, level, "instance")
            sem_graph = eng.coarsen(make_fully_connected(g), tau)
            semantic = eng.emit(sem_graph, level, "semantic")
            levels.append(PyramidLevel(tau=tau, instance=instance, semantic=semantic))

        for kind in ("instance", "semantic"):
            flat = [pm for lv in levels for pm in getattr(lv, kind)]
            kept = set(id(pm) for pm in dedup_masks(flat, cfg.dedup_iou))
            for lv in levels:
                setattr(lv, kind, [pm for pm in getattr(lv, kind) if id(pm) in kept])

    return MaskPyramid(height=fm.height, width=fm.width, levels=levels)
