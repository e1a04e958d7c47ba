"""Cropped bipartite matching of pseudo-masks and the matched-pair
self-distillation loss.

Teacher masks are cropped to the student's view and dropped when the overlap
is empty; Dice similarity is the only matching criterion. Matching maximizes
total Dice exactly, with ties broken toward the lexicographically smallest
pair list. The loss is the cross-entropy from each matched teacher query's
distribution to its student counterpart, with an analytic gradient over the
student logits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, InvalidTemperature
from .graph import TokenMask
from .maskops import CropBox, crop_mask, mask_dice
from .pooling import PseudoMask
from .tensor import row_softmax

LOG_FLOOR = 1e-12


@dataclass
class QuerySDConfig:
    """Distillation temperatures and the number of student local views."""

    teacher_temp: float = 0.04
    student_temp: float = 0.1
    num_local_views: int = 2

    def __post_init__(self):
        if not (self.teacher_temp > 0 and self.student_temp > 0):
            raise InvalidTemperature("softmax temperatures must be > 0")
        if self.num_local_views < 1:
            raise InvalidConfig("num_local_views must be >= 1")


@dataclass
class MatchResult:
    """Student-teacher index pairs of an optimal Dice matching."""

    pairs: list[tuple[int, int]] = field(default_factory=list)
    unmatched_students: list[int] = field(default_factory=list)
    unmatched_teachers: list[int] = field(default_factory=list)
    total_dice: float = 0.0


def crop_and_filter_teacher(
    teacher: list[PseudoMask], box: CropBox, height: int, width: int
) -> list[tuple[TokenMask, int]]:
    """Crop teacher masks to the box; entries with no overlap are dropped.

    Returns (box-local mask, original index) pairs in the original order.
    """
    out = []
    for idx, pm in enumerate(teacher):
        cropped = crop_mask(pm.mask, box, height, width)
        if cropped is not None:
            out.append((cropped, idx))
    return out


def dice_cost_matrix(
    student: list[TokenMask], teacher: list[TokenMask]
) -> np.ndarray:
    """Pairwise Dice scores, students on rows."""
    out = np.zeros((len(student), len(teacher)), dtype=np.float64)
    for s, sm in enumerate(student):
        for t, tm in enumerate(teacher):
            out[s, t] = mask_dice(sm, tm)
    return out


def _km_duals(cost: np.ndarray):
    """Square min-cost assignment (Kuhn-Munkres with potentials).

    Returns (row_of_col, u, v): the matched row per column and the dual
    potentials, which certify optimality via non-negative reduced costs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)  # p[j] = row matched to column j, 1-based
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            idx = np.flatnonzero(free)
            cur = cost[i0 - 1, idx - 1] - u[i0] - v[idx]
            better = cur < minv[idx]
            sel = idx[better]
            minv[sel] = cur[better]
            way[sel] = j0
            k = int(np.argmin(minv[idx]))
            j1 = int(idx[k])
            delta = minv[j1]
            used_idx = np.flatnonzero(used)
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = int(way[j0])
            p[j0] = p[j1]
            j0 = j1
    return p[1:] - 1, u[1:], v[1:]


def _lex_canonical_matching(tight, n, initial_col_of_row, real_rows):
    """Lexicographically smallest perfect matching of the tight bipartite graph.

    Rows are fixed greedily in ascending order; a candidate column is accepted
    iff its current holder can be rerouted along an alternating path, which
    proves the remaining rows still admit a perfect matching.
    """
    col_of = list(initial_col_of_row)
    row_of = [-1] * n
    for r, c in enumerate(col_of):
        row_of[c] = r

    def augment(r: int, banned_cols: set, visited: set) -> bool:
        for c in tight[r]:
            if c in banned_cols or c in visited:
                continue
            visited.add(c)
            holder = row_of[c]
            if holder == -1 or augment(holder, banned_cols, visited):
                row_of[c] = r
                col_of[r] = c
                return True
        return False

    fixed_cols: set[int] = set()
    for s in range(real_rows):
        for t in tight[s]:
            if t in fixed_cols:
                continue
            if col_of[s] == t:
                fixed_cols.add(t)
                break
            saved = (list(col_of), list(row_of))
            holder = row_of[t]
            old_c = col_of[s]
            col_of[s] = t
            row_of[t] = s
            row_of[old_c] = -1
            col_of[holder] = -1
            if augment(holder, fixed_cols | {t}, set()):
                fixed_cols.add(t)
                break
            col_of, row_of = saved
        else:
            raise AssertionError("tight graph lost perfection during canonicalization")
    return col_of


def hungarian_max(scores: np.ndarray) -> MatchResult:
    """Optimal maximum-total matching of a (possibly rectangular) score matrix.

    Matches min(rows, cols) pairs; among optimal matchings the
    lexicographically smallest pair list is returned. An empty matrix yields
    an empty result.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DimensionMismatch(f"score matrix must be 2-D, got shape {scores.shape}")
    rows, cols = scores.shape
    if rows == 0 or cols == 0:
        return MatchResult(
            pairs=[],
            unmatched_students=list(range(rows)),
            unmatched_teachers=list(range(cols)),
            total_dice=0.0,
        )
    if not np.all(np.isfinite(scores)):
        raise ValueError("score matrix must be finite")

    # pad square with zero-scoring dummies so every optimal matching is a
    # perfect matching and dual certificates carry no unmatched-side caveats
    n = max(rows, cols)
    padded = np.zeros((n, n), dtype=np.float64)
    padded[:rows, :cols] = scores
    row_of_col, u, v = _km_duals(-padded)
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[row_of_col] = np.arange(n)

    scale = max(1.0, float(np.abs(padded).max()))
    reduced = (-padded) - u[:, None] - v[None, :]
    tight = [np.flatnonzero(reduced[r] <= 1e-8 * scale).tolist() for r in range(n)]

    canonical = _lex_canonical_matching(tight, n, col_of_row.tolist(), rows)

    def real_pairs(col_of):
        return [(s, int(col_of[s])) for s in range(rows) if int(col_of[s]) < cols]

    def total(pairs):
        return math.fsum(scores[s, t] for s, t in pairs)

    pairs = sorted(real_pairs(canonical))
    km_pairs = sorted(real_pairs(col_of_row))
    # near-ties inside the tight tolerance are not true ties; keep optimality
    if total(pairs) < total(km_pairs):
        pairs = km_pairs

    matched_s = {s for s, _ in pairs}
    matched_t = {t for _, t in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_students=[s for s in range(rows) if s not in matched_s],
        unmatched_teachers=[t for t in range(cols) if t not in matched_t],
        total_dice=total(pairs),
    )


def _paired_distributions(teacher_logits, student_logits, pairs, cfg: QuerySDConfig):
    t = np.asarray(teacher_logits, dtype=np.float64)
    s = np.asarray(student_logits, dtype=np.float64)
    if t.ndim != 2 or s.ndim != 2 or t.shape[1] != s.shape[1]:
        raise DimensionMismatch(
            f"teacher {t.shape} and student {s.shape} logits must share K"
        )
    pairs = [(int(a), int(b)) for a, b in pairs]
    s_idx = [a for a, _ in pairs]
    t_idx = [b for _, b in pairs]
    if len(set(s_idx)) != len(s_idx) or len(set(t_idx)) != len(t_idx):
        raise DimensionMismatch("each query may appear in at most one pair")
    if pairs and (
        min(s_idx) < 0 or max(s_idx) >= s.shape[0]
        or min(t_idx) < 0 or max(t_idx) >= t.shape[0]
    ):
        raise DimensionMismatch("pair indices out of range")
    if not pairs:
        return s, np.empty((0, s.shape[1])), np.empty((0, s.shape[1])), []
    pt = row_softmax(t[t_idx], cfg.teacher_temp)
    ps = row_softmax(s[s_idx], cfg.student_temp)
    return s, pt, ps, s_idx


def querysd_loss(teacher_logits, student_logits, pairs, cfg: QuerySDConfig) -> float:
    """Sum over matched pairs of the teacher-to-student cross-entropy.

    Distributions are softmaxes of the logits at the configured temperatures;
    the student log is floored at log(1e-12). Unmatched queries contribute 0.
    """
    _, pt, ps, _ = _paired_distributions(teacher_logits, student_logits, pairs, cfg)
    if pt.shape[0] == 0:
        return 0.0
    return float(-np.sum(pt * np.log(np.maximum(ps, LOG_FLOOR))))


def querysd_grad(teacher_logits, student_logits, pairs, cfg: QuerySDConfig) -> np.ndarray:
    """Gradient of querysd_loss over the student logits.

    Matched student rows get (p_student - p_teacher) / student_temp; rows of
    unmatched students are zero.
    """
    s, pt, ps, s_idx = _paired_distributions(teacher_logits, student_logits, pairs, cfg)
    grad = np.zeros_like(s)
    if s_idx:
        grad[s_idx] = (ps - pt) / cfg.student_temp
    return grad
