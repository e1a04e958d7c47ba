"""Seeded synthetic feature grids with exact rectangular ground truth, and
the best-overlap evaluation used to score recovered pyramids against it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatch, InvalidParams
from .graph import TokenMask
from .maskops import mask_iou
from .pooling import MaskPyramid
from .tensor import FeatureMap, l2_normalize_rows


def _split_rects(height: int, width: int, num_regions: int, rng) -> list[tuple[int, int, int, int]]:
    """Recursively split the grid into axis-aligned rectangles.

    Each step cuts the longer axis at a jittered midpoint and hands each side
    a region count proportional to its area, clamped so both sides stay
    feasible (a side never owes more regions than it has cells).
    """
    rects = []

    def rec(r0, c0, rows, cols, k):
        if k == 1:
            rects.append((r0, c0, rows, cols))
            return
        along_rows = rows >= cols
        n = rows if along_rows else cols
        cut = int(round(n / 2)) + int(rng.integers(-(n // 4) - 1, n // 4 + 2))
        cut = min(max(cut, 1), n - 1)
        area1 = cut * (cols if along_rows else rows)
        area2 = (n - cut) * (cols if along_rows else rows)
        k1 = int(round(k * area1 / (area1 + area2)))
        k1 = min(max(k1, max(1, k - area2)), min(k - 1, area1))
        if along_rows:
            rec(r0, c0, cut, cols, k1)
            rec(r0 + cut, c0, rows - cut, cols, k - k1)
        else:
            rec(r0, c0, rows, cut, k1)
            rec(r0, c0 + cut, rows, cols - cut, k - k1)

    rec(0, 0, height, width, num_regions)
    return rects


def synth_generate(
    height: int,
    width: int,
    dim: int,
    num_regions: int,
    noise_std: float,
    seed: int,
) -> tuple[FeatureMap, list[TokenMask]]:
    """Contiguous rectangular regions with orthogonal prototype features.

    Token features are the region's standard-basis prototype plus isotropic
    gaussian noise of expected norm noise_std (per-component deviation
    noise_std / sqrt(dim)), then row-normalized, so within-region cosine
    stays near 1 / (1 + noise_std^2). Deterministic for a fixed seed.
    """
    if height < 1 or width < 1 or dim < 1:
        raise InvalidParams("height, width and dim must be >= 1")
    if num_regions < 1 or num_regions > height * width:
        raise InvalidParams(
            f"num_regions must lie in [1, {height * width}], got {num_regions}"
        )
    if dim < num_regions:
        raise InvalidParams(f"dim {dim} must be >= num_regions {num_regions}")
    if noise_std < 0:
        raise InvalidParams("noise_std must be >= 0")

    rng = np.random.default_rng(seed)
    rects = _split_rects(height, width, num_regions, rng)
    region_id = np.empty((height, width), dtype=np.int64)
    for rid, (r0, c0, rows, cols) in enumerate(rects):
        region_id[r0 : r0 + rows, c0 : c0 + cols] = rid

    data = np.zeros((height * width, dim), dtype=np.float64)
    flat = region_id.reshape(-1)
    data[np.arange(height * width), flat] = 1.0
    if noise_std > 0:
        data += rng.normal(0.0, noise_std / np.sqrt(dim), size=data.shape)
    fm = l2_normalize_rows(
        FeatureMap(height, width, dim, data.astype(np.float32))
    )
    truth = [TokenMask(flat == rid) for rid in range(num_regions)]
    return fm, truth


@dataclass
class RegionScore:
    best_iou: float
    level: int
    kind: str


@dataclass
class EvalReport:
    per_region: list[RegionScore]
    mean_best_iou: float

    def to_dict(self) -> dict:
        return {
            "per_region": [
                {"best_iou": r.best_iou, "level": r.level, "kind": r.kind}
                for r in self.per_region
            ],
            "mean_best_iou": self.mean_best_iou,
        }


def eval_iou(predicted: MaskPyramid, truth: list[TokenMask]) -> EvalReport:
    """Best IoU per ground-truth mask over every pyramid mask of any kind."""
    if not truth:
        raise GridMismatch("ground truth is empty")
    grid = predicted.height * predicted.width
    if any(t.length != grid for t in truth):
        raise GridMismatch(
            f"truth mask length differs from pyramid grid {predicted.height}x{predicted.width}"
        )
    candidates = predicted.all_masks()
    scores = []
    for t in truth:
        best, best_level, best_kind = 0.0, -1, "none"
        for pm in candidates:
            iou = mask_iou(t, pm.mask)
            if iou > best:
                best, best_level, best_kind = iou, pm.level, pm.kind
        scores.append(RegionScore(best_iou=best, level=best_level, kind=best_kind))
    mean = float(np.mean([s.best_iou for s in scores]))
    return EvalReport(per_region=scores, mean_best_iou=mean)
