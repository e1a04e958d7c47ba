"""Dense numeric primitives over token feature grids.

Features are stored as 32-bit floats; dot products and means accumulate in
64-bit. The full HW x HW token affinity matrix is never materialized: every
use reduces to a product of one aggregate vector against the feature rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFeature, DimensionMismatch, EmptyMask, InvalidTemperature

MIN_ROW_NORM = 1e-12


def _read_only(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass
class FeatureMap:
    """A dense H x W grid of d-dimensional token features, row-major."""

    height: int
    width: int
    dim: int
    data: np.ndarray  # (H*W, d) float32
    normalized: bool = False

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.dim < 1:
            raise DimensionMismatch("feature map needs H >= 1, W >= 1, d >= 1")
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape != (self.height * self.width, self.dim):
            raise DimensionMismatch(
                f"data shape {data.shape} != ({self.height * self.width}, {self.dim})"
            )
        if not np.all(np.isfinite(data)):
            raise DimensionMismatch("feature map contains non-finite values")
        self.data = _read_only(data)
        if self.normalized:
            norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise DegenerateFeature("normalized flag set but rows are not unit norm")

    @classmethod
    def from_grid(cls, grid: np.ndarray, normalized: bool = False) -> "FeatureMap":
        """Build from an (H, W, d) array."""
        grid = np.asarray(grid)
        if grid.ndim != 3:
            raise DimensionMismatch(f"expected (H, W, d) array, got shape {grid.shape}")
        h, w, d = grid.shape
        return cls(h, w, d, grid.reshape(h * w, d), normalized=normalized)

    @property
    def token_count(self) -> int:
        return self.height * self.width


@dataclass
class AffinityProfile:
    """Inner products of one aggregate feature against every token feature."""

    values: np.ndarray = field()  # (H*W,) float64

    def __post_init__(self):
        self.values = _read_only(np.asarray(self.values, dtype=np.float64))


def l2_normalize_rows(fm: FeatureMap) -> FeatureMap:
    """Return a copy of fm with every row scaled to unit L2 norm."""
    norms = np.linalg.norm(fm.data.astype(np.float64), axis=1)
    if np.any(norms < MIN_ROW_NORM):
        bad = int(np.argmin(norms))
        raise DegenerateFeature(f"row {bad} has norm {norms[bad]:.3e} < {MIN_ROW_NORM}")
    data = (fm.data.astype(np.float64) / norms[:, None]).astype(np.float32)
    return FeatureMap(fm.height, fm.width, fm.dim, data, normalized=True)


def row_softmax(values: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of values / temperature, max-subtracted for stability.

    Accepts a vector or a matrix (softmax over the last axis); returns float64.
    """
    if not temperature > 0:
        raise InvalidTemperature(f"temperature must be > 0, got {temperature}")
    v = np.asarray(values, dtype=np.float64) / float(temperature)
    if not np.all(np.isfinite(v)):
        raise InvalidTemperature("softmax input must be finite")
    v = v - v.max(axis=-1, keepdims=True)
    e = np.exp(v)
    return e / e.sum(axis=-1, keepdims=True)


def mean_mask_feature(fm: FeatureMap, mask) -> np.ndarray:
    """Arithmetic mean of the feature rows selected by mask (not re-normalized)."""
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    if bits.shape != (fm.token_count,):
        raise DimensionMismatch(
            f"mask length {bits.shape} != token count {fm.token_count}"
        )
    if not bits.any():
        raise EmptyMask("mask selects no tokens")
    return fm.data[bits].astype(np.float64).mean(axis=0)


def affinity_profile(fm: FeatureMap, aggregate: np.ndarray) -> AffinityProfile:
    """Inner product of aggregate against every token feature.

    Equals the matching row-combination of the full token affinity matrix
    without building it.
    """
    agg = np.asarray(aggregate, dtype=np.float64)
    if agg.shape != (fm.dim,):
        raise DimensionMismatch(f"aggregate length {agg.shape} != dim {fm.dim}")
    if not fm.normalized:
        raise ValueError("affinity_profile requires a normalized feature map")
    return AffinityProfile(fm.data.astype(np.float64) @ agg)
