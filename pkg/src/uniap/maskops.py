"""Mask arithmetic: areas, overlap scores, cropping, run-length coding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoxOutOfRange, LengthMismatch, MalformedRle
from .graph import TokenMask


@dataclass(frozen=True)
class CropBox:
    """A rows x cols rectangle anchored at (row0, col0) on the token grid."""

    row0: int
    col0: int
    rows: int
    cols: int

    def validate(self, height: int, width: int) -> None:
        if self.rows < 1 or self.cols < 1:
            raise BoxOutOfRange(f"box must span at least one token, got {self}")
        if self.row0 < 0 or self.col0 < 0:
            raise BoxOutOfRange(f"box origin must be non-negative, got {self}")
        if self.row0 + self.rows > height or self.col0 + self.cols > width:
            raise BoxOutOfRange(f"{self} exceeds the {height}x{width} grid")


@dataclass
class RleMask:
    """Row-major run lengths, alternating zero-run first (leading count may be 0)."""

    height: int
    width: int
    counts: list[int]

    def __post_init__(self):
        counts = [int(c) for c in self.counts]
        if any(c < 0 for c in counts):
            raise MalformedRle("run lengths must be non-negative")
        if sum(counts) != self.height * self.width:
            raise MalformedRle(
                f"counts sum {sum(counts)} != grid size {self.height * self.width}"
            )
        if any(a == 0 and b == 0 for a, b in zip(counts, counts[1:])):
            raise MalformedRle("consecutive zero run lengths are not allowed")
        self.counts = counts


def _paired(a: TokenMask, b: TokenMask) -> tuple[np.ndarray, np.ndarray]:
    if a.length != b.length:
        raise LengthMismatch(f"mask lengths differ: {a.length} vs {b.length}")
    return a.bits, b.bits


def mask_iou(a: TokenMask, b: TokenMask) -> float:
    """Intersection over union; 1.0 when both masks are empty."""
    x, y = _paired(a, b)
    union = int(np.count_nonzero(x | y))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(x & y)) / union


def mask_dice(a: TokenMask, b: TokenMask) -> float:
    """Dice similarity 2|a & b| / (|a| + |b|); 1.0 when both masks are empty."""
    x, y = _paired(a, b)
    total = a.area + b.area
    if total == 0:
        return 1.0
    return 2 * int(np.count_nonzero(x & y)) / total


def crop_mask(m: TokenMask, box: CropBox, height: int, width: int) -> TokenMask | None:
    """Restrict m to box, re-indexed to the box-local rows x cols grid.

    Returns None when the mask does not overlap the box at all.
    """
    if m.length != height * width:
        raise LengthMismatch(f"mask length {m.length} != grid {height}x{width}")
    box.validate(height, width)
    window = m.bits.reshape(height, width)[
        box.row0 : box.row0 + box.rows, box.col0 : box.col0 + box.cols
    ]
    if not window.any():
        return None
    return TokenMask(window.reshape(-1).copy())


def rle_encode(m: TokenMask, height: int, width: int) -> RleMask:
    """Run-length encode a mask, zero-run first; decode(encode(m)) == m."""
    if m.length != height * width:
        raise LengthMismatch(f"mask length {m.length} != grid {height}x{width}")
    flat = m.bits
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(height, width, counts)


def rle_decode(r: RleMask) -> TokenMask:
    """Inverse of rle_encode."""
    bits = np.zeros(r.height * r.width, dtype=bool)
    pos = 0
    value = False
    for count in r.counts:
        if value:
            bits[pos : pos + count] = True
        pos += count
        value = not value
    return TokenMask(bits)
