"""Bit-exact file formats: FMAP binary feature maps, mask-pyramid JSON,
run config JSON, and PGM label-map renders.

FMAP layout (all integers little-endian):
  bytes 0..3   magic "FMAP"
  bytes 4..7   version, u32, currently 1
  bytes 8..19  height, width, dim as u32
  bytes 20..23 dtype code, u32, 0 = 32-bit float
  payload      height*width*dim little-endian float32, row-major

Mask runs are row-major with a leading zero-run count, which differs from
the column-major COCO convention on purpose.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    InvalidConfig,
    InvalidTemperature,
    IoFailure,
    MalformedJson,
    TruncatedPayload,
    UnsupportedVersion,
)
from .matching import QuerySDConfig
from .maskops import RleMask, rle_decode, rle_encode
from .pooling import MaskPyramid, PseudoMask, PyramidLevel, UniapConfig
from .tensor import FeatureMap

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1
FMAP_DTYPE_F32 = 0
_HEADER = struct.Struct("<4sIIIII")


@dataclass(frozen=True)
class FmapHeader:
    version: int
    height: int
    width: int
    dim: int
    dtype: int


def write_fmap(fm: FeatureMap, path) -> None:
    """Write the binary feature-map file; write-then-read is byte exact."""
    header = _HEADER.pack(
        FMAP_MAGIC, FMAP_VERSION, fm.height, fm.width, fm.dim, FMAP_DTYPE_F32
    )
    payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_fmap(path, normalized: bool = True) -> FeatureMap:
    """Read a FMAP file back into a FeatureMap.

    Rows written by the library are unit-norm; pass normalized=False to skip
    the norm check for externally produced files.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise TruncatedPayload(f"{path}: {len(raw)} bytes is shorter than the header")
    magic, version, height, width, dim, dtype = _HEADER.unpack_from(raw)
    if magic != FMAP_MAGIC:
        raise BadMagic(f"{path}: magic {magic!r} != {FMAP_MAGIC!r}")
    if version != FMAP_VERSION:
        raise UnsupportedVersion(f"{path}: version {version} unsupported")
    if dtype != FMAP_DTYPE_F32:
        raise UnsupportedVersion(f"{path}: dtype code {dtype} unsupported")
    expected = height * width * dim * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path}: payload {len(payload)} bytes, header declares {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(height * width, dim)
    return FeatureMap(height, width, dim, data, normalized=normalized)


def _mask_to_json(pm: PseudoMask, height: int, width: int, with_features: bool) -> dict:
    entry = {
        "rle": rle_encode(pm.mask, height, width).counts,
        "area": pm.area,
        "level": pm.level,
    }
    if with_features and pm.feature is not None:
        entry["feature"] = [float(x) for x in pm.feature]
    return entry


def _mask_from_json(entry: dict, height: int, width: int, level: int, kind: str) -> PseudoMask:
    try:
        rle = RleMask(height, width, entry["rle"])
        feature = entry.get("feature")
        pm = PseudoMask(
            mask=rle_decode(rle),
            feature=None if feature is None else np.asarray(feature, dtype=np.float32),
            level=int(entry.get("level", level)),
            kind=kind,
        )
    except (KeyError, TypeError) as exc:
        raise MalformedJson(f"bad mask entry: {exc}") from exc
    if pm.area != int(entry.get("area", pm.area)):
        raise MalformedJson("mask area disagrees with its run-length counts")
    return pm


def write_mask_json(pyramid: MaskPyramid, path, with_features: bool = True) -> None:
    """Serialize a pyramid deterministically (sorted keys, canonical floats)."""
    doc = {
        "height": pyramid.height,
        "width": pyramid.width,
        "levels": [
            {
                "tau": level.tau,
                "instance": [
                    _mask_to_json(pm, pyramid.height, pyramid.width, with_features)
                    for pm in level.instance
                ],
                "semantic": [
                    _mask_to_json(pm, pyramid.height, pyramid.width, with_features)
                    for pm in level.semantic
                ],
            }
            for level in pyramid.levels
        ],
    }
    try:
        Path(path).write_text(mask_json_text(doc))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def mask_json_text(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def read_mask_json(path) -> MaskPyramid:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    try:
        height = int(doc["height"])
        width = int(doc["width"])
        levels = []
        for idx, lv in enumerate(doc["levels"]):
            levels.append(
                PyramidLevel(
                    tau=float(lv["tau"]),
                    instance=[
                        _mask_from_json(e, height, width, idx, "instance")
                        for e in lv["instance"]
                    ],
                    semantic=[
                        _mask_from_json(e, height, width, idx, "semantic")
                        for e in lv["semantic"]
                    ],
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    return MaskPyramid(height=height, width=width, levels=levels)


def render_labelmap_pgm(masks: list[PseudoMask], height: int, width: int, path) -> None:
    """Binary PGM with one gray level per mask index modulo 255, background 0.

    Overlapping masks are resolved by precedence: the first mask wins.
    """
    img = np.zeros(height * width, dtype=np.uint8)
    taken = np.zeros(height * width, dtype=bool)
    for idx, pm in enumerate(masks):
        paint = pm.mask.bits & ~taken
        img[paint] = (idx % 255) + 1
        taken |= pm.mask.bits
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + img.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_masklist_json(path, height: int, width: int, masks) -> None:
    """Flat mask-list file: ground truth, student masks, and the like.

    masks is an iterable of (TokenMask, kind) pairs or bare TokenMasks (kind
    defaults to "instance").
    """
    entries = []
    for m in masks:
        mask, kind = m if isinstance(m, tuple) else (m, "instance")
        entries.append(
            {"rle": rle_encode(mask, height, width).counts, "kind": kind}
        )
    doc = {"height": height, "width": width, "masks": entries}
    try:
        Path(path).write_text(mask_json_text(doc))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_masklist_json(path):
    """Read a flat mask-list file; returns (height, width, [(TokenMask, kind)])."""
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    try:
        height = int(doc["height"])
        width = int(doc["width"])
        masks = [
            (
                rle_decode(RleMask(height, width, entry["rle"])),
                entry.get("kind", "instance"),
            )
            for entry in doc["masks"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc
    return height, width, masks


CONFIG_DEFAULTS = {
    "thresholds": [0.8, 0.7, 0.6, 0.5, 0.4],
    "sigma": 0.07,
    "omega_f": 0.6,
    "omega_s": 0.4,
    "phi": 5,
    "dedup_iou": 0.9,
    "spatial_from_level": 0,
    "teacher_temp": 0.04,
    "student_temp": 0.1,
    "num_local_views": 2,
}


def load_config(path=None, overrides: dict | None = None) -> tuple[UniapConfig, QuerySDConfig]:
    """Parse a JSON config; missing keys fall back to the defaults above."""
    values = dict(CONFIG_DEFAULTS)
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise InvalidConfig(f"{path}: config must be a JSON object")
        unknown = set(doc) - set(CONFIG_DEFAULTS)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        values.update(doc)
    if overrides:
        values.update(overrides)
    try:
        thresholds = tuple(float(x) for x in values["thresholds"])
        numeric = {
            k: float(values[k])
            for k in ("sigma", "omega_f", "omega_s", "dedup_iou",
                      "teacher_temp", "student_temp")
        }
        integral = {
            k: int(values[k])
            for k in ("phi", "spatial_from_level", "num_local_views")
        }
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"config values must be numeric: {exc}") from exc
    values.update(numeric)
    values.update(integral)
    pooling = UniapConfig(
        thresholds=thresholds,
        sigma=values["sigma"],
        omega_f=values["omega_f"],
        omega_s=values["omega_s"],
        phi=values["phi"],
        dedup_iou=values["dedup_iou"],
        spatial_from_level=values["spatial_from_level"],
    )
    try:
        distill = QuerySDConfig(
            teacher_temp=values["teacher_temp"],
            student_temp=values["student_temp"],
            num_local_views=values["num_local_views"],
        )
    except InvalidTemperature as exc:
        raise InvalidConfig(str(exc)) from exc
    return pooling, distill
