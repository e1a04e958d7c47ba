#!/usr/bin/env python3
"""Run a pretrained vision backbone on one image and write its per-patch
feature map as an FMAP binary for the pooling library to consume.

Embedding choice: for the hub ViT backbones we export the block-output patch
tokens (post layer-norm, class token dropped) of the block selected by
--layer, which is the common practice for frozen-feature segmentation work.
For a local TorchScript model the module's own output feature map is taken
as-is. The chosen layer is recorded in the default output filename suffix.

FMAP layout (little-endian): "FMAP" magic, u32 version=1, u32 height,
u32 width, u32 dim, u32 dtype code (0 = float32), then height*width*dim
row-major float32 values. Rows are L2-normalized before writing.
"""
from __future__ import annotations

import argparse
import struct
import sys
from pathlib import Path

import numpy as np

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1

HUB_MODELS = {
    "dino_vits16": 16,
    "dino_vits8": 8,
    "dino_vitb16": 16,
    "dino_vitb8": 8,
}


class ExportError(Exception):
    pass


class ModelUnavailable(ExportError):
    pass


class ImageDecodeError(ExportError):
    pass


class IoFailure(ExportError):
    pass


def load_image(path: str):
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc


def image_tensor(img, multiple: int):
    """Center-crop to a multiple of the patch size, normalize, NCHW float."""
    import torch

    w, h = img.size
    cw, ch = (w // multiple) * multiple, (h // multiple) * multiple
    if cw == 0 or ch == 0:
        raise ImageDecodeError(
            f"image {w}x{h} is smaller than one {multiple}px patch"
        )
    left, top = (w - cw) // 2, (h - ch) // 2
    img = img.crop((left, top, left + cw, top + ch))
    arr = np.asarray(img, dtype=np.float32) / 255.0
    mean = np.array([0.485, 0.456, 0.406], dtype=np.float32)
    std = np.array([0.229, 0.224, 0.225], dtype=np.float32)
    arr = (arr - mean) / std
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def run_hub_vit(name: str, img, layer: int | None):
    import torch

    patch = HUB_MODELS[name]
    try:
        model = torch.hub.load("facebookresearch/dino:main", name, verbose=False)
    except Exception as exc:
        raise ModelUnavailable(f"cannot load hub model {name}: {exc}") from exc
    model.eval()
    x = image_tensor(img, patch)
    depth = len(model.blocks)
    take = depth if layer is None else layer
    if not 1 <= take <= depth:
        raise ModelUnavailable(f"--layer must lie in [1, {depth}] for {name}")
    with torch.inference_mode():
        # intermediate layers are returned deepest-last; drop the class token
        feats = model.get_intermediate_layers(x, n=depth - take + 1)[0]
    tokens = feats[0, 1:, :].numpy()
    grid_h = x.shape[2] // patch
    grid_w = x.shape[3] // patch
    return tokens.reshape(grid_h, grid_w, -1), take


def run_scripted(path: str, img, layer: int | None):
    import torch

    try:
        model = torch.jit.load(path, map_location="cpu")
    except Exception as exc:
        raise ModelUnavailable(f"cannot load TorchScript model {path}: {exc}") from exc
    model.eval()
    patch = getattr(model, "patch_size", 8)
    x = image_tensor(img, int(patch))
    with torch.inference_mode():
        out = model(x)
    if out.ndim == 4:  # (1, C, H', W')
        fmap = out[0].permute(1, 2, 0).numpy()
    elif out.ndim == 3:  # (1, N, C) token list on a square grid
        n = out.shape[1]
        side = int(round(n ** 0.5))
        if side * side != n:
            raise ModelUnavailable(
                f"token output of length {n} is not a square grid"
            )
        fmap = out[0].numpy().reshape(side, side, -1)
    else:
        raise ModelUnavailable(f"unsupported model output shape {tuple(out.shape)}")
    return fmap, 0


def l2_normalize(grid: np.ndarray) -> np.ndarray:
    h, w, d = grid.shape
    flat = grid.reshape(h * w, d).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise ModelUnavailable("backbone produced an all-zero patch feature")
    return (flat / norms).astype(np.float32).reshape(h, w, d)


def write_fmap(grid: np.ndarray, path: str) -> None:
    h, w, d = grid.shape
    header = struct.pack("<4sIIIII", FMAP_MAGIC, FMAP_VERSION, h, w, d, 0)
    payload = np.ascontiguousarray(grid.reshape(h * w, d), dtype="<f4").tobytes()
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def export_features(image_path: str, model_name: str, out_path: str | None, layer: int | None = None) -> str:
    import torch

    torch.set_num_threads(1)  # deterministic re-export byte for byte
    img = load_image(image_path)
    if model_name in HUB_MODELS:
        grid, used_layer = run_hub_vit(model_name, img, layer)
    elif Path(model_name).exists():
        grid, used_layer = run_scripted(model_name, img, layer)
    else:
        raise ModelUnavailable(
            f"{model_name} is neither a known hub model {sorted(HUB_MODELS)} "
            "nor a local TorchScript file"
        )
    grid = l2_normalize(grid)
    if out_path is None:
        stem = Path(image_path).stem
        tag = Path(model_name).stem if Path(model_name).exists() else model_name
        out_path = f"{stem}.{tag}.L{used_layer}.fmap"
    write_fmap(grid, out_path)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--image", required=True)
    parser.add_argument("--model", required=True,
                        help="hub name (e.g. dino_vitb8) or local TorchScript path")
    parser.add_argument("--out", default=None,
                        help="output .fmap; default records model and layer in the name")
    parser.add_argument("--layer", type=int, default=None,
                        help="1-based transformer block to export (hub models; default last)")
    args = parser.parse_args(argv)
    try:
        out = export_features(args.image, args.model, args.out, args.layer)
    except ExportError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
