"""Command-line surface: segment, synth, eval, bench, match."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import bench_run
from .errors import IoFailure, MalformedJson, UniapError
from .formats import (
    load_config,
    read_fmap,
    read_mask_json,
    read_masklist_json,
    render_labelmap_pgm,
    write_fmap,
    write_mask_json,
    write_masklist_json,
)
from .matching import (
    QuerySDConfig,
    crop_and_filter_teacher,
    dice_cost_matrix,
    hungarian_max,
    querysd_loss,
)
from .maskops import CropBox
from .pooling import PseudoMask, run_uniap
from .synth import eval_iou, synth_generate
from .tensor import l2_normalize_rows


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _cmd_segment(args) -> int:
    fm = l2_normalize_rows(read_fmap(args.features, normalized=False))
    cfg, _ = load_config(args.config)
    pyramid = run_uniap(fm, cfg, workers=args.workers)
    write_mask_json(pyramid, args.out, with_features=not args.no_features)
    if args.render:
        outdir = Path(args.render)
        outdir.mkdir(parents=True, exist_ok=True)
        for idx, level in enumerate(pyramid.levels):
            for kind in ("instance", "semantic"):
                render_labelmap_pgm(
                    getattr(level, kind),
                    pyramid.height,
                    pyramid.width,
                    outdir / f"level{idx}_{kind}.pgm",
                )
    counts = {
        "instance": sum(len(lv.instance) for lv in pyramid.levels),
        "semantic": sum(len(lv.semantic) for lv in pyramid.levels),
    }
    _emit({"out": str(args.out), "masks": counts, "levels": len(pyramid.levels)})
    return 0


def _cmd_synth(args) -> int:
    fm, truth = synth_generate(
        args.h, args.w, args.d, args.regions, args.noise, args.seed
    )
    write_fmap(fm, args.out)
    write_masklist_json(args.truth, fm.height, fm.width, truth)
    _emit(
        {
            "out": str(args.out),
            "truth": str(args.truth),
            "regions": args.regions,
            "grid": [fm.height, fm.width],
        }
    )
    return 0


def _cmd_eval(args) -> int:
    pyramid = read_mask_json(args.pred)
    _, _, truth_masks = read_masklist_json(args.truth)
    report = eval_iou(pyramid, [m for m, _ in truth_masks])
    _emit(report.to_dict())
    return 0


def _cmd_bench(args) -> int:
    fm = l2_normalize_rows(read_fmap(args.features, normalized=False))
    cfg, _ = load_config(args.config)
    report = bench_run(fm, cfg, repeats=args.repeats, workers=args.workers)
    _emit(report.to_dict())
    return 0


def _parse_box(text: str) -> CropBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise MalformedJson(f"--box expects r0,c0,rows,cols, got {text!r}")
    r0, c0, rows, cols = (int(p) for p in parts)
    return CropBox(r0, c0, rows, cols)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from exc


def _load_teacher_masks(path) -> tuple[int, int, list[PseudoMask]]:
    """Teacher masks come either as a segment pyramid or as a flat list."""
    doc = _load_json(path)
    if isinstance(doc, dict) and "levels" in doc:
        pyramid = read_mask_json(path)
        return pyramid.height, pyramid.width, pyramid.all_masks()
    height, width, masks = read_masklist_json(path)
    return height, width, [
        PseudoMask(mask=m, feature=None, level=0, kind=kind) for m, kind in masks
    ]


def _cmd_match(args) -> int:
    box = _parse_box(args.box)
    t_height, t_width, teacher = _load_teacher_masks(args.teacher)
    s_height, s_width, student = read_masklist_json(args.student)
    if (s_height, s_width) != (box.rows, box.cols):
        raise MalformedJson(
            f"student grid {s_height}x{s_width} must equal the box {box.rows}x{box.cols}"
        )
    cropped = crop_and_filter_teacher(teacher, box, t_height, t_width)

    logits_doc = _load_json(args.logits)
    try:
        t_logits = np.asarray(logits_doc["teacher"], dtype=np.float64)
        s_logits = np.asarray(logits_doc["student"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedJson(f"{args.logits}: {exc}") from exc
    cfg = QuerySDConfig(
        teacher_temp=logits_doc.get("teacher_temp", 0.04),
        student_temp=logits_doc.get("student_temp", 0.1),
    )

    # semantic and instance queries are matched independently
    all_pairs = []
    kinds_out = {}
    for kind in ("instance", "semantic"):
        s_idx = [i for i, (_, k) in enumerate(student) if k == kind]
        t_entries = [(m, j) for m, j in cropped if teacher[j].kind == kind]
        scores = dice_cost_matrix(
            [student[i][0] for i in s_idx], [m for m, _ in t_entries]
        )
        result = hungarian_max(scores)
        pairs = [(s_idx[a], t_entries[b][1]) for a, b in result.pairs]
        all_pairs.extend(pairs)
        kinds_out[kind] = {
            "pairs": pairs,
            "unmatched_students": [s_idx[a] for a in result.unmatched_students],
            "unmatched_teachers": [t_entries[b][1] for b in result.unmatched_teachers],
            "total_dice": result.total_dice,
        }

    loss = querysd_loss(t_logits, s_logits, all_pairs, cfg)
    _emit(
        {
            "kinds": kinds_out,
            "pairs": sorted(all_pairs),
            "total_dice": sum(k["total_dice"] for k in kinds_out.values()),
            "loss": loss,
            "dropped_teachers": [
                j for j in range(len(teacher)) if j not in {j for _, j in cropped}
            ],
        }
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uniap",
        description="Multi-granular pseudo-masks from dense token features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="pool a feature map into a mask pyramid")
    seg.add_argument("--features", required=True)
    seg.add_argument("--config", default=None)
    seg.add_argument("--out", required=True)
    seg.add_argument("--render", default=None, help="directory for per-level PGMs")
    seg.add_argument("--workers", type=int, default=1)
    seg.add_argument("--no-features", action="store_true")
    seg.set_defaults(func=_cmd_segment)

    syn = sub.add_parser("synth", help="generate a seeded synthetic feature map")
    syn.add_argument("--h", type=int, required=True)
    syn.add_argument("--w", type=int, required=True)
    syn.add_argument("--d", type=int, required=True)
    syn.add_argument("--regions", type=int, required=True)
    syn.add_argument("--noise", type=float, required=True)
    syn.add_argument("--seed", type=int, required=True)
    syn.add_argument("--out", required=True)
    syn.add_argument("--truth", required=True)
    syn.set_defaults(func=_cmd_synth)

    ev = sub.add_parser("eval", help="score a pyramid against ground-truth masks")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.set_defaults(func=_cmd_eval)

    ben = sub.add_parser("bench", help="time the pipeline and check determinism")
    ben.add_argument("--features", required=True)
    ben.add_argument("--config", default=None)
    ben.add_argument("--repeats", type=int, default=5)
    ben.add_argument("--workers", type=int, default=1)
    ben.set_defaults(func=_cmd_bench)

    mat = sub.add_parser("match", help="Dice-match student masks to cropped teacher masks")
    mat.add_argument("--student", required=True)
    mat.add_argument("--teacher", required=True)
    mat.add_argument("--box", required=True, help="r0,c0,rows,cols")
    mat.add_argument("--logits", required=True)
    mat.set_defaults(func=_cmd_match)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UniapError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
