"""Multi-granular instance and semantic pseudo-masks from dense token
features, via threshold-scheduled graph agglomerative pooling, plus the
Dice-matched query self-distillation loss."""

from . import errors
from .bench import BenchReport, bench_run
from .ccl import connected_components, union_find_oracle
from .estimator import AgglomerativePooling
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
from .graph import (
    Assignment,
    Graph,
    TokenMask,
    apply_assignment,
    init_grid_graph,
    make_fully_connected,
)
from .matching import (
    MatchResult,
    QuerySDConfig,
    crop_and_filter_teacher,
    dice_cost_matrix,
    hungarian_max,
    querysd_grad,
    querysd_loss,
)
from .maskops import CropBox, RleMask, crop_mask, mask_dice, mask_iou, rle_decode, rle_encode
from .pooling import (
    DEFAULT_THRESHOLDS,
    MaskPyramid,
    PseudoMask,
    PyramidLevel,
    UniapConfig,
    coarsen_to_fixpoint,
    dedup_masks,
    edge_similarities,
    pool_layer,
    run_uniap,
    update_features,
)
from .synth import EvalReport, eval_iou, synth_generate
from .tensor import (
    AffinityProfile,
    FeatureMap,
    affinity_profile,
    l2_normalize_rows,
    mean_mask_feature,
    row_softmax,
)

__version__ = "0.1.0"

__all__ = [
    "AffinityProfile",
    "AgglomerativePooling",
    "Assignment",
    "BenchReport",
    "CropBox",
    "DEFAULT_THRESHOLDS",
    "EvalReport",
    "FeatureMap",
    "Graph",
    "MaskPyramid",
    "MatchResult",
    "PseudoMask",
    "PyramidLevel",
    "QuerySDConfig",
    "RleMask",
    "TokenMask",
    "UniapConfig",
    "affinity_profile",
    "apply_assignment",
    "bench_run",
    "coarsen_to_fixpoint",
    "connected_components",
    "crop_and_filter_teacher",
    "crop_mask",
    "dedup_masks",
    "dice_cost_matrix",
    "edge_similarities",
    "errors",
    "eval_iou",
    "hungarian_max",
    "init_grid_graph",
    "l2_normalize_rows",
    "load_config",
    "make_fully_connected",
    "mask_dice",
    "mask_iou",
    "mean_mask_feature",
    "pool_layer",
    "querysd_grad",
    "querysd_loss",
    "read_fmap",
    "read_mask_json",
    "read_masklist_json",
    "render_labelmap_pgm",
    "rle_decode",
    "rle_encode",
    "row_softmax",
    "run_uniap",
    "synth_generate",
    "union_find_oracle",
    "update_features",
    "write_fmap",
    "write_mask_json",
    "write_masklist_json",
]
