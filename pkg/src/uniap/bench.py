"""Wall-time benchmarking of the pooling pipeline with a determinism check
across worker counts."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

from threadpoolctl import threadpool_limits

from .errors import InvalidParams
from .graph import init_grid_graph
from .pooling import UniapConfig, pool_layer, run_uniap
from .tensor import FeatureMap

# Published per-image time for this algorithm class on datacenter GPUs;
# informational only, never asserted.
REFERENCE_TIME_S = 0.045


@dataclass
class BenchReport:
    workers: int
    repeats: int
    median_s: float
    min_s: float
    median_single_worker_s: float
    speedup_vs_single: float
    per_layer_s: list[tuple[float, float]] = field(default_factory=list)
    outputs_identical: bool = True
    reference_time_s: float = REFERENCE_TIME_S

    def to_dict(self) -> dict:
        return {
            "workers": self.workers,
            "repeats": self.repeats,
            "median_s": self.median_s,
            "min_s": self.min_s,
            "median_single_worker_s": self.median_single_worker_s,
            "speedup_vs_single": self.speedup_vs_single,
            "per_layer_s": [{"tau": t, "seconds": s} for t, s in self.per_layer_s],
            "outputs_identical": self.outputs_identical,
            "reference_time_s": self.reference_time_s,
        }


def _pyramid_bytes(pyramid) -> bytes:
    from .formats import mask_json_text  # local import avoids a cycle

    doc = {
        "height": pyramid.height,
        "width": pyramid.width,
        "levels": [
            {
                "tau": lv.tau,
                "instance": [
                    (pm.mask.bits.tobytes().hex(), pm.level) for pm in lv.instance
                ],
                "semantic": [
                    (pm.mask.bits.tobytes().hex(), pm.level) for pm in lv.semantic
                ],
            }
            for lv in pyramid.levels
        ],
    }
    return mask_json_text(doc).encode()


def bench_run(
    fm: FeatureMap, cfg: UniapConfig, repeats: int, workers: int
) -> BenchReport:
    """Median/min wall time of the full pipeline, a per-layer breakdown, and
    the speedup against a single worker; also verifies that outputs are
    identical across the two worker counts and across repeats."""
    if repeats < 3:
        raise InvalidParams(f"repeats must be >= 3, got {repeats}")

    def timed(w: int) -> tuple[list[float], list[bytes]]:
        times, outputs = [], []
        for _ in range(repeats):
            t0 = time.perf_counter()
            pyramid = run_uniap(fm, cfg, workers=w)
            times.append(time.perf_counter() - t0)
            outputs.append(_pyramid_bytes(pyramid))
        return times, outputs

    times_w, outs_w = timed(workers)
    if workers != 1:
        times_1, outs_1 = timed(1)
    else:
        times_1, outs_1 = times_w, outs_w

    identical = len(set(outs_w + outs_1)) == 1

    per_layer = []
    with threadpool_limits(limits=1, user_api="blas"):
        g = init_grid_graph(fm)
        for tau in cfg.thresholds:
            t0 = time.perf_counter()
            g, _ = pool_layer(g, fm, tau, cfg, workers=workers)
            per_layer.append((tau, time.perf_counter() - t0))

    median_w = statistics.median(times_w)
    median_1 = statistics.median(times_1)
    return BenchReport(
        workers=workers,
        repeats=repeats,
        median_s=median_w,
        min_s=min(times_w),
        median_single_worker_s=median_1,
        speedup_vs_single=(median_1 / median_w) if median_w > 0 else float("inf"),
        per_layer_s=per_layer,
        outputs_identical=identical,
    )
