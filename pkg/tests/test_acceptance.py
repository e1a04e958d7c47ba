"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""
import json
import math
import time

import numpy as np

import uniap
from uniap import (
    FeatureMap,
    QuerySDConfig,
    TokenMask,
    UniapConfig,
    connected_components,
    dice_cost_matrix,
    edge_similarities,
    eval_iou,
    hungarian_max,
    init_grid_graph,
    l2_normalize_rows,
    pool_layer,
    querysd_grad,
    querysd_loss,
    run_uniap,
    union_find_oracle,
)
from uniap.bench import bench_run
from uniap.cli import main as cli_main
from uniap.synth import synth_generate

from helpers import brute_force_max_matching, flood_fill_connected


def report(num, name, ok, detail=""):
    line = f"ACCEPTANCE {num} ({name}): {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" — {detail}"
    print(f"\n{line}", flush=True)
    return ok


class TestCriterion1PlantedRecovery:
    def test_planted_region_recovery(self, tmp_path, capsys):
        t0 = time.perf_counter()
        fmap, truth, pred = (
            tmp_path / "f.fmap",
            tmp_path / "t.json",
            tmp_path / "p.json",
        )
        assert cli_main([
            "synth", "--h", "32", "--w", "32", "--d", "64", "--regions", "6",
            "--noise", "0.05", "--seed", "42", "--out", str(fmap), "--truth", str(truth),
        ]) == 0
        capsys.readouterr()
        assert cli_main([
            "segment", "--features", str(fmap), "--out", str(pred),
        ]) == 0
        capsys.readouterr()
        assert cli_main(["eval", "--pred", str(pred), "--truth", str(truth)]) == 0
        doc = json.loads(capsys.readouterr().out)
        elapsed = time.perf_counter() - t0
        mean = doc["mean_best_iou"]
        worst = min(r["best_iou"] for r in doc["per_region"])
        ok = mean >= 0.95 and worst >= 0.90 and elapsed <= 5.0
        with capsys.disabled():
            report(1, "planted-region recovery", ok,
                   f"mean-best-IoU {mean:.4f}, worst {worst:.4f}, pipeline {elapsed:.2f}s")
        assert mean >= 0.95
        assert worst >= 0.90
        assert elapsed <= 5.0


class TestCriterion2HierarchySuite:
    def test_hierarchy_invariants_over_100_maps(self, capsys):
        rng = np.random.default_rng(2024)
        cfg = UniapConfig()
        t0 = time.perf_counter()
        violations = 0
        for trial in range(100):
            h = int(rng.integers(4, 25))
            w = int(rng.integers(4, 25))
            d = int(rng.choice([8, 32]))
            if trial % 3 == 0:
                fm, _ = synth_generate(h, w, d, int(rng.integers(2, 6)), 0.15,
                                       int(rng.integers(1 << 30)))
            else:
                data = rng.standard_normal((h * w, d)).astype(np.float32)
                fm = l2_normalize_rows(FeatureMap(h, w, d, data))
            g = init_grid_graph(fm)
            prev = None
            for tau in cfg.thresholds:
                if g.num_edges:
                    scores = edge_similarities(g, fm, cfg)
                    if scores.size and (scores.min() < -1 - 1e-5 or scores.max() > 1 + 1e-5):
                        violations += 1
                g, _ = pool_layer(g, fm, tau, cfg)
                coverage = np.bincount(g.labels, minlength=g.num_nodes)
                if coverage.sum() != h * w or (coverage < 1).any():
                    violations += 1
                for k in range(g.num_nodes):
                    if not flood_fill_connected(g.mask_of(k), h, w):
                        violations += 1
                if prev is not None:
                    for k in range(prev.num_nodes):
                        toks = np.flatnonzero(prev.labels == k)
                        if np.unique(g.labels[toks]).size != 1:
                            violations += 1
                prev = g
            if trial % 10 == 0:
                pyramid = run_uniap(fm, cfg)
                for pm in pyramid.all_masks("instance"):
                    if not flood_fill_connected(pm.mask, h, w):
                        violations += 1
        elapsed = time.perf_counter() - t0
        ok = violations == 0 and elapsed <= 60.0
        with capsys.disabled():
            report(2, "hierarchy suite", ok,
                   f"100 maps, {violations} violations, {elapsed:.1f}s")
        assert violations == 0
        assert elapsed <= 60.0


class TestCriterion3ComponentOracle:
    def test_parallel_labeling_matches_oracle(self, capsys):
        rng = np.random.default_rng(3)
        t0 = time.perf_counter()
        for _ in range(500):
            n = int(rng.integers(1, 513))
            if n >= 2:
                m = int(rng.integers(0, 3 * n))
                edges = rng.integers(0, n, size=(m, 2))
                edges = edges[edges[:, 0] != edges[:, 1]]
            else:
                edges = np.empty((0, 2), dtype=np.int64)
            oracle = union_find_oracle(n, edges).map.tolist()
            outs = [
                connected_components(n, edges, workers=w, min_parallel_nodes=0).map.tolist()
                for w in (1, 2, 8)
            ]
            assert outs[0] == oracle
            assert outs[0] == outs[1] == outs[2]
        elapsed = time.perf_counter() - t0
        ok = elapsed <= 10.0
        with capsys.disabled():
            report(3, "component-labeling oracle", ok,
                   f"500 graphs, workers (1,2,8) identical, {elapsed:.1f}s")
        assert elapsed <= 10.0


class TestCriterion4MatchingOracle:
    def test_hungarian_equals_brute_force(self, capsys):
        rng = np.random.default_rng(4)
        t0 = time.perf_counter()
        for trial in range(200):
            small = int(rng.integers(1, 8))
            large = int(rng.integers(small, 9))
            rows, cols = (small, large) if trial % 2 == 0 else (large, small)
            grid = int(rng.integers(4, 13))
            students = [TokenMask(rng.random(grid) < rng.random()) for _ in range(rows)]
            teachers = [TokenMask(rng.random(grid) < rng.random()) for _ in range(cols)]
            scores = dice_cost_matrix(students, teachers)
            assert hungarian_max(scores).total_dice == brute_force_max_matching(scores)
        elapsed = time.perf_counter() - t0
        ok = elapsed <= 5.0
        with capsys.disabled():
            report(4, "matching oracle", ok, f"200 Dice matrices exact, {elapsed:.1f}s")
        assert elapsed <= 5.0


class TestCriterion5GradientCheck:
    def test_analytic_gradient_vs_finite_differences(self, capsys):
        rng = np.random.default_rng(5)
        cfg = QuerySDConfig(teacher_temp=0.5, student_temp=1.0)
        h = 1e-4
        t0 = time.perf_counter()
        worst = 0.0
        for trial in range(100):
            k = 8 if trial < 50 else 512
            n_pairs = int(rng.integers(1, 11))
            n_students = n_pairs + int(rng.integers(0, 3))
            n_teachers = n_pairs + int(rng.integers(0, 3))
            teacher = rng.standard_normal((n_teachers, k))
            student = rng.standard_normal((n_students, k))
            s_idx = rng.permutation(n_students)[:n_pairs]
            t_idx = rng.permutation(n_teachers)[:n_pairs]
            pairs = list(zip(s_idx.tolist(), t_idx.tolist()))
            grad = querysd_grad(teacher, student, pairs, cfg)
            fd = np.zeros_like(grad)
            for s, t in pairs:
                # central differences of the loss; terms not involving row s
                # are constant and cancel exactly, so only this pair is evaluated
                for c in range(k):
                    up = student[s].copy()
                    up[c] += h
                    down = student[s].copy()
                    down[c] -= h
                    lo = querysd_loss(teacher[t][None], down[None], [(0, 0)], cfg)
                    hi = querysd_loss(teacher[t][None], up[None], [(0, 0)], cfg)
                    fd[s, c] = (hi - lo) / (2 * h)
            rel = np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))
            worst = max(worst, float(rel.max()))
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-4 and elapsed <= 30.0
        with capsys.disabled():
            report(5, "gradient check", ok,
                   f"100 instances, max rel err {worst:.2e}, {elapsed:.1f}s")
        assert worst <= 1e-4
        assert elapsed <= 30.0


class TestCriterion6Runtime:
    def test_runtime_targets(self, capsys):
        cfg = UniapConfig()
        big, _ = synth_generate(64, 64, 768, 8, 0.05, 7)
        rep_big = bench_run(big, cfg, repeats=5, workers=8)
        small, _ = synth_generate(32, 32, 64, 6, 0.05, 42)
        rep_small = bench_run(small, cfg, repeats=5, workers=1)
        ok = (
            rep_big.median_s <= 2.0
            and rep_big.outputs_identical
            and rep_small.median_s <= 0.25
            and rep_big.speedup_vs_single >= 2.0
        )
        with capsys.disabled():
            report(
                6, "runtime target", ok,
                f"64x64 d=768 median {rep_big.median_s:.3f}s @8 workers "
                f"(speedup {rep_big.speedup_vs_single:.2f}x vs 1 worker), "
                f"32x32 d=64 median {rep_small.median_s * 1000:.0f}ms @1 worker, "
                f"outputs identical: {rep_big.outputs_identical}; "
                f"published reference: {rep_big.reference_time_s}s per image "
                f"(informational, hardware-dependent)",
            )
        assert rep_big.median_s <= 2.0
        assert rep_small.median_s <= 0.25
        assert rep_big.outputs_identical
        # unattainable on a 1-CPU host: compute-bound threads cannot beat a
        # single worker without additional cores; see the decisions ledger
        assert rep_big.speedup_vs_single >= 2.0, (
            f"speedup {rep_big.speedup_vs_single:.2f}x < 2x: this host exposes "
            "a single CPU, so the 8-worker pool cannot outrun 1 worker"
        )


class TestCriterion7Determinism:
    def test_segment_byte_identical(self, tmp_path, capsys):
        fmap, truth = tmp_path / "f.fmap", tmp_path / "t.json"
        assert cli_main([
            "synth", "--h", "32", "--w", "32", "--d", "64", "--regions", "6",
            "--noise", "0.05", "--seed", "42", "--out", str(fmap), "--truth", str(truth),
        ]) == 0
        blobs = set()
        runs = [("rep1", 1), ("rep2", 1), ("rep3", 1), ("w4", 4), ("w8", 8)]
        for tag, workers in runs:
            out = tmp_path / f"{tag}.json"
            assert cli_main([
                "segment", "--features", str(fmap), "--out", str(out),
                "--workers", str(workers),
            ]) == 0
            blobs.add(out.read_bytes())
        capsys.readouterr()
        ok = len(blobs) == 1
        with capsys.disabled():
            report(7, "determinism", ok,
                   f"{len(runs)} segment runs across workers (1,1,1,4,8): "
                   f"{len(blobs)} distinct output(s)")
        assert ok


class TestCriterion8AblationDirection:
    def build_contaminated(self, lam=0.45, noise=0.02, seed=0):
        """Four planted regions; the two flanking the top-center boundary share
        a contamination component strong enough to fool pure feature cosine,
        while the clean bottom regions act as third-party voters."""
        h, w, d = 32, 32, 8
        alpha, beta, gamma = np.eye(d)[0], np.eye(d)[1], np.eye(d)[2]
        rng = np.random.default_rng(seed)
        rows = np.zeros((h * w, d))
        region = np.zeros(h * w, dtype=int)
        for r in range(h):
            for c in range(w):
                i = r * w + c
                if r < 16:
                    rows[i] = alpha + lam * (beta if c < 16 else gamma)
                    region[i] = 0 if c < 16 else 1
                else:
                    rows[i] = beta if c < 16 else gamma
                    region[i] = 2 if c < 16 else 3
        rows += rng.normal(0, noise / math.sqrt(d), rows.shape)
        fm = l2_normalize_rows(FeatureMap(h, w, d, rows.astype(np.float32)))
        return fm, [TokenMask(region == k) for k in range(4)]

    def test_blended_weights_beat_feature_only(self, capsys):
        fm, truth = self.build_contaminated()
        blended = eval_iou(run_uniap(fm, UniapConfig()), truth).mean_best_iou
        feature_only = eval_iou(
            run_uniap(fm, UniapConfig(omega_f=1.0, omega_s=0.0)), truth
        ).mean_best_iou
        ok = blended >= feature_only
        with capsys.disabled():
            report(8, "ablation direction", ok,
                   f"(0.6, 0.4) mean-best-IoU {blended:.4f} vs (1.0, 0.0) {feature_only:.4f}")
        assert blended >= feature_only
