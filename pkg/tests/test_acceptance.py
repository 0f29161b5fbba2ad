"""Acceptance gate: one test per release criterion, each printing a
pass/fail line (run with -s to see them inline)."""

import json
import time

import numpy as np
import pytest

from gyolo import analysis, arch, gradcheck, infer, metrics, oracle, ops, weights
from tests.test_metrics import random_instance

PAPER_PARAMS_M = {
    ("yolov11", "n"): 2.591, ("yolov11", "s"): 9.431, ("yolov11", "m"): 20.095,
    ("yolov11", "l"): 25.317, ("yolov11", "x"): 56.884,
    ("g-yolov11", "n"): 0.676, ("g-yolov11", "s"): 2.039, ("g-yolov11", "m"): 7.202,
    ("g-yolov11", "l"): 7.794, ("g-yolov11", "x"): 16.920,
}
PAPER_GFLOPS = {
    ("yolov11", "n"): 6.4, ("yolov11", "s"): 21.6, ("yolov11", "m"): 68.2,
    ("yolov11", "l"): 87.3, ("yolov11", "x"): 195.5,
    ("g-yolov11", "n"): 2.3, ("g-yolov11", "s"): 6.1, ("g-yolov11", "m"): 20.1,
    ("g-yolov11", "l"): 21.0, ("g-yolov11", "x"): 44.5,
}
VARIANTS = list(PAPER_PARAMS_M)


def report(name: str, ok: bool, detail: str = ""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" - {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_parameter_count_reproduction():
    t0 = time.perf_counter()
    worst = 0.0
    for family, scale in VARIANTS:
        got = analysis.count_params(arch.make_graph(family, scale, 9))
        target = PAPER_PARAMS_M[(family, scale)] * 1e6
        worst = max(worst, abs(got - target) / target)
    dt = time.perf_counter() - t0
    report("parameter counts within 1% for all 10 variants", worst < 0.01,
           f"worst deviation {worst * 100:.3f}%, {dt:.2f}s")
    assert dt < 1.0


def test_self_consistency_analytic_vs_materialized():
    t0 = time.perf_counter()
    for family, scale in VARIANTS:
        graph = arch.make_graph(family, scale, 9)
        container = weights.init_random(graph, seed=0)
        if analysis.count_params(graph) != container.learnable_count():
            report("analytic equals materialized learnable count", False,
                   f"{family}-{scale}")
    dt = time.perf_counter() - t0
    report("analytic equals materialized learnable count (exact, 10/10)",
           True, f"{dt:.1f}s")
    assert dt < 10.0


def test_flops_reproduction():
    t0 = time.perf_counter()
    worst = 0.0
    for family, scale in VARIANTS:
        got = analysis.count_flops(arch.make_graph(family, scale, 9), 640)
        target = PAPER_GFLOPS[(family, scale)] * 1e9
        worst = max(worst, abs(got - target) / target)
    dt = time.perf_counter() - t0
    report("FLOPs at 640 within 5% for all 10 variants", worst < 0.05,
           f"worst deviation {worst * 100:.2f}%, {dt:.2f}s")
    assert dt < 1.0


def test_reduction_ratio_claims():
    m = analysis.compare("m", 9)
    x = analysis.compare("x", 9)
    l = analysis.compare("l", 9)
    ok = (abs(m.param_reduction_pct - 64.2) <= 1.0
          and abs(x.flop_reduction_pct - 77.2) <= 1.0
          and abs(l.size_reduction_pct - 68.7) <= 5.0)
    report("reduction ratios (m params 64.2%, x flops 77.2%, l size 68.7%)", ok,
           f"got {m.param_reduction_pct:.1f}% / {x.flop_reduction_pct:.1f}% / "
           f"{l.size_reduction_pct:.1f}%")


def test_metric_oracle_equivalence_200_instances():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    worst = 0.0
    while checked < 200:
        preds, truths = random_instance(rng)
        if not any(truths):
            continue
        rep = metrics.evaluate(preds, truths, 3)
        m50, m5095 = oracle.oracle_map(preds, truths, metrics.IOU_THRESHOLDS)
        worst = max(worst, abs(rep.map50 - m50), abs(rep.map5095 - m5095))
        checked += 1
    dt = time.perf_counter() - t0
    report("mAP equals brute-force oracle on 200 random instances",
           worst < 1e-9, f"worst |delta| {worst:.2e}, {dt:.1f}s")
    assert dt < 30.0


def test_perfect_prediction_fixture_scores_one():
    rng = np.random.default_rng(1)
    preds, truths = [], []
    for _ in range(3):
        dets, gts = [], []
        for _ in range(4):
            x1, y1 = rng.uniform(0, 60, 2)
            w, h = rng.uniform(5, 30, 2)
            cls = int(rng.integers(0, 3))
            box = (x1, y1, x1 + w, y1 + h)
            gts.append(metrics.TruthBox(cls, box))
            dets.append(metrics.Detection(cls, float(rng.uniform(0.3, 1.0)), box))
        preds.append(dets)
        truths.append(gts)
    rep = metrics.evaluate(preds, truths, 3)
    report("perfect-prediction fixture yields map50 = map5095 = 1.0",
           rep.map50 == 1.0 and rep.map5095 == 1.0,
           f"map50={rep.map50}, map5095={rep.map5095}")


def test_ap_monotonicity_50_datasets():
    rng = np.random.default_rng(77)
    bad = 0
    for _ in range(50):
        preds, truths = random_instance(rng)
        if not any(truths):
            continue
        rep = metrics.evaluate(preds, truths, 3)
        if rep.map50 < rep.map5095 - 1e-12:
            bad += 1
    report("map50 >= map5095 on 50 random datasets", bad == 0, f"{bad} violations")


def test_gradient_checks():
    t0 = time.perf_counter()
    reports = gradcheck.check_all(seeds=range(5))
    ok = all(r.passed for r in reports)
    worst = max(r.max_rel_err for r in reports)
    control = gradcheck.check("GhostConv", seed=0, corrupt=True)
    dt = time.perf_counter() - t0
    report("gradient checks pass at 1e-4 (5 seeds) and sign-flip control fails",
           ok and not control.passed, f"worst rel err {worst:.2e}, {dt:.1f}s")
    assert dt < 60.0


def test_structural_invariants():
    # 640 probe: every variant emits strides 8/16/32 with 4*16+nc channels
    for family, scale in VARIANTS:
        graph = arch.make_graph(family, scale, 9)
        model = arch.build(graph, seed=0)
        maps = model.forward(np.zeros((1, 3, 640, 640), dtype=np.float32))
        shapes = [m.shape for m in maps]
        want = [(1, 73, 80, 80), (1, 73, 40, 40), (1, 73, 20, 20)]
        if shapes != want:
            report("640 probe shapes", False, f"{family}-{scale}: {shapes}")
    report("640 probe P3/P4/P5 maps are 80^2/40^2/20^2 x 73ch for all 10", True)

    x = np.random.default_rng(3).standard_normal((1, 8, 20, 20)).astype(np.float32)
    p5 = lambda t: ops.maxpool2d(t, 5, stride=1, padding=2)
    chained = p5(p5(p5(x)))
    parallel = ops.maxpool2d(x, 13, stride=1, padding=6)
    report("SPPF chained pooling equals parallel pooling bit-exactly",
           np.array_equal(chained, parallel))

    base = arch.nominal_schedule("yolov11")
    ghost = arch.nominal_schedule("g-yolov11")
    halved = all(
        tuple(c // 2 for c in base[k]) == ghost[k] if isinstance(base[k], tuple)
        else base[k] // 2 == ghost[k]
        for k in base
    )
    report("filter-halving invariant exact across the nominal schedules", halved)

    rng = np.random.default_rng(9)
    violations = 0
    for _ in range(1000):
        n = int(rng.integers(1, 30))
        cands = []
        for i in range(n):
            x1, y1 = rng.uniform(0, 64, 2)
            w, h = rng.uniform(2, 30, 2)
            cands.append(metrics.Detection(int(rng.integers(0, 4)),
                                           float(rng.uniform(0.01, 1.0)),
                                           (x1, y1, x1 + w, y1 + h)))
        thr = float(rng.uniform(0.2, 0.8))
        kept = infer.nms(cands, thr)
        if not {id(k) for k in kept} <= {id(c) for c in cands}:
            violations += 1
        confs = [k.confidence for k in kept]
        if confs != sorted(confs, reverse=True):
            violations += 1
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                if (kept[i].class_id == kept[j].class_id
                        and metrics.iou(kept[i].box, kept[j].box) > thr + 1e-9):
                    violations += 1
    report("NMS subset/IoU-bound/sort properties on 1000 random sets",
           violations == 0, f"{violations} violations")


def test_eval_determinism_byte_identical(tmp_path):
    from gyolo import cli, data

    root = tmp_path
    (root / "images").mkdir()
    (root / "labels").mkdir()
    graph = arch.make_graph("g-yolov11", "n", 3)
    wpath = root / "w.gwtc"
    weights.save(weights.init_random(graph, seed=0), wpath)
    model = arch.build(graph, weights=weights.load(wpath))
    rng = np.random.default_rng(11)
    for i in range(3):
        h, w = int(rng.integers(60, 120)), int(rng.integers(60, 120))
        img = rng.random((1, 3, h, w)).astype(np.float32)
        data.write_image(root / "images" / f"im{i}.ppm", img)
        dets = infer.run(model, data.load_image(root / "images" / f"im{i}.ppm"),
                         conf=infer.EVAL_CONF, iou_threshold=infer.EVAL_IOU, imgsz=128)
        boxes = [data.GroundTruthBox(
            d.class_id,
            min(max((d.box[0] + d.box[2]) / 2 / w, 0.0), 1.0),
            min(max((d.box[1] + d.box[3]) / 2 / h, 0.0), 1.0),
            min((d.box[2] - d.box[0]) / w, 1.0),
            min((d.box[3] - d.box[1]) / h, 1.0)) for d in dets]
        (root / "labels" / f"im{i}.txt").write_text(data.serialize_labels(boxes))
    manifest = root / "data.manifest"
    manifest.write_text("images_dir=images\nlabels_dir=labels\nnames=a,b,c\n")

    blobs = []
    for i in range(2):
        out_dir = root / f"run{i}"
        code = cli.main(["eval", "--family", "g-yolov11", "--scale", "n", "--nc", "3",
                         "--weights", str(wpath), "--manifest", str(manifest),
                         "--out-dir", str(out_dir), "--imgsz", "128"])
        assert code == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out_dir.iterdir())})
    identical = blobs[0] == blobs[1]
    mets = json.loads(blobs[0]["metrics.json"].decode())
    report("two full eval runs produce byte-identical JSON/CSV",
           identical, f"map50={mets['map50']}")


# pair-specific probe sizes: compute-dominated for the bigger variants so
# interpreter overhead cannot mask the FLOP gap
BENCH_SIZES = {"n": 192, "s": 192, "m": 160, "l": 160, "x": 160}


def test_efficiency_ordering_forward_wallclock():
    lines = []
    ok = True
    for scale in "nsmlx":
        size = BENCH_SIZES[scale]
        means = {}
        for family in ("yolov11", "g-yolov11"):
            model = arch.build(arch.make_graph(family, scale, 9), seed=0)
            rep = infer.bench(model, imgsz=size, runs=100, warmup=3)
            means[family] = rep.forward_ms[0]
        ghost, base = means["g-yolov11"], means["yolov11"]
        ok = ok and ghost <= base
        lines.append(f"{scale}@{size}: ghost {ghost:.1f}ms vs base {base:.1f}ms")
    report("ghost forward wall-clock <= base for every scale (100 runs)",
           ok, "; ".join(lines))
