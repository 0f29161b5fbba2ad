"""Command-line interface.

Exit codes: 0 success, 1 domain error (bad file, missing weight, shape
mismatch), 2 usage error. Every failure prints a single
"error: <reason>" line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import analysis, arch, data, gradcheck, infer, metrics, weights
from .errors import GyoloError


def _add_variant_flags(p: argparse.ArgumentParser, family: bool = True):
    if family:
        p.add_argument("--family", required=True, choices=arch.FAMILIES)
    p.add_argument("--scale", required=True, choices=list("nsmlx"))
    p.add_argument("--nc", type=int, default=9, help="class count (default 9)")


def _cmd_summary(args) -> int:
    graph = arch.make_graph(args.family, args.scale, args.nc)
    rep = analysis.profile(graph, args.imgsz)
    sys.stdout.write(rep.to_json() if args.json else rep.to_table())
    return 0


def _cmd_analyze(args) -> int:
    rep = analysis.compare(args.scale, args.nc, args.imgsz)
    sys.stdout.write(rep.to_json())
    if args.csv:
        rows = ["index,kind_base,params_base,flops_base,kind_ghost,params_ghost,flops_ghost"]
        for nb, ng in zip(rep.base.per_node, rep.ghost.per_node):
            rows.append(f"{nb.index},{nb.kind},{nb.params},{nb.flops},"
                        f"{ng.kind},{ng.params},{ng.flops}")
        Path(args.csv).write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def _cmd_export_arch(args) -> int:
    graph = arch.make_graph(args.family, args.scale, args.nc)
    doc = arch.export_arch(graph, include_params=not args.no_params)
    if args.out:
        Path(args.out).write_text(doc, encoding="utf-8")
    else:
        sys.stdout.write(doc)
    return 0


def _cmd_init_weights(args) -> int:
    graph = arch.make_graph(args.family, args.scale, args.nc)
    container = weights.init_random(graph, seed=args.seed)
    if args.half:
        container = weights.to_half(container)
    weights.save(container, args.out)
    learnable = container.learnable_count()
    print(f"wrote {args.out}: {len(container)} tensors, {learnable:,} learnable elements")
    return 0


def _load_model(args):
    graph = arch.make_graph(args.family, args.scale, args.nc)
    if not Path(args.weights).is_file():
        raise GyoloError(f"weights file not found: {args.weights}")
    # f16 entries upcast to f32 at binding time
    return arch.build(graph, weights=weights.load(args.weights))


def _class_names(args) -> list[str]:
    if getattr(args, "names", None):
        return [n.strip() for n in args.names.split(",") if n.strip()]
    return list(data.DEFAULT_CLASS_NAMES)


def _detections_json(image_name, dets, names) -> str:
    rows = [
        {
            "image": image_name,
            "class_id": d.class_id,
            "class_name": names[d.class_id] if d.class_id < len(names) else str(d.class_id),
            "bbox": [round(v, 3) for v in d.box],
            "confidence": round(d.confidence, 6),
        }
        for d in dets
    ]
    return json.dumps(rows, indent=2) + "\n"


def _cmd_infer(args) -> int:
    model = _load_model(args)
    if not Path(args.image).is_file():
        raise GyoloError(f"image file not found: {args.image}")
    image = data.load_image(args.image)
    dets = infer.run(model, image, conf=args.conf, iou_threshold=args.iou,
                     imgsz=args.imgsz)
    sys.stdout.write(_detections_json(Path(args.image).name, dets, _class_names(args)))
    return 0


def _workers() -> int:
    cap = os.environ.get("GYOLO_THREADS")
    if cap:
        try:
            return max(1, int(cap))
        except ValueError:
            raise GyoloError(f"GYOLO_THREADS must be an integer, got {cap!r}")
    return min(4, os.cpu_count() or 1)


def _cmd_eval(args) -> int:
    model = _load_model(args)
    if not Path(args.manifest).is_file():
        raise GyoloError(f"manifest file not found: {args.manifest}")
    manifest = data.load_manifest(args.manifest)
    scan = data.scan_dataset(manifest)
    if not scan.pairs:
        raise GyoloError(f"no image/label pairs under {manifest.images_dir}")
    for p in scan.unpaired_images:
        print(f"warning: image without label: {p}", file=sys.stderr)
    for p in scan.unpaired_labels:
        print(f"warning: label without image: {p}", file=sys.stderr)

    def process(pair):
        img_path, lbl_path = pair
        image = data.load_image(img_path)
        h, w = image.shape[2], image.shape[3]
        boxes = data.parse_label_file(lbl_path.read_text(encoding="utf-8"),
                                      len(manifest.names))
        gts = [metrics.TruthBox(b.class_id, data.to_pixels(b, w, h)) for b in boxes]
        dets = infer.run(model, image, conf=args.conf, iou_threshold=args.iou,
                         imgsz=args.imgsz)
        return dets, gts

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        results = list(pool.map(process, scan.pairs))
    preds = [r[0] for r in results]
    truths = [r[1] for r in results]
    report = metrics.evaluate(preds, truths, len(manifest.names),
                              operating_conf=args.operating_conf,
                              class_names=list(manifest.names))
    curves = metrics.curves(preds, truths)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "fscore_conf.csv").write_text(curves.fscore_csv(), encoding="utf-8")
    for cls in sorted(curves.pr_curves):
        (out_dir / f"pr_class{cls}.csv").write_text(curves.pr_csv(cls), encoding="utf-8")
    print(f"map50={report.map50:.6f} map5095={report.map5095:.6f} -> {out_dir}")
    return 0


def _cmd_bench(args) -> int:
    graph = arch.make_graph(args.family, args.scale, args.nc)
    if args.weights:
        model = _load_model(args)
    else:
        model = arch.build(graph, seed=args.seed)
    rep = infer.bench(model, imgsz=args.imgsz, runs=args.runs)
    sys.stdout.write(json.dumps(rep.to_dict(), indent=2) + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    reports = gradcheck.check_all(seeds=range(args.seeds))
    if args.json:
        sys.stdout.write(gradcheck.report_json(reports))
    else:
        for r in reports:
            status = "pass" if r.passed else "FAIL"
            print(f"{status} {r.op:<18} max_rel_err={r.max_rel_err:.3e}")
    return 0 if all(r.passed for r in reports) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gyolo",
                                 description="Detector profiling, inference and evaluation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("summary", help="per-node complexity table for one variant")
    _add_variant_flags(p)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_summary)

    p = sub.add_parser("analyze", help="side-by-side family comparison at one scale")
    _add_variant_flags(p, family=False)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--csv", help="write per-node breakdown CSV here")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("export-arch", help="emit the architecture JSON document")
    _add_variant_flags(p)
    p.add_argument("--out")
    p.add_argument("--no-params", action="store_true",
                   help="omit the parameter manifest")
    p.set_defaults(fn=_cmd_export_arch)

    p = sub.add_parser("init-weights", help="write a seeded GWTC container")
    _add_variant_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--half", action="store_true", help="store f16 values")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_init_weights)

    p = sub.add_parser("infer", help="detect objects in one PPM/PGM image")
    _add_variant_flags(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--conf", type=float, default=infer.DEFAULT_CONF)
    p.add_argument("--iou", type=float, default=infer.DEFAULT_IOU)
    p.add_argument("--names", help="comma-separated class names")
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("eval", help="evaluate weights against a dataset manifest")
    _add_variant_flags(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--conf", type=float, default=infer.EVAL_CONF)
    p.add_argument("--iou", type=float, default=infer.EVAL_IOU)
    p.add_argument("--operating-conf", type=float, default=infer.DEFAULT_CONF)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("bench", help="per-stage timing for one variant")
    _add_variant_flags(p)
    p.add_argument("--weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--imgsz", type=int, default=640)
    p.add_argument("--runs", type=int, default=100)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference backward verification")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_gradcheck)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except GyoloError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
