"""Detection metrics: precision, recall, FScore, AP and mAP.

AP uses 101-point interpolation: the interpolated precision max{p(r'):
r' >= r} is sampled at recalls 0.00, 0.01, ..., 1.00 and averaged.
Matching is greedy per image and class: detections in descending
confidence order claim the unmatched truth with the highest IoU at or
above the threshold; IoU ties go to the lower truth index. Classes with
no ground-truth instances are excluded from mAP.

``gyolo.oracle`` recomputes mAP with an independent exhaustive sweep;
the test suite holds the two within 1e-9 of each other.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GyoloError

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class Detection:
    class_id: int
    confidence: float
    box: tuple[float, float, float, float]  # x1, y1, x2, y2


@dataclass(frozen=True)
class TruthBox:
    class_id: int
    box: tuple[float, float, float, float]


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return inter / union


def match(detections, truths, iou_threshold: float):
    """Greedy per-class matching; returns counts and (det, truth) pairs."""
    order = sorted(range(len(detections)),
                   key=lambda i: (-detections[i].confidence, i))
    matched_truth: set[int] = set()
    pairs: list[tuple[int, int]] = []
    for di in order:
        det = detections[di]
        best_j, best_iou = -1, 0.0
        for j, t in enumerate(truths):
            if j in matched_truth or t.class_id != det.class_id:
                continue
            v = iou(det.box, t.box)
            if v >= iou_threshold and v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0:
            matched_truth.add(best_j)
            pairs.append((di, best_j))
    counts = ConfusionCounts(
        tp=len(pairs),
        fp=len(detections) - len(pairs),
        fn=len(truths) - len(pairs),
    )
    return counts, pairs


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def fscore(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def _class_sweep(preds, truths, class_id: int, iou_threshold: float):
    """Pooled (confidence, is_tp) flags for one class plus its truth count.

    Detections pool across images sorted by descending confidence with
    ties broken by (image index, detection index).
    """
    flagged: list[tuple[float, int, int, bool]] = []
    n_truth = 0
    for img, (dets, gts) in enumerate(zip(preds, truths)):
        cls_dets = [(i, d) for i, d in enumerate(dets) if d.class_id == class_id]
        cls_gts = [t for t in gts if t.class_id == class_id]
        n_truth += len(cls_gts)
        sub = [d for _, d in cls_dets]
        _, pairs = match(sub, cls_gts, iou_threshold)
        tp_local = {di for di, _ in pairs}
        for k, (orig_i, d) in enumerate(cls_dets):
            flagged.append((d.confidence, img, orig_i, k in tp_local))
    flagged.sort(key=lambda rec: (-rec[0], rec[1], rec[2]))
    return [(conf, tp) for conf, _, _, tp in flagged], n_truth


def average_precision(sweep, n_truth: int) -> float:
    """101-point interpolated AP from a confidence-sorted (conf, tp) sweep."""
    if n_truth == 0:
        raise GyoloError("AP undefined for a class with no ground truth")
    if not sweep:
        return 0.0
    tps = np.cumsum([1 if tp else 0 for _, tp in sweep])
    fps = np.cumsum([0 if tp else 1 for _, tp in sweep])
    rec = tps / n_truth
    prec = tps / np.maximum(tps + fps, 1)
    total = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = rec >= r - 1e-12
        total += float(prec[mask].max()) if mask.any() else 0.0
    return total / 101.0


@dataclass
class MetricsReport:
    num_classes: int
    iou_thresholds: tuple[float, ...]
    ap_per_class: dict[int, dict[float, float]]  # class -> threshold -> AP
    map50: float
    map5095: float
    operating_conf: float
    precision: float
    recall: float
    fscore: float
    valid: bool = True
    class_names: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "num_classes": self.num_classes,
            "valid": self.valid,
            "iou_thresholds": list(self.iou_thresholds),
            "map50": self.map50,
            "map5095": self.map5095,
            "operating_conf": self.operating_conf,
            "precision": self.precision,
            "recall": self.recall,
            "fscore": self.fscore,
            "ap_per_class": {
                str(c): {f"{t:.2f}": v for t, v in th.items()}
                for c, th in sorted(self.ap_per_class.items())
            },
        }
        if self.class_names:
            doc["class_names"] = self.class_names
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def evaluate(preds, truths, num_classes: int, iou_thresholds=IOU_THRESHOLDS,
             operating_conf: float = 0.25, class_names=None) -> MetricsReport:
    """Dataset-level report: per-class AP per threshold, mAP50, mAP50:95.

    ``preds``/``truths`` are parallel per-image lists of Detection/TruthBox.
    """
    if len(preds) != len(truths):
        raise GyoloError("predictions and truths must align per image")
    present = sorted({t.class_id for gts in truths for t in gts})
    ap: dict[int, dict[float, float]] = {}
    for c in present:
        ap[c] = {}
        for thr in iou_thresholds:
            sweep, n_truth = _class_sweep(preds, truths, c, thr)
            ap[c][thr] = average_precision(sweep, n_truth)
    valid = bool(present)
    if valid:
        map50 = sum(ap[c][iou_thresholds[0]] for c in present) / len(present)
        map5095 = sum(
            sum(ap[c][t] for t in iou_thresholds) / len(iou_thresholds) for c in present
        ) / len(present)
    else:
        map50 = map5095 = 0.0
    counts = ConfusionCounts()
    for dets, gts in zip(preds, truths):
        kept = [d for d in dets if d.confidence >= operating_conf]
        c, _ = match(kept, gts, 0.5)
        counts.tp += c.tp
        counts.fp += c.fp
        counts.fn += c.fn
    p, r = precision(counts), recall(counts)
    return MetricsReport(
        num_classes=num_classes,
        iou_thresholds=tuple(iou_thresholds),
        ap_per_class=ap,
        map50=map50,
        map5095=map5095,
        operating_conf=operating_conf,
        precision=p,
        recall=r,
        fscore=fscore(p, r),
        valid=valid,
        class_names=list(class_names) if class_names else [],
    )


N_CONF_SAMPLES = 1000


@dataclass
class CurveBundle:
    pr_curves: dict[int, list[tuple[float, float, float]]]  # class -> (conf, p, r)
    fscore_conf: dict[int, list[float]]  # class -> fscore at each threshold
    fscore_mean: list[float]
    thresholds: list[float]

    def pr_csv(self, class_id: int) -> str:
        lines = ["confidence,precision,recall"]
        for conf, p, r in self.pr_curves[class_id]:
            lines.append(f"{conf:.6f},{p:.6f},{r:.6f}")
        return "\n".join(lines) + "\n"

    def fscore_csv(self) -> str:
        classes = sorted(self.fscore_conf)
        header = "threshold," + ",".join(f"class{c}" for c in classes) + ",mean"
        lines = [header]
        for i, t in enumerate(self.thresholds):
            row = [f"{t:.3f}"]
            row += [f"{self.fscore_conf[c][i]:.6f}" for c in classes]
            row.append(f"{self.fscore_mean[i]:.6f}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def curves(preds, truths, iou_threshold: float = 0.5) -> CurveBundle:
    """PR sweep samples per class and FScore over 1000 confidence cuts."""
    present = sorted({t.class_id for gts in truths for t in gts})
    thresholds = [i / N_CONF_SAMPLES for i in range(N_CONF_SAMPLES)]
    pr: dict[int, list[tuple[float, float, float]]] = {}
    fs: dict[int, list[float]] = {}
    for c in present:
        sweep, n_truth = _class_sweep(preds, truths, c, iou_threshold)
        pts = []
        tp = fp = 0
        for conf, is_tp in sweep:
            tp += int(is_tp)
            fp += int(not is_tp)
            pts.append((conf, tp / (tp + fp), tp / n_truth if n_truth else 0.0))
        pr[c] = pts
        row = []
        for t in thresholds:
            k = sum(1 for conf, _ in sweep if conf >= t)
            tp_k = sum(1 for conf, is_tp in sweep if conf >= t and is_tp)
            cc = ConfusionCounts(tp=tp_k, fp=k - tp_k, fn=n_truth - tp_k)
            row.append(fscore(precision(cc), recall(cc)))
        fs[c] = row
    mean = [
        sum(fs[c][i] for c in present) / len(present) if present else 0.0
        for i in range(N_CONF_SAMPLES)
    ]
    return CurveBundle(pr_curves=pr, fscore_conf=fs, fscore_mean=mean,
                       thresholds=thresholds)
