"""Brute-force mAP reference for small instances.

Deliberately naive, pure-Python re-derivation of the evaluation
pipeline, kept free of any code shared with ``gyolo.metrics`` so the
two can cross-check each other. Same protocol semantics: greedy
highest-IoU matching per image and class (confidence order, IoU ties to
the lower truth index), detections pooled by (confidence desc, image,
input order), 101-point interpolated AP, classes without ground truth
excluded from the mean.
"""

from __future__ import annotations


def _overlap(a, b) -> float:
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0:
        return 0.0
    return inter / union


def _flags_for_class(preds, truths, cls, thr):
    """Per-detection TP flags for one class, pooled across images."""
    pooled = []
    truth_total = 0
    for img_idx in range(len(preds)):
        dets = [(i, d) for i, d in enumerate(preds[img_idx]) if d.class_id == cls]
        gts = [t for t in truths[img_idx] if t.class_id == cls]
        truth_total += len(gts)
        taken = [False] * len(gts)
        dets_by_conf = sorted(dets, key=lambda rec: (-rec[1].confidence, rec[0]))
        verdicts = {}
        for orig_i, det in dets_by_conf:
            choice = -1
            choice_iou = 0.0
            for j in range(len(gts)):
                if taken[j]:
                    continue
                v = _overlap(det.box, gts[j].box)
                if v >= thr and v > choice_iou:
                    choice = j
                    choice_iou = v
            if choice >= 0:
                taken[choice] = True
                verdicts[orig_i] = True
            else:
                verdicts[orig_i] = False
        for orig_i, det in dets:
            pooled.append((det.confidence, img_idx, orig_i, verdicts[orig_i]))
    pooled.sort(key=lambda rec: (-rec[0], rec[1], rec[2]))
    return [rec[3] for rec in pooled], truth_total


def _ap_101(flags, truth_total) -> float:
    if not flags:
        return 0.0
    recalls = []
    precisions = []
    tp = 0
    for rank, is_tp in enumerate(flags, start=1):
        if is_tp:
            tp += 1
        recalls.append(tp / truth_total)
        precisions.append(tp / rank)
    acc = 0.0
    for step in range(101):
        r = step / 100.0
        best = 0.0
        for k in range(len(flags)):
            if recalls[k] >= r - 1e-12 and precisions[k] > best:
                best = precisions[k]
        acc += best
    return acc / 101.0


def oracle_map(preds, truths, iou_thresholds) -> tuple[float, float]:
    """(mAP at the first threshold, mAP averaged over all thresholds)."""
    classes = sorted({t.class_id for img in truths for t in img})
    if not classes:
        return 0.0, 0.0
    ap_first = []
    ap_mean = []
    for cls in classes:
        per_thr = []
        for thr in iou_thresholds:
            flags, total = _flags_for_class(preds, truths, cls, thr)
            per_thr.append(_ap_101(flags, total))
        ap_first.append(per_thr[0])
        ap_mean.append(sum(per_thr) / len(per_thr))
    return sum(ap_first) / len(classes), sum(ap_mean) / len(classes)


def oracle_best_fscore_threshold(preds, truths, thresholds, iou=0.5):
    """Exhaustive scan for the confidence cut maximizing mean FScore."""
    classes = sorted({t.class_id for img in truths for t in img})
    best_t, best_f = thresholds[0], -1.0
    for t in thresholds:
        scores = []
        for cls in classes:
            flags_conf, total = _flags_for_class_conf(preds, truths, cls, iou)
            tp = sum(1 for conf, ok in flags_conf if conf >= t and ok)
            npred = sum(1 for conf, _ in flags_conf if conf >= t)
            p = tp / npred if npred else 0.0
            r = tp / total if total else 0.0
            scores.append(2 * p * r / (p + r) if p + r else 0.0)
        f = sum(scores) / len(scores) if scores else 0.0
        if f > best_f:
            best_t, best_f = t, f
    return best_t, best_f


def _flags_for_class_conf(preds, truths, cls, thr):
    flags, total = _flags_for_class(preds, truths, cls, thr)
    pooled = []
    for img_idx in range(len(preds)):
        for i, d in enumerate(preds[img_idx]):
            if d.class_id == cls:
                pooled.append((d.confidence, img_idx, i))
    pooled.sort(key=lambda rec: (-rec[0], rec[1], rec[2]))
    return [(conf, ok) for (conf, _, _), ok in zip(pooled, flags)], total
