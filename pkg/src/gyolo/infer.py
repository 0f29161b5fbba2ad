"""Image -> detections pipeline and the single-image timing harness.

Letterboxing keeps aspect ratio with a nearest-neighbor resize (chosen
for bit-reproducibility) and symmetric 114/255 padding. Box decoding
follows the 16-bin integral form: each side distance is the softmax
expectation over bin indices, offset from the cell center and scaled by
the stride. Suppression is class-wise greedy NMS.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ops
from .errors import ShapeError
from .metrics import Detection

PAD_VALUE = 114.0 / 255.0
REG_MAX = 16
DEFAULT_CONF = 0.25
DEFAULT_IOU = 0.45
EVAL_CONF = 0.001
EVAL_IOU = 0.7


@dataclass(frozen=True)
class LetterboxResult:
    tensor: np.ndarray  # (1, 3, S, S) float32 in [0, 1]
    scale: float
    pad: tuple[int, int]  # dx, dy of the top-left content corner
    orig_wh: tuple[int, int]


def _nearest_indices(dst: int, src: int) -> np.ndarray:
    centers = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst)
    return np.clip(np.floor(centers).astype(np.int64), 0, src - 1)


def letterbox(image: np.ndarray, target: int = 640) -> LetterboxResult:
    """Aspect-preserving resize plus centered padding to target x target."""
    ops.require_nchw(image)
    _, c, h, w = image.shape
    if c != 3:
        raise ShapeError(f"letterbox expects 3 channels, got {c}")
    scale = min(target / w, target / h)
    new_w = max(1, int(round(w * scale)))
    new_h = max(1, int(round(h * scale)))
    rows = _nearest_indices(new_h, h)
    cols = _nearest_indices(new_w, w)
    resized = image[:, :, rows][:, :, :, cols]
    dx = (target - new_w) // 2
    dy = (target - new_h) // 2
    out = np.full((1, 3, target, target), PAD_VALUE, dtype=np.float32)
    out[:, :, dy : dy + new_h, dx : dx + new_w] = resized
    return LetterboxResult(out, scale, (dx, dy), (w, h))


def unletterbox_box(box, lb: LetterboxResult):
    """Map a box from network-input pixels back to original-image pixels."""
    dx, dy = lb.pad
    w, h = lb.orig_wh
    x1 = min(max((box[0] - dx) / lb.scale, 0.0), w)
    y1 = min(max((box[1] - dy) / lb.scale, 0.0), h)
    x2 = min(max((box[2] - dx) / lb.scale, 0.0), w)
    y2 = min(max((box[3] - dy) / lb.scale, 0.0), h)
    return x1, y1, x2, y2


def decode_dfl(raw_maps, nc: int, conf_threshold: float,
               strides=(8, 16, 32)) -> list[Detection]:
    """Raw head maps -> thresholded candidates in network-input pixels."""
    candidates: list[Detection] = []
    for fmap, stride in zip(raw_maps, strides):
        n, ch, h, w = fmap.shape
        if ch != 4 * REG_MAX + nc:
            raise ShapeError(f"expected {4 * REG_MAX + nc} channels, got {ch}")
        if n != 1:
            raise ShapeError("decode handles single-image batches")
        box_bins = fmap[0, : 4 * REG_MAX].reshape(4, REG_MAX, h * w)
        cls_logits = fmap[0, 4 * REG_MAX :].reshape(nc, h * w)
        scores = ops.sigmoid(cls_logits)
        best_cls = scores.argmax(axis=0)
        best_score = scores[best_cls, np.arange(h * w)]
        keep = np.flatnonzero(best_score > conf_threshold)
        if keep.size == 0:
            continue
        probs = ops.softmax_lastdim(box_bins[:, :, keep].transpose(0, 2, 1))
        dist = probs @ np.arange(REG_MAX, dtype=np.float32)  # (4, k)
        cy, cx = np.divmod(keep, w)
        ax = (cx + 0.5).astype(np.float32)
        ay = (cy + 0.5).astype(np.float32)
        x1 = (ax - dist[0]) * stride
        y1 = (ay - dist[1]) * stride
        x2 = (ax + dist[2]) * stride
        y2 = (ay + dist[3]) * stride
        for i in range(keep.size):
            candidates.append(Detection(
                class_id=int(best_cls[keep[i]]),
                confidence=float(best_score[keep[i]]),
                box=(float(x1[i]), float(y1[i]), float(x2[i]), float(y2[i])),
            ))
    return candidates


def nms(candidates, iou_threshold: float) -> list[Detection]:
    """Class-wise greedy suppression; output confidence-sorted, ties by
    (class id, input order)."""
    if not candidates:
        return []
    by_class: dict[int, list[int]] = {}
    for i, d in enumerate(candidates):
        by_class.setdefault(d.class_id, []).append(i)
    kept: list[int] = []
    for cls in by_class:
        idx = sorted(by_class[cls], key=lambda i: (-candidates[i].confidence, i))
        boxes = np.array([candidates[i].box for i in idx], dtype=np.float64)
        x1, y1, x2, y2 = boxes.T
        area = np.maximum(x2 - x1, 0) * np.maximum(y2 - y1, 0)
        alive = np.ones(len(idx), dtype=bool)
        for k in range(len(idx)):
            if not alive[k]:
                continue
            kept.append(idx[k])
            rest = alive.copy()
            rest[: k + 1] = False
            if not rest.any():
                continue
            iw = np.minimum(x2[rest], x2[k]) - np.maximum(x1[rest], x1[k])
            ih = np.minimum(y2[rest], y2[k]) - np.maximum(y1[rest], y1[k])
            inter = np.maximum(iw, 0) * np.maximum(ih, 0)
            union = area[rest] + area[k] - inter
            overlap = np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)
            alive[np.flatnonzero(rest)[overlap > iou_threshold]] = False
    kept.sort(key=lambda i: (-candidates[i].confidence, candidates[i].class_id, i))
    return [candidates[i] for i in kept]


def run(model, image: np.ndarray, conf: float = DEFAULT_CONF,
        iou_threshold: float = DEFAULT_IOU, imgsz: int = 640) -> list[Detection]:
    """Full pipeline on one (1, 3, H, W) image tensor in [0, 1]."""
    lb = letterbox(image, imgsz)
    raw = model.forward(lb.tensor)
    cands = decode_dfl(raw, model.nc, conf, model.strides)
    picked = nms(cands, iou_threshold)
    out = []
    for d in picked:
        box = unletterbox_box(d.box, lb)
        if box[2] - box[0] <= 0 or box[3] - box[1] <= 0:
            continue
        out.append(Detection(d.class_id, d.confidence, box))
    return out


@dataclass
class BenchReport:
    runs: int
    imgsz: int
    preprocess_ms: tuple[float, float]  # mean, stdev
    forward_ms: tuple[float, float]
    postprocess_ms: tuple[float, float]

    @property
    def total_ms(self) -> float:
        return self.preprocess_ms[0] + self.forward_ms[0] + self.postprocess_ms[0]

    def to_dict(self):
        return {
            "runs": self.runs,
            "imgsz": self.imgsz,
            "preprocess_ms": {"mean": self.preprocess_ms[0], "stdev": self.preprocess_ms[1]},
            "forward_ms": {"mean": self.forward_ms[0], "stdev": self.forward_ms[1]},
            "postprocess_ms": {"mean": self.postprocess_ms[0], "stdev": self.postprocess_ms[1]},
            "total_ms": self.total_ms,
        }


def _mean_std(xs) -> tuple[float, float]:
    m = sum(xs) / len(xs)
    var = sum((x - m) ** 2 for x in xs) / len(xs)
    return m, var**0.5


def bench(model, imgsz: int = 640, runs: int = 100, warmup: int = 3,
          conf: float = DEFAULT_CONF, iou_threshold: float = DEFAULT_IOU) -> BenchReport:
    """Per-stage wall-clock over ``runs`` repetitions after warmup."""
    rng = np.random.default_rng(0)
    image = rng.random((1, 3, imgsz, imgsz), dtype=np.float32)
    pre, fwd, post = [], [], []
    for it in range(warmup + runs):
        t0 = time.perf_counter()
        lb = letterbox(image, imgsz)
        t1 = time.perf_counter()
        raw = model.forward(lb.tensor)
        t2 = time.perf_counter()
        cands = decode_dfl(raw, model.nc, conf, model.strides)
        nms(cands, iou_threshold)
        t3 = time.perf_counter()
        if it >= warmup:
            pre.append((t1 - t0) * 1e3)
            fwd.append((t2 - t1) * 1e3)
            post.append((t3 - t2) * 1e3)
    return BenchReport(runs, imgsz, _mean_std(pre), _mean_std(fwd), _mean_std(post))
