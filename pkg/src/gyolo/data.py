"""Dataset ingestion: YOLO-format labels, PPM/PGM images, manifests and
the contrast/luminance augmentation transform.

Label files hold one annotation per line, "class cx cy w h", with
center/size normalized to [0, 1]. Images are binary PPM (P6) or PGM
(P5), 8-bit; grayscale replicates to three channels. A manifest is a
UTF-8 key=value file naming images_dir, labels_dir and the class list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

# GRAZPEDWRI-DX release order; overridable through the manifest names key.
DEFAULT_CLASS_NAMES = (
    "boneanomaly", "bonelesion", "foreignbody", "fracture", "metal",
    "periostealreaction", "pronatorsign", "softtissue", "text",
)


@dataclass(frozen=True)
class GroundTruthBox:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


def parse_label_file(text: str, num_classes: int) -> list[GroundTruthBox]:
    boxes = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise FormatError(f"line {ln}: expected 5 tokens, got {len(tokens)}")
        try:
            cls = int(tokens[0])
        except ValueError:
            raise FormatError(f"line {ln}: class id {tokens[0]!r} is not an integer")
        try:
            cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError as e:
            raise FormatError(f"line {ln}: non-numeric coordinate ({e})")
        if not 0 <= cls < num_classes:
            raise FormatError(f"line {ln}: class id {cls} outside 0..{num_classes - 1}")
        for name, v in (("cx", cx), ("cy", cy)):
            if not 0.0 <= v <= 1.0:
                raise FormatError(f"line {ln}: {name}={v} outside [0, 1]")
        for name, v in (("w", w), ("h", h)):
            if not 0.0 < v <= 1.0:
                raise FormatError(f"line {ln}: {name}={v} outside (0, 1]")
        boxes.append(GroundTruthBox(cls, cx, cy, w, h))
    return boxes


def serialize_labels(boxes) -> str:
    return "".join(
        f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}\n" for b in boxes
    )


def to_pixels(box: GroundTruthBox, width: int, height: int):
    """Corner box in pixels, clipped to the image bounds."""
    x1 = max((box.cx - box.w / 2) * width, 0.0)
    y1 = max((box.cy - box.h / 2) * height, 0.0)
    x2 = min((box.cx + box.w / 2) * width, float(width))
    y2 = min((box.cy + box.h / 2) * height, float(height))
    return x1, y1, x2, y2


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data):
        if data[pos : pos + 1] == b"#":  # comment to end of line
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
        elif data[pos] in b" \t\r\n":
            pos += 1
        else:
            break
    start = pos
    while pos < len(data) and data[pos] not in b" \t\r\n":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of image header")
    return data[start:pos], pos


def load_image(path) -> np.ndarray:
    """Read P5/P6 into a (1, 3, H, W) float32 tensor scaled to [0, 1]."""
    data = Path(path).read_bytes()
    if data[:2] not in (b"P5", b"P6"):
        raise FormatError(f"unsupported image magic {data[:2]!r}, expected P5 or P6")
    magic = data[:2]
    pos = 2
    w_tok, pos = _read_token(data, pos)
    h_tok, pos = _read_token(data, pos)
    max_tok, pos = _read_token(data, pos)
    try:
        width, height, maxval = int(w_tok), int(h_tok), int(max_tok)
    except ValueError:
        raise FormatError("non-numeric image header fields")
    if maxval < 1 or maxval > 255:
        raise FormatError(f"unsupported maxval {maxval}, expected 1..255")
    pos += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"truncated pixel data: have {len(raw)}, need {need}")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    arr = arr.astype(np.float32) / float(maxval)
    if channels == 1:
        arr = np.repeat(arr, 3, axis=2)
    return np.ascontiguousarray(arr.transpose(2, 0, 1)[None])


def write_image(path, tensor: np.ndarray) -> None:
    """Write a (1, 3, H, W) [0, 1] tensor as binary PPM (P6)."""
    if tensor.ndim != 4 or tensor.shape[0] != 1 or tensor.shape[1] != 3:
        raise FormatError(f"expected (1, 3, H, W) tensor, got {tensor.shape}")
    h, w = tensor.shape[2], tensor.shape[3]
    pixels = np.clip(np.rint(tensor[0].transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())


def adjust_contrast_luminance(image: np.ndarray, contrast: float, luminance: float) -> np.ndarray:
    """y = clamp(contrast * (x - 0.5) + 0.5 + luminance, 0, 1); geometry
    (and therefore every label) is unchanged."""
    if contrast <= 0:
        raise FormatError(f"contrast must be positive, got {contrast}")
    # algebraically alpha*(x-0.5)+0.5+beta, folded so alpha=1, beta=0 is a
    # bit-exact no-op
    offset = 0.5 * (1.0 - contrast) + luminance
    out = np.float32(contrast) * image + np.float32(offset)
    return np.clip(out, 0.0, 1.0)


@dataclass
class DatasetManifest:
    images_dir: Path
    labels_dir: Path
    names: tuple[str, ...] = DEFAULT_CLASS_NAMES

    def __post_init__(self):
        if not self.names:
            raise FormatError("manifest class list must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise FormatError("manifest class names must be unique")


@dataclass
class DatasetScan:
    pairs: list[tuple[Path, Path]] = field(default_factory=list)
    unpaired_images: list[Path] = field(default_factory=list)
    unpaired_labels: list[Path] = field(default_factory=list)


def parse_manifest(text: str, base_dir: Path | None = None) -> DatasetManifest:
    values: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"manifest line {ln}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    for key in ("images_dir", "labels_dir"):
        if key not in values:
            raise FormatError(f"manifest is missing {key!r}")
    base = base_dir or Path(".")
    names = DEFAULT_CLASS_NAMES
    if "names" in values:
        names = tuple(n.strip() for n in values["names"].split(",") if n.strip())
    return DatasetManifest(
        images_dir=(base / values["images_dir"]).resolve(),
        labels_dir=(base / values["labels_dir"]).resolve(),
        names=names,
    )


def load_manifest(path) -> DatasetManifest:
    p = Path(path)
    return parse_manifest(p.read_text(encoding="utf-8"), base_dir=p.parent)


IMAGE_SUFFIXES = (".ppm", ".pgm")


def scan_dataset(manifest: DatasetManifest) -> DatasetScan:
    """Pair images to label files by stem; unpaired files are reported."""
    scan = DatasetScan()
    if not manifest.images_dir.is_dir():
        raise FormatError(f"images_dir does not exist: {manifest.images_dir}")
    if not manifest.labels_dir.is_dir():
        raise FormatError(f"labels_dir does not exist: {manifest.labels_dir}")
    labels = {p.stem: p for p in sorted(manifest.labels_dir.iterdir())
              if p.suffix == ".txt"}
    seen = set()
    for img in sorted(manifest.images_dir.iterdir()):
        if img.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        lbl = labels.get(img.stem)
        if lbl is None:
            scan.unpaired_images.append(img)
        else:
            seen.add(img.stem)
            scan.pairs.append((img, lbl))
    scan.unpaired_labels = [p for stem, p in sorted(labels.items()) if stem not in seen]
    return scan
