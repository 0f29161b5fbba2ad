"""Declarative architecture graphs for both detector families.

A graph is a topologically ordered list of 24 node specs (11 backbone,
12 neck, 1 detect). Widths are the realized per-variant filter counts:
nominal filter schedules are scaled by the variant's width gain, clipped
at the variant's channel ceiling and rounded up to a multiple of 8. The
ghost family halves every nominal filter count of the base family.

``build`` instantiates runnable blocks and binds parameters either from
a weight container or from the seeded deterministic initializer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import blocks, ops
from .errors import FormatError, ShapeError
from .weights import ContainerSource, ParamSource, RandomSource, WeightContainer

FAMILIES = ("yolov11", "g-yolov11")
SCALE_GAINS = {
    # depth gain, width gain, channel ceiling
    "n": (0.50, 0.25, 1024),
    "s": (0.50, 0.50, 1024),
    "m": (0.50, 1.00, 512),
    "l": (1.00, 1.00, 512),
    "x": (1.00, 1.50, 512),
}

# nominal filter schedules (before width scaling); ghost = base halved
_BASE_NOM = {
    "convs": (64, 128, 256, 512, 1024),
    "stages": (256, 512, 512, 1024),
    "head_stages": (512, 256, 512, 1024),
    "head_convs": (256, 512),
    "top": 1024,
}
_GHOST_NOM = {k: tuple(c // 2 for c in v) if isinstance(v, tuple) else v // 2
              for k, v in _BASE_NOM.items()}

STRIDES = (8, 16, 32)


@dataclass(frozen=True)
class NodeSpec:
    index: int
    kind: str
    inputs: tuple[int, ...]
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ArchGraph:
    family: str
    scale: str
    nc: int
    nodes: tuple[NodeSpec, ...]
    detect_sources: tuple[int, int, int]

    @property
    def ghost(self) -> bool:
        return self.family == "g-yolov11"


def scaled_width(nominal: int, scale: str) -> int:
    _, gain, ceil_ch = SCALE_GAINS[scale]
    return int(math.ceil(min(nominal, ceil_ch) * gain / 8) * 8)


def nominal_schedule(family: str) -> dict:
    return dict(_GHOST_NOM if family == "g-yolov11" else _BASE_NOM)


def make_graph(family: str, scale: str, nc: int) -> ArchGraph:
    if family not in FAMILIES:
        raise ShapeError(f"unknown family {family!r}, expected one of {FAMILIES}")
    if scale not in SCALE_GAINS:
        raise ShapeError(f"unknown scale {scale!r}, expected one of n/s/m/l/x")
    if nc < 1:
        raise ShapeError(f"class count must be >= 1, got {nc}")
    ghost = family == "g-yolov11"
    depth, _, _ = SCALE_GAINS[scale]
    rep = max(round(2 * depth), 1)
    nom = nominal_schedule(family)
    w = lambda c: scaled_width(c, scale)
    convs = [w(c) for c in nom["convs"]]
    stages = [w(c) for c in nom["stages"]]
    head_stages = [w(c) for c in nom["head_stages"]]
    head_convs = [w(c) for c in nom["head_convs"]]
    top = w(nom["top"])

    down_kind = "GhostConv" if ghost else "Conv"
    mlx = scale in "mlx"

    def stage_node(i, src, c2, c3k_flag, e):
        if ghost:
            return NodeSpec(i, "C3Ghost", (src,), {"c2": c2, "n": rep, "e": 0.5})
        return NodeSpec(i, "C3k2", (src,),
                        {"c2": c2, "n": rep, "c3k": bool(c3k_flag or mlx), "e": e})

    def down_node(i, src, c2):
        return NodeSpec(i, down_kind, (src,), {"c2": c2, "k": 3, "s": 2})

    nodes = [
        down_node(0, -1, convs[0]),
        down_node(1, 0, convs[1]),
        stage_node(2, 1, stages[0], False, 0.25),
        down_node(3, 2, convs[2]),
        stage_node(4, 3, stages[1], False, 0.25),
        down_node(5, 4, convs[3]),
        stage_node(6, 5, stages[2], True, 0.5),
        down_node(7, 6, convs[4]),
        stage_node(8, 7, stages[3], True, 0.5),
        NodeSpec(9, "SPPF", (8,), {"c2": top, "k": 5}),
        NodeSpec(10, "C2PSA", (9,), {"c2": top, "n": rep}),
        NodeSpec(11, "Upsample", (10,), {}),
        NodeSpec(12, "Concat", (11, 6), {}),
        stage_node(13, 12, head_stages[0], False, 0.5),
        NodeSpec(14, "Upsample", (13,), {}),
        NodeSpec(15, "Concat", (14, 4), {}),
        stage_node(16, 15, head_stages[1], False, 0.5),
        down_node(17, 16, head_convs[0]),
        NodeSpec(18, "Concat", (17, 13), {}),
        stage_node(19, 18, head_stages[2], False, 0.5),
        down_node(20, 19, head_convs[1]),
        NodeSpec(21, "Concat", (20, 10), {}),
        stage_node(22, 21, head_stages[3], True, 0.5),
        NodeSpec(23, "Detect", (16, 19, 22),
                 {"nc": nc, "reg_max": blocks.REG_MAX,
                  "cls_style": "conv" if ghost else "dw"}),
    ]
    for node in nodes:
        for src in node.inputs:
            if src >= node.index:
                raise ShapeError(f"node {node.index} references non-prior node {src}")
    return ArchGraph(family, scale, nc, tuple(nodes), (16, 19, 22))


def node_channels(graph: ArchGraph) -> list[int]:
    """Output channel count of every node (Detect reports 4*reg_max+nc)."""
    out: list[int] = []
    for node in graph.nodes:
        srcs = [out[i] if i >= 0 else 3 for i in node.inputs]
        if node.kind in ("Conv", "GhostConv", "C3k2", "C3Ghost", "SPPF", "C2PSA"):
            out.append(node.args["c2"])
        elif node.kind == "Upsample":
            out.append(srcs[0])
        elif node.kind == "Concat":
            out.append(sum(srcs))
        elif node.kind == "Detect":
            out.append(4 * node.args["reg_max"] + node.args["nc"])
        else:
            raise ShapeError(f"unknown node kind {node.kind!r}")
    return out


class Model:
    """Instantiated graph: blocks with bound parameters plus an executor."""

    def __init__(self, graph: ArchGraph, built: dict[int, object]):
        self.graph = graph
        self._blocks = built
        self.strides = STRIDES
        self.nc = graph.nc

    def forward(self, x: np.ndarray) -> list[np.ndarray]:
        """Run the graph on an NCHW batch, returning the 3 raw head maps."""
        ops.require_nchw(x)
        if x.shape[1] != 3:
            raise ShapeError(f"model input must have 3 channels, got {x.shape[1]}")
        last_use: dict[int, int] = {}
        for node in self.graph.nodes:
            for i in node.inputs:
                if i >= 0:
                    last_use[i] = node.index
        cache: dict[int, np.ndarray] = {}
        result = None
        for node in self.graph.nodes:
            srcs = [cache[i] if i >= 0 else x for i in node.inputs]
            if node.kind == "Concat":
                y = ops.concat_channels(srcs)
            elif node.kind == "Upsample":
                y = ops.upsample_nearest2x(srcs[0])
            elif node.kind == "Detect":
                result = self._blocks[node.index](srcs)
                break
            else:
                y = self._blocks[node.index](srcs[0])
            cache[node.index] = y
            for i in list(cache):
                if last_use.get(i, -1) <= node.index:
                    del cache[i]
        assert result is not None
        return result

    __call__ = forward


def _build_node(node: NodeSpec, c1, src: ParamSource):
    prefix = f"node{node.index}"
    a = node.args
    if node.kind == "Conv":
        return blocks.ConvBlock(src, prefix, c1, a["c2"], a["k"], a["s"])
    if node.kind == "GhostConv":
        return blocks.GhostConvBlock(src, prefix, c1, a["c2"], a["k"], a["s"])
    if node.kind == "C3k2":
        return blocks.C3k2Block(src, prefix, c1, a["c2"], a["n"], a["c3k"], a["e"])
    if node.kind == "C3Ghost":
        return blocks.C3GhostBlock(src, prefix, c1, a["c2"], a["n"], a["e"])
    if node.kind == "SPPF":
        return blocks.SPPFBlock(src, prefix, c1, a["c2"], a["k"])
    if node.kind == "C2PSA":
        if c1 != a["c2"]:
            raise ShapeError(f"C2PSA requires equal in/out channels, got {c1}->{a['c2']}")
        return blocks.C2PSABlock(src, prefix, a["c2"], a["n"])
    if node.kind == "Detect":
        return blocks.DetectHead(src, prefix, a["nc"], tuple(c1), a["cls_style"])
    raise ShapeError(f"unknown node kind {node.kind!r}")


def build(graph: ArchGraph, weights: WeightContainer | None = None, seed: int = 0) -> Model:
    """Instantiate every node; validates weight names/shapes when binding."""
    src: ParamSource = ContainerSource(weights) if weights is not None else RandomSource(seed)
    chans = node_channels(graph)
    built: dict[int, object] = {}
    for node in graph.nodes:
        if node.kind in ("Upsample", "Concat"):
            continue
        if node.kind == "Detect":
            c1 = [chans[i] for i in node.inputs]
        else:
            c1 = chans[node.inputs[0]] if node.inputs[0] >= 0 else 3
        built[node.index] = _build_node(node, c1, src)
    if isinstance(src, ContainerSource):
        extra = src.unconsumed()
        if extra:
            raise ShapeError(
                f"weight container has {len(extra)} unused entries, first: {extra[0]!r}"
            )
    model = Model(graph, built)
    if isinstance(src, RandomSource):
        model.init_container = src.container
    return model


def param_manifest(graph: ArchGraph) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs for every parameter the graph demands."""

    class _Recorder(ParamSource):
        def __init__(self):
            self.seen: list[tuple[str, tuple[int, ...]]] = []

        def take(self, name, shape):
            self.seen.append((name, tuple(int(d) for d in shape)))
            return np.zeros(shape, dtype=np.float32)

    rec = _Recorder()
    chans = node_channels(graph)
    for node in graph.nodes:
        if node.kind in ("Upsample", "Concat"):
            continue
        c1 = [chans[i] for i in node.inputs] if node.kind == "Detect" else (
            chans[node.inputs[0]] if node.inputs[0] >= 0 else 3)
        _build_node(node, c1, rec)
    return rec.seen


ARCH_SCHEMA_VERSION = 1


def export_arch(graph: ArchGraph, include_params: bool = True) -> str:
    """Serialize a graph (and its parameter manifest) to stable JSON."""
    doc = {
        "schema_version": ARCH_SCHEMA_VERSION,
        "family": graph.family,
        "scale": graph.scale,
        "nc": graph.nc,
        "strides": list(STRIDES),
        "detect_sources": list(graph.detect_sources),
        "nodes": [
            {"index": n.index, "kind": n.kind, "inputs": list(n.inputs), "args": n.args}
            for n in graph.nodes
        ],
    }
    if include_params:
        doc["params"] = [
            {"name": name, "shape": list(shape)} for name, shape in param_manifest(graph)
        ]
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def parse_arch(text: str) -> ArchGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid architecture JSON: {e}") from e
    for key in ("schema_version", "family", "scale", "nc", "nodes", "detect_sources"):
        if key not in doc:
            raise FormatError(f"architecture JSON missing key {key!r}")
    if doc["schema_version"] != ARCH_SCHEMA_VERSION:
        raise FormatError(f"unsupported arch schema version {doc['schema_version']}")
    nodes = tuple(
        NodeSpec(n["index"], n["kind"], tuple(n["inputs"]), dict(n["args"]))
        for n in doc["nodes"]
    )
    return ArchGraph(doc["family"], doc["scale"], int(doc["nc"]), nodes,
                     tuple(doc["detect_sources"]))
