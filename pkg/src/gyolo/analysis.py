"""Analytic complexity profiler: per-node parameter and FLOP counts.

Counts are derived in closed form from the node specs, independently of
block construction, so they can cross-check materialized weight
containers exactly. Conventions:

* params: learnable elements (conv weights, batchnorm gamma/beta,
  biases); batchnorm running statistics are stored but not counted.
* FLOPs: 2 x multiply-accumulates of conv/linear/attention matmuls at
  the propagated spatial sizes, batch 1; elementwise work (activation,
  normalization, pooling, additions) is excluded.
* layers: count of leaf operations executed per forward (convolutions,
  normalizations, activations, pools, resamplings, concatenations,
  residual sums, attention matmul pairs); informational only.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .arch import ArchGraph, make_graph, node_channels
from .blocks import REG_MAX
from .errors import ShapeError
from .weights import size_mb


@dataclass
class NodeProfile:
    index: int
    kind: str
    out_channels: int
    out_hw: tuple[int, int]
    params: int
    flops: int
    layers: int


@dataclass
class ProfileReport:
    family: str
    scale: str
    nc: int
    input_hw: int
    layers: int
    params: int
    gradients: int
    flops: int
    size_mb: float
    per_node: list[NodeProfile]

    def to_json(self) -> str:
        doc = {
            "family": self.family,
            "scale": self.scale,
            "nc": self.nc,
            "input_hw": self.input_hw,
            "layers": self.layers,
            "params": self.params,
            "gradients": self.gradients,
            "flops": self.flops,
            "gflops": self.flops / 1e9,
            "size_mb": round(self.size_mb, 3),
            "per_node": [
                {
                    "index": n.index,
                    "kind": n.kind,
                    "out_channels": n.out_channels,
                    "out_hw": list(n.out_hw),
                    "params": n.params,
                    "flops": n.flops,
                    "layers": n.layers,
                }
                for n in self.per_node
            ],
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_table(self) -> str:
        lines = [
            f"{self.family}-{self.scale}  nc={self.nc}  input={self.input_hw}x{self.input_hw}",
            f"{'idx':>3} {'kind':<10} {'out':>5} {'hw':>9} {'params':>12} {'flops':>15}",
        ]
        for n in self.per_node:
            hw = f"{n.out_hw[0]}x{n.out_hw[1]}"
            lines.append(
                f"{n.index:>3} {n.kind:<10} {n.out_channels:>5} {hw:>9} "
                f"{n.params:>12,} {n.flops:>15,}"
            )
        lines.append(
            f"total: {self.layers} layers, {self.params:,} params, "
            f"{self.gradients:,} gradients, {self.flops / 1e9:.1f} GFLOPs, "
            f"{self.size_mb:.1f} MB (f16)"
        )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "kind", "out_channels", "out_h", "out_w",
                         "params", "flops", "layers"])
        for n in self.per_node:
            writer.writerow([n.index, n.kind, n.out_channels, n.out_hw[0],
                             n.out_hw[1], n.params, n.flops, n.layers])
        return buf.getvalue()


@dataclass
class ComparisonReport:
    base: ProfileReport
    ghost: ProfileReport

    @property
    def param_reduction_pct(self) -> float:
        return 100.0 * (self.base.params - self.ghost.params) / self.base.params

    @property
    def flop_reduction_pct(self) -> float:
        return 100.0 * (self.base.flops - self.ghost.flops) / self.base.flops

    @property
    def size_reduction_pct(self) -> float:
        return 100.0 * (self.base.size_mb - self.ghost.size_mb) / self.base.size_mb

    def to_json(self) -> str:
        doc = {
            "scale": self.base.scale,
            "nc": self.base.nc,
            "input_hw": self.base.input_hw,
            "base": {"family": self.base.family, "params": self.base.params,
                     "flops": self.base.flops, "size_mb": round(self.base.size_mb, 3)},
            "ghost": {"family": self.ghost.family, "params": self.ghost.params,
                      "flops": self.ghost.flops, "size_mb": round(self.ghost.size_mb, 3)},
            "param_reduction_pct": round(self.param_reduction_pct, 2),
            "flop_reduction_pct": round(self.flop_reduction_pct, 2),
            "size_reduction_pct": round(self.size_reduction_pct, 2),
        }
        return json.dumps(doc, indent=2) + "\n"


class _Tally:
    def __init__(self):
        self.params = 0
        self.flops = 0
        self.layers = 0

    def conv(self, ci, co, k, hw, g=1, bn=True, act=True, bias=False):
        self.params += co * (ci // g) * k * k
        self.flops += 2 * co * (ci // g) * k * k * hw[0] * hw[1]
        self.layers += 1
        if bias:
            self.params += co
        if bn:
            self.params += 2 * co  # gamma, beta; running stats not learnable
            self.layers += 1
        if act:
            self.layers += 1

    def matmul(self, rows, inner, cols, batch=1):
        self.flops += 2 * rows * inner * cols * batch
        self.layers += 1

    def op(self, n=1):
        self.layers += n


def _ghost_conv(t: _Tally, ci, co, k, hw):
    h = co // 2
    t.conv(ci, h, k, hw)
    t.conv(h, h, 5, hw, g=h)
    t.op()  # concat


def _c3ghost(t: _Tally, c1, c2, n, hw):
    ch = int(c2 * 0.5)
    t.conv(c1, ch, 1, hw)
    t.conv(c1, ch, 1, hw)
    for _ in range(n):
        mid = ch // 2
        _ghost_conv(t, ch, mid, 1, hw)
        _ghost_conv(t, mid, ch, 1, hw)
        t.op()  # residual add
    t.op()  # concat
    t.conv(2 * ch, c2, 1, hw)


def _bottleneck(t: _Tally, c1, c2, k, e, hw, residual=True):
    ch = int(c2 * e)
    t.conv(c1, ch, k, hw)
    t.conv(ch, c2, k, hw)
    if residual:
        t.op()


def _c3k(t: _Tally, c1, c2, hw):
    ch = int(c2 * 0.5)
    t.conv(c1, ch, 1, hw)
    t.conv(c1, ch, 1, hw)
    for _ in range(2):
        _bottleneck(t, ch, ch, 3, 1.0, hw)
    t.op()
    t.conv(2 * ch, c2, 1, hw)


def _c3k2(t: _Tally, c1, c2, n, c3k, e, hw):
    ch = int(c2 * e)
    t.conv(c1, 2 * ch, 1, hw)
    for _ in range(n):
        if c3k:
            _c3k(t, ch, ch, hw)
        else:
            _bottleneck(t, ch, ch, 3, 0.5, hw)
    t.op()
    t.conv((2 + n) * ch, c2, 1, hw)


def _sppf(t: _Tally, c1, c2, hw):
    ch = c1 // 2
    t.conv(c1, ch, 1, hw)
    t.op(3)  # three chained pools
    t.op()  # concat
    t.conv(4 * ch, c2, 1, hw)


def _c2psa(t: _Tally, c, n, hw):
    ch = c // 2
    t.conv(c, c, 1, hw)
    npos = hw[0] * hw[1]
    for _ in range(n):
        heads = max(1, ch // 64)
        head_dim = ch // heads
        key_dim = head_dim // 2
        t.conv(ch, ch + 2 * heads * key_dim, 1, hw, act=False)
        t.matmul(npos, key_dim, npos, batch=heads)  # scores
        t.op()  # softmax
        t.matmul(head_dim, npos, npos, batch=heads)  # apply attention
        t.conv(ch, ch, 3, hw, g=ch, act=False)  # positional branch
        t.op()  # pe add
        t.conv(ch, ch, 1, hw, act=False)  # projection
        t.op()  # attn residual
        t.conv(ch, 2 * ch, 1, hw)
        t.conv(2 * ch, ch, 1, hw, act=False)
        t.op()  # ffn residual
    t.op()  # concat
    t.conv(c, c, 1, hw)


def _detect(t: _Tally, nc, ch, hws, cls_style):
    c2b = max(16, ch[0] // 4, 4 * REG_MAX)
    c3b = max(ch[0], min(nc, 100))
    for x, hw in zip(ch, hws):
        t.conv(x, c2b, 3, hw)
        t.conv(c2b, c2b, 3, hw)
        t.conv(c2b, 4 * REG_MAX, 1, hw, bn=False, act=False, bias=True)
        if cls_style == "dw":
            t.conv(x, x, 3, hw, g=x)
            t.conv(x, c3b, 1, hw)
            t.conv(c3b, c3b, 3, hw, g=c3b)
            t.conv(c3b, c3b, 1, hw)
        else:
            t.conv(x, c3b, 3, hw)
            t.conv(c3b, c3b, 3, hw)
        t.conv(c3b, nc, 1, hw, bn=False, act=False, bias=True)
        t.op()  # box/class concat


def count_node(node, in_ch, in_hw) -> tuple[_Tally, int, tuple[int, int]]:
    """Tally one node; returns (tally, out_channels, out_hw)."""
    t = _Tally()
    a = node.args
    if node.kind == "Conv":
        hw = (in_hw[0] // a["s"], in_hw[1] // a["s"])
        t.conv(in_ch, a["c2"], a["k"], hw)
        return t, a["c2"], hw
    if node.kind == "GhostConv":
        hw = (in_hw[0] // a["s"], in_hw[1] // a["s"])
        _ghost_conv(t, in_ch, a["c2"], a["k"], hw)
        return t, a["c2"], hw
    if node.kind == "C3k2":
        _c3k2(t, in_ch, a["c2"], a["n"], a["c3k"], a["e"], in_hw)
        return t, a["c2"], in_hw
    if node.kind == "C3Ghost":
        _c3ghost(t, in_ch, a["c2"], a["n"], in_hw)
        return t, a["c2"], in_hw
    if node.kind == "SPPF":
        _sppf(t, in_ch, a["c2"], in_hw)
        return t, a["c2"], in_hw
    if node.kind == "C2PSA":
        _c2psa(t, a["c2"], a["n"], in_hw)
        return t, a["c2"], in_hw
    if node.kind == "Upsample":
        t.op()
        return t, in_ch, (in_hw[0] * 2, in_hw[1] * 2)
    if node.kind == "Concat":
        t.op()
        return t, in_ch, in_hw
    raise ShapeError(f"unknown node kind {node.kind!r}")


def profile(graph: ArchGraph, input_hw: int = 640) -> ProfileReport:
    if input_hw < 32:
        raise ShapeError(f"input size must be >= 32, got {input_hw}")
    chans = node_channels(graph)
    hws: list[tuple[int, int]] = []
    per_node: list[NodeProfile] = []
    total = _Tally()
    for node in graph.nodes:
        if node.kind == "Detect":
            t = _Tally()
            ch = tuple(chans[i] for i in node.inputs)
            in_hws = [hws[i] for i in node.inputs]
            _detect(t, node.args["nc"], ch, in_hws, node.args["cls_style"])
            out_ch, out_hw = 4 * node.args["reg_max"] + node.args["nc"], in_hws[0]
        else:
            if node.kind == "Concat":
                in_ch = sum(chans[i] for i in node.inputs)
                in_hw = hws[node.inputs[0]]
            elif node.inputs[0] >= 0:
                in_ch, in_hw = chans[node.inputs[0]], hws[node.inputs[0]]
            else:
                in_ch, in_hw = 3, (input_hw, input_hw)
            t, out_ch, out_hw = count_node(node, in_ch, in_hw)
        hws.append(out_hw)
        per_node.append(NodeProfile(node.index, node.kind, out_ch, out_hw,
                                    t.params, t.flops, t.layers))
        total.params += t.params
        total.flops += t.flops
        total.layers += t.layers
    return ProfileReport(
        family=graph.family,
        scale=graph.scale,
        nc=graph.nc,
        input_hw=input_hw,
        layers=total.layers,
        params=total.params,
        gradients=total.params,
        flops=total.flops,
        size_mb=size_mb(total.params),
        per_node=per_node,
    )


def count_params(graph: ArchGraph) -> int:
    return profile(graph, 640).params


def count_flops(graph: ArchGraph, input_hw: int = 640) -> int:
    return profile(graph, input_hw).flops


def compare(scale: str, nc: int, input_hw: int = 640) -> ComparisonReport:
    base = profile(make_graph("yolov11", scale, nc), input_hw)
    ghost = profile(make_graph("g-yolov11", scale, nc), input_hw)
    return ComparisonReport(base, ghost)
