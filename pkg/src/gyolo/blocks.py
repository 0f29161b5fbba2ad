"""Composite network blocks: Conv, GhostConv, GhostBottleneck, C3Ghost,
Bottleneck, C3k, C3k2, SPPF, C2PSA and the detection head.

Blocks own their parameters as plain float32 arrays pulled from a
``ParamSource`` under a stable name prefix ("node{i}.{path}.{role}").
They are immutable after construction and their forward methods are pure,
so a built model can serve concurrent callers.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .errors import ShapeError
from .weights import ParamSource

BN_EPS = 1e-3


class ConvBlock:
    """conv2d -> batchnorm (inference form) -> optional SiLU."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, k: int = 1,
                 s: int = 1, g: int = 1, act: bool = True):
        self.c1, self.c2, self.k, self.s, self.g, self.act = c1, c2, k, s, g, act
        self.weight = src.take(f"{prefix}.conv.weight", (c2, c1 // g, k, k))
        self.gamma = src.take(f"{prefix}.bn.gamma", (c2,))
        self.beta = src.take(f"{prefix}.bn.beta", (c2,))
        self.mean = src.take(f"{prefix}.bn.mean", (c2,))
        self.var = src.take(f"{prefix}.bn.var", (c2,))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = ops.conv2d(x, self.weight, stride=self.s, padding=self.k // 2, groups=self.g)
        y = ops.batchnorm_infer(y, self.gamma, self.beta, self.mean, self.var, BN_EPS)
        return ops.silu(y) if self.act else y


class BareConv:
    """1x1 convolution with bias and no normalization (head outputs)."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int):
        self.weight = src.take(f"{prefix}.weight", (c2, c1, 1, 1))
        self.bias = src.take(f"{prefix}.bias", (c2,))

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias)


class GhostConvBlock:
    """Half the outputs from a dense conv, half from a cheap 5x5 depthwise.

    The primary conv carries the configured kernel/stride (1x1 s1 inside
    bottlenecks, 3x3 s2 when used as a downsampler); the cheap conv always
    refines the intrinsic half at stride 1.
    """

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, k: int = 1,
                 s: int = 1, act: bool = True):
        if c2 % 2:
            raise ShapeError(f"ghost conv output channels must be even, got {c2}")
        self.c1, self.c2 = c1, c2
        h = c2 // 2
        self.primary = ConvBlock(src, f"{prefix}.primary", c1, h, k, s, act=act)
        self.cheap = ConvBlock(src, f"{prefix}.cheap", h, h, 5, 1, g=h, act=act)

    def __call__(self, x):
        y = self.primary(x)
        return ops.concat_channels([y, self.cheap(y)])


class GhostBottleneck:
    """expand ghost conv -> reduce ghost conv, summed with the shortcut.

    Only the stride-1, equal-width form appears in these models, so the
    shortcut is the identity and the optional depthwise stage is absent.
    """

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int):
        if c1 != c2:
            raise ShapeError("ghost bottleneck requires c1 == c2 at stride 1")
        mid = c2 // 2
        self.expand = GhostConvBlock(src, f"{prefix}.expand", c1, mid, 1, 1)
        self.reduce = GhostConvBlock(src, f"{prefix}.reduce", mid, c2, 1, 1, act=False)

    def __call__(self, x):
        return ops.add(self.reduce(self.expand(x)), x)


class BottleneckBlock:
    """Two stacked convs with an optional residual sum."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int,
                 shortcut: bool = True, k=(3, 3), e: float = 0.5):
        ch = int(c2 * e)
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c1, ch, k[0])
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", ch, c2, k[1])
        self.residual = shortcut and c1 == c2

    def __call__(self, x):
        y = self.cv2(self.cv1(x))
        return ops.add(x, y) if self.residual else y


class C3kBlock:
    """C3-style split block whose body bottlenecks use 3x3 kernels."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, n: int = 2):
        ch = int(c2 * 0.5)
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c1, ch, 1)
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", c1, ch, 1)
        self.cv3 = ConvBlock(src, f"{prefix}.cv3", 2 * ch, c2, 1)
        self.m = [BottleneckBlock(src, f"{prefix}.m{j}", ch, ch, True, (3, 3), 1.0)
                  for j in range(n)]

    def __call__(self, x):
        y = self.cv1(x)
        for b in self.m:
            y = b(y)
        return self.cv3(ops.concat_channels([y, self.cv2(x)]))


class C3k2Block:
    """CSP block with a running concatenation of unit outputs."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, n: int = 1,
                 c3k: bool = False, e: float = 0.5):
        self.ch = int(c2 * e)
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c1, 2 * self.ch, 1)
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", (2 + n) * self.ch, c2, 1)
        if c3k:
            self.m = [C3kBlock(src, f"{prefix}.m{j}", self.ch, self.ch) for j in range(n)]
        else:
            self.m = [BottleneckBlock(src, f"{prefix}.m{j}", self.ch, self.ch)
                      for j in range(n)]

    def __call__(self, x):
        split = self.cv1(x)
        ys = [split[:, : self.ch], split[:, self.ch :]]
        for unit in self.m:
            ys.append(unit(ys[-1]))
        return self.cv2(ops.concat_channels(ys))


class C3GhostBlock:
    """C3 split block whose body units are ghost bottlenecks."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, n: int = 1,
                 e: float = 0.5):
        ch = int(c2 * e)
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c1, ch, 1)
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", c1, ch, 1)
        self.cv3 = ConvBlock(src, f"{prefix}.cv3", 2 * ch, c2, 1)
        self.m = [GhostBottleneck(src, f"{prefix}.m{j}", ch, ch) for j in range(n)]

    def __call__(self, x):
        y = self.cv1(x)
        for b in self.m:
            y = b(y)
        return self.cv3(ops.concat_channels([y, self.cv2(x)]))


class SPPFBlock:
    """Three chained 5x5 stride-1 max pools, pyramid concatenated."""

    def __init__(self, src: ParamSource, prefix: str, c1: int, c2: int, k: int = 5):
        ch = c1 // 2
        self.k = k
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c1, ch, 1)
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", 4 * ch, c2, 1)

    def __call__(self, x):
        ys = [self.cv1(x)]
        for _ in range(3):
            ys.append(ops.maxpool2d(ys[-1], self.k, stride=1, padding=self.k // 2))
        return self.cv2(ops.concat_channels(ys))


class AttentionBlock:
    """Multi-head self-attention over flattened spatial positions."""

    def __init__(self, src: ParamSource, prefix: str, dim: int):
        self.dim = dim
        self.heads = max(1, dim // 64)
        self.head_dim = dim // self.heads
        self.key_dim = self.head_dim // 2
        qkv_out = dim + 2 * self.heads * self.key_dim
        self.qkv = ConvBlock(src, f"{prefix}.qkv", dim, qkv_out, 1, act=False)
        self.proj = ConvBlock(src, f"{prefix}.proj", dim, dim, 1, act=False)
        self.pe = ConvBlock(src, f"{prefix}.pe", dim, dim, 3, g=dim, act=False)

    def _split_qkv(self, x):
        n, c, h, w = x.shape
        qkv = self.qkv(x).reshape(n, self.heads, 2 * self.key_dim + self.head_dim, h * w)
        q = qkv[:, :, : self.key_dim]
        k = qkv[:, :, self.key_dim : 2 * self.key_dim]
        v = qkv[:, :, 2 * self.key_dim :]
        return q, k, v

    def attn_weights(self, x) -> np.ndarray:
        """Row-stochastic attention matrix (n, heads, hw, hw)."""
        q, k, _ = self._split_qkv(x)
        scores = ops.matmul_batched(q.transpose(0, 1, 3, 2), k) * self.key_dim**-0.5
        return ops.softmax_lastdim(scores)

    def __call__(self, x):
        n, c, h, w = x.shape
        q, k, v = self._split_qkv(x)
        attn = ops.softmax_lastdim(
            ops.matmul_batched(q.transpose(0, 1, 3, 2), k) * self.key_dim**-0.5
        )
        out = ops.matmul_batched(v, attn.transpose(0, 1, 3, 2)).reshape(n, c, h, w)
        out = ops.add(out, self.pe(np.ascontiguousarray(v.reshape(n, c, h, w))))
        return self.proj(out)


class PSAUnit:
    """Residual attention followed by a residual 1x1 feed-forward pair."""

    def __init__(self, src: ParamSource, prefix: str, c: int):
        self.attn = AttentionBlock(src, f"{prefix}.attn", c)
        self.ffn1 = ConvBlock(src, f"{prefix}.ffn1", c, 2 * c, 1)
        self.ffn2 = ConvBlock(src, f"{prefix}.ffn2", 2 * c, c, 1, act=False)

    def __call__(self, x):
        x = ops.add(x, self.attn(x))
        return ops.add(x, self.ffn2(self.ffn1(x)))


class C2PSABlock:
    """CSP wrapper around a stack of PSA units on the attended half."""

    def __init__(self, src: ParamSource, prefix: str, c: int, n: int = 1):
        self.ch = c // 2
        self.cv1 = ConvBlock(src, f"{prefix}.cv1", c, 2 * self.ch, 1)
        self.cv2 = ConvBlock(src, f"{prefix}.cv2", 2 * self.ch, c, 1)
        self.m = [PSAUnit(src, f"{prefix}.m{j}", self.ch) for j in range(n)]

    def __call__(self, x):
        split = self.cv1(x)
        a = split[:, : self.ch]
        b = np.ascontiguousarray(split[:, self.ch :])
        for unit in self.m:
            b = unit(b)
        return self.cv2(ops.concat_channels([a, b]))


REG_MAX = 16


class DetectHead:
    """Anchor-free head emitting 4*reg_max + nc channels per scale.

    The class branch has two layouts. The lightweight one pairs a
    depthwise 3x3 with a 1x1 at each stage ("dw"); the older one stacks
    two full 3x3 convs ("conv"). The ghost family ships with the older
    layout, which is what its published parameter totals require.
    """

    def __init__(self, src: ParamSource, prefix: str, nc: int, ch: tuple[int, int, int],
                 cls_style: str = "dw"):
        if cls_style not in ("dw", "conv"):
            raise ShapeError(f"unknown class-branch style {cls_style!r}")
        self.nc = nc
        self.ch = tuple(ch)
        self.no = 4 * REG_MAX + nc
        c2b = max(16, ch[0] // 4, 4 * REG_MAX)
        c3b = max(ch[0], min(nc, 100))
        self.box = []
        self.cls = []
        for i, x in enumerate(ch):
            self.box.append((
                ConvBlock(src, f"{prefix}.box{i}.c1", x, c2b, 3),
                ConvBlock(src, f"{prefix}.box{i}.c2", c2b, c2b, 3),
                BareConv(src, f"{prefix}.box{i}.final", c2b, 4 * REG_MAX),
            ))
            if cls_style == "dw":
                self.cls.append((
                    ConvBlock(src, f"{prefix}.cls{i}.dw1", x, x, 3, g=x),
                    ConvBlock(src, f"{prefix}.cls{i}.pw1", x, c3b, 1),
                    ConvBlock(src, f"{prefix}.cls{i}.dw2", c3b, c3b, 3, g=c3b),
                    ConvBlock(src, f"{prefix}.cls{i}.pw2", c3b, c3b, 1),
                    BareConv(src, f"{prefix}.cls{i}.final", c3b, nc),
                ))
            else:
                self.cls.append((
                    ConvBlock(src, f"{prefix}.cls{i}.c1", x, c3b, 3),
                    ConvBlock(src, f"{prefix}.cls{i}.c2", c3b, c3b, 3),
                    BareConv(src, f"{prefix}.cls{i}.final", c3b, nc),
                ))

    def __call__(self, features) -> list[np.ndarray]:
        if len(features) != len(self.ch):
            raise ShapeError(f"detect head expects {len(self.ch)} feature maps")
        outs = []
        for i, (x, want) in enumerate(zip(features, self.ch)):
            if x.shape[1] != want:
                raise ShapeError(
                    f"detect scale {i} expects {want} channels, got {x.shape[1]}"
                )
            b = x
            for layer in self.box[i]:
                b = layer(b)
            c = x
            for layer in self.cls[i]:
                c = layer(c)
            outs.append(ops.concat_channels([b, c]))
        return outs


def identity_bn(container, prefix: str, c: int) -> None:
    """Insert batchnorm parameters under ``prefix.bn`` that make the block's
    normalization an exact no-op (test-identity mode).

    var is stored as 1 - eps so that var + eps recovers 1.0 exactly and the
    affine collapses to y = x bit-for-bit.
    """
    container.add(f"{prefix}.bn.gamma", np.ones(c, dtype=np.float32))
    container.add(f"{prefix}.bn.beta", np.zeros(c, dtype=np.float32))
    container.add(f"{prefix}.bn.mean", np.zeros(c, dtype=np.float32))
    container.add(f"{prefix}.bn.var", np.full(c, 1.0 - BN_EPS, dtype=np.float32))
