"""Dense-tensor primitives in NCHW layout.

Every network block is composed from the functions here. All of them are
pure, deterministic value transforms: identical inputs give bit-identical
outputs. Convolution uses the cross-correlation convention (no kernel
flip) and accumulates through an im2col matrix product whose row order is
fixed as (input channel, kernel row, kernel col).

Single precision is the production dtype; the same code paths accept
float64 so that the gradient checker can run a double-precision shadow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


@dataclass(frozen=True)
class ConvParams:
    """Static convolution geometry: kernel/stride/padding/dilation/groups."""

    out_channels: int
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)
    groups: int = 1
    dilation: tuple[int, int] = (1, 1)

    def __post_init__(self):
        object.__setattr__(self, "kernel", _pair(self.kernel))
        object.__setattr__(self, "stride", _pair(self.stride))
        object.__setattr__(self, "padding", _pair(self.padding))
        object.__setattr__(self, "dilation", _pair(self.dilation))
        if self.out_channels < 1:
            raise ShapeError("out_channels must be >= 1")
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.dilation) < 1:
            raise ShapeError("kernel, stride and dilation extents must be >= 1")
        if min(self.padding) < 0:
            raise ShapeError("padding must be >= 0")
        if self.groups < 1 or self.out_channels % self.groups:
            raise ShapeError(
                f"groups={self.groups} must divide out_channels={self.out_channels}"
            )


def require_nchw(x: np.ndarray, name: str = "input") -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank-4 NCHW, got shape {x.shape}")
    return x


def conv_output_hw(h: int, w: int, p: ConvParams) -> tuple[int, int]:
    (kh, kw), (sh, sw) = p.kernel, p.stride
    (ph, pw), (dh, dw) = p.padding, p.dilation
    oh = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    ow = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"empty output {oh}x{ow} for input {h}x{w} with {p}")
    return oh, ow


def _windows(x: np.ndarray, p: ConvParams, fill: float) -> np.ndarray:
    """Sliding windows view of shape (n, c, oh, ow, kh, kw)."""
    n, c, h, w = x.shape
    (kh, kw), (sh, sw) = p.kernel, p.stride
    (ph, pw), (dh, dw) = p.padding, p.dilation
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=fill)
    oh, ow = conv_output_hw(h, w, p)
    ns, cs, hs, ws = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, oh, ow, kh, kw),
        strides=(ns, cs, hs * sh, ws * sw, hs * dh, ws * dw),
        writeable=False,
    )
    return view


def im2col(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Unfold to (n, c*kh*kw, oh*ow) with rows ordered (c, kh, kw)."""
    n, c, _, _ = x.shape
    view = _windows(x, p, 0.0)
    oh, ow = view.shape[2], view.shape[3]
    cols = view.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * p.kernel[0] * p.kernel[1], oh * ow)
    return np.ascontiguousarray(cols)


def conv2d(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray | None = None,
    *,
    stride=1,
    padding=0,
    dilation=1,
    groups: int = 1,
) -> np.ndarray:
    """Cross-correlation of an NCHW tensor with a (co, ci/g, kh, kw) kernel."""
    require_nchw(x)
    if weight.ndim != 4:
        raise ShapeError(f"weight must be rank-4, got shape {weight.shape}")
    co, cig, kh, kw = weight.shape
    n, ci, h, w = x.shape
    if ci % groups or co % groups:
        raise ShapeError(f"groups={groups} must divide in={ci} and out={co} channels")
    if cig != ci // groups:
        raise ShapeError(
            f"weight expects {cig * groups} input channels (groups={groups}), got {ci}"
        )
    p = ConvParams(co, (kh, kw), _pair(stride), _pair(padding), groups, _pair(dilation))
    oh, ow = conv_output_hw(h, w, p)

    if groups == 1:
        cols = im2col(x, p)
        y = weight.reshape(co, -1) @ cols
    elif groups == ci and groups == co and cig == 1:
        view = _windows(x, p, 0.0)  # depthwise fast path
        y = np.einsum("nchwij,cij->nchw", view, weight[:, 0], optimize=True)
        y = y.reshape(n, co, oh * ow)
    else:
        cog = co // groups
        y = np.empty((n, co, oh * ow), dtype=x.dtype)
        for g in range(groups):
            xs = x[:, g * cig : (g + 1) * cig]
            cols = im2col(xs, p)
            y[:, g * cog : (g + 1) * cog] = weight[g * cog : (g + 1) * cog].reshape(cog, -1) @ cols
    y = y.reshape(n, co, oh, ow)
    if bias is not None:
        if bias.shape != (co,):
            raise ShapeError(f"bias must have shape ({co},), got {bias.shape}")
        y = y + bias.reshape(1, co, 1, 1)
    return np.ascontiguousarray(y.astype(x.dtype, copy=False))


def depthwise_conv2d(x: np.ndarray, weight: np.ndarray, *, stride=1, padding=0) -> np.ndarray:
    """Per-channel convolution: weight (c, 1, kh, kw), groups = channels."""
    require_nchw(x)
    c = x.shape[1]
    if weight.shape[0] != c or weight.shape[1] != 1:
        raise ShapeError(f"depthwise weight must be ({c}, 1, kh, kw), got {weight.shape}")
    return conv2d(x, weight, stride=stride, padding=padding, groups=c)


def batchnorm_infer(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float = 1e-3,
) -> np.ndarray:
    require_nchw(x)
    c = x.shape[1]
    for name, v in (("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)):
        if v.shape != (c,):
            raise ShapeError(f"batchnorm {name} must have shape ({c},), got {v.shape}")
    scale = (gamma / np.sqrt(var + x.dtype.type(eps))).astype(x.dtype)
    shift = (beta - mean * scale).astype(x.dtype)
    return x * scale.reshape(1, c, 1, 1) + shift.reshape(1, c, 1, 1)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # piecewise form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def maxpool2d(x: np.ndarray, k, *, stride=1, padding=0) -> np.ndarray:
    """Sliding-window maximum; padded cells are -inf so they never win."""
    require_nchw(x)
    kh, kw = _pair(k)
    p = ConvParams(x.shape[1], (kh, kw), _pair(stride), _pair(padding), 1, (1, 1))
    view = _windows(x, p, -np.inf)
    return np.ascontiguousarray(view.max(axis=(4, 5)))


def upsample_nearest2x(x: np.ndarray) -> np.ndarray:
    require_nchw(x)
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=2), 2, axis=3))


def concat_channels(xs) -> np.ndarray:
    xs = list(xs)
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = xs[0]
    for t in xs[1:]:
        if t.shape[0] != ref.shape[0] or t.shape[2:] != ref.shape[2:]:
            raise ShapeError(f"spatial/batch mismatch in concat: {ref.shape} vs {t.shape}")
    return np.ascontiguousarray(np.concatenate(xs, axis=1))


def add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise ShapeError(f"add shape mismatch: {x.shape} vs {y.shape}")
    return x + y


def softmax_lastdim(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def matmul_batched(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    return a @ b
