"""Array-level network operations bridging autodiff and the kernel backends."""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .autodiff import Tensor


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, pad: int = 1) -> Tensor:
    """Stride-1 2-D convolution, channels-last; w is (kh, kw, Cin, Cout)."""
    kh, kw, cin, cout = w.shape
    n, h, width, _ = x.shape
    cols = kernels.im2col(x.data, kh, kw, pad)
    _, oh, ow, kkc = cols.shape
    cols2 = cols.reshape(-1, kkc)
    w2 = w.data.reshape(kkc, cout)
    out = cols2 @ w2
    if b is not None:
        out = out + b.data
    out = out.reshape(n, oh, ow, cout)

    def vjp(g):
        g2 = g.reshape(-1, cout)
        gw = (cols2.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(n, oh, ow, kkc)
        gx = kernels.col2im(gcols, h, width, kh, kw, pad)
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._node(out, parents, vjp)


def maxpool2x2(x: Tensor) -> Tensor:
    out, idx = kernels.maxpool2x2_forward(x.data)

    def vjp(g):
        return (kernels.maxpool2x2_backward(g, idx),)

    return Tensor._node(out, (x,), vjp)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    n, h, w, c = x.shape
    out = kernels.bilinear_resize(x.data, out_h, out_w)

    def vjp(g):
        return (kernels.bilinear_resize_backward(g, h, w),)

    return Tensor._node(out, (x,), vjp)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU, composed from differentiable primitives."""
    c = math.sqrt(2.0 / math.pi)
    return x * 0.5 * (1.0 + (c * (x + 0.044715 * x ** 3)).tanh())


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Standard affine layer norm over the last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / (var + eps).sqrt() * gamma + beta
