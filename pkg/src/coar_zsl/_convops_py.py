"""Pure-NumPy implementations of the hot array kernels.

Signature-compatible with the compiled ``_convops`` extension; used as the
fallback backend when the extension is not built (see ``kernels``).
All arrays are float64 and channels-last.
"""

from __future__ import annotations

import numpy as np


def im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """Extract kh x kw patches (stride 1) into (N, OH, OW, kh*kw*C)."""
    n, h, w, c = x.shape
    if pad > 0:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    oh = h + 2 * pad - kh + 1
    ow = w + 2 * pad - kw + 1
    # windows: (N, OH, OW, C, kh, kw) -> reorder to (..., kh, kw, C)
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n, oh, ow, kh * kw * c)
    return np.ascontiguousarray(cols)


def col2im(cols: np.ndarray, h: int, w: int, kh: int, kw: int, pad: int) -> np.ndarray:
    """Adjoint of im2col: scatter-add patch columns back onto the image."""
    n, oh, ow, kkc = cols.shape
    c = kkc // (kh * kw)
    cols6 = cols.reshape(n, oh, ow, kh, kw, c)
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            # stride-1 conv: each (ky, kx) offset hits unique positions
            xp[:, ky:ky + oh, kx:kx + ow, :] += cols6[:, :, :, ky, kx, :]
    if pad > 0:
        return np.ascontiguousarray(xp[:, pad:-pad, pad:-pad, :])
    return xp


def maxpool2x2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool; returns (pooled, winner code in {0,1,2,3}).

    Winner code is dy*2+dx of the max cell; ties resolved to the first
    candidate in (0,0),(0,1),(1,0),(1,1) scan order.
    """
    n, h, w, c = x.shape
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c)
    cand = np.stack(
        [blocks[:, :, 0, :, 0], blocks[:, :, 0, :, 1],
         blocks[:, :, 1, :, 0], blocks[:, :, 1, :, 1]], axis=0)
    idx = np.argmax(cand, axis=0).astype(np.uint8)
    out = np.take_along_axis(cand, idx[None].astype(np.intp), axis=0)[0]
    return np.ascontiguousarray(out), idx


def maxpool2x2_backward(gout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Route pooled gradients back to the winning cell of each 2x2 block."""
    n, oh, ow, c = gout.shape
    gx = np.zeros((n, oh, 2, ow, 2, c), dtype=gout.dtype)
    for code in range(4):
        dy, dx = divmod(code, 2)
        mask = idx == code
        gx[:, :, dy, :, dx, :][mask] = gout[mask]
    return gx.reshape(n, oh * 2, ow * 2, c)


def bilinear_gather(x, y0, y1, wy, x0, x1, wx):
    """Bilinear interpolation with precomputed per-axis taps/weights."""
    wy = wy[None, :, None, None]
    wx = wx[None, None, :, None]
    top = (1.0 - wx) * x[:, y0][:, :, x0] + wx * x[:, y0][:, :, x1]
    bot = (1.0 - wx) * x[:, y1][:, :, x0] + wx * x[:, y1][:, :, x1]
    return (1.0 - wy) * top + wy * bot


def bilinear_scatter(gout, y0, y1, wy, x0, x1, wx, h, w):
    """Adjoint of bilinear_gather: accumulate onto an (N, h, w, C) grid."""
    n, oh, ow, c = gout.shape
    gx = np.zeros((n, h, w, c), dtype=gout.dtype)
    wyc = wy[None, :, None, None]
    wxc = wx[None, None, :, None]
    yi0 = y0[:, None]
    yi1 = y1[:, None]
    xi0 = x0[None, :]
    xi1 = x1[None, :]
    np.add.at(gx, (slice(None), yi0, xi0), (1 - wyc) * (1 - wxc) * gout)
    np.add.at(gx, (slice(None), yi0, xi1), (1 - wyc) * wxc * gout)
    np.add.at(gx, (slice(None), yi1, xi0), wyc * (1 - wxc) * gout)
    np.add.at(gx, (slice(None), yi1, xi1), wyc * wxc * gout)
    return gx
