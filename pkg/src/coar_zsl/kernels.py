"""Backend selection for the hot array kernels.

The compiled Cython extension (``coar_zsl._convops``) is preferred; the
pure-NumPy twin (``coar_zsl._convops_py``) is used when the extension is
not built or when ``COAR_ZSL_PURE_PYTHON=1`` is set.  Both backends share
the exact same tap/weight conventions, so results agree to float64
round-off and the choice never affects semantics.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from . import _convops_py

if os.environ.get("COAR_ZSL_PURE_PYTHON", "0") == "1":
    _impl = _convops_py
    BACKEND = "python"
else:
    try:
        from . import _convops as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _convops_py
        BACKEND = "python"


def get_backend(name: str | None = None):
    """Return a kernel backend module: active one, 'python' or 'compiled'."""
    if name is None:
        return _impl
    if name == "python":
        return _convops_py
    if name == "compiled":
        from . import _convops

        return _convops
    raise ValueError(f"unknown kernel backend {name!r}")


def _as_f64(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def im2col(x, kh, kw, pad):
    return _impl.im2col(_as_f64(x), kh, kw, pad)


def col2im(cols, h, w, kh, kw, pad):
    return _impl.col2im(_as_f64(cols), h, w, kh, kw, pad)


def maxpool2x2_forward(x):
    return _impl.maxpool2x2_forward(_as_f64(x))


def maxpool2x2_backward(gout, idx):
    return _impl.maxpool2x2_backward(_as_f64(gout), np.ascontiguousarray(idx))


@lru_cache(maxsize=None)
def bilinear_coeffs(in_size: int, out_size: int):
    """Half-pixel-centre bilinear taps: (lo, hi, frac) per output index."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, in_size - 1)
    frac = src - lo
    return lo, hi, frac


def bilinear_resize(x, out_h, out_w):
    n, h, w, c = x.shape
    if (h, w) == (out_h, out_w):
        return _as_f64(x).copy()
    y0, y1, wy = bilinear_coeffs(h, out_h)
    x0, x1, wx = bilinear_coeffs(w, out_w)
    return _impl.bilinear_gather(_as_f64(x), y0, y1, wy, x0, x1, wx)


def bilinear_resize_backward(gout, in_h, in_w):
    n, oh, ow, c = gout.shape
    if (oh, ow) == (in_h, in_w):
        return _as_f64(gout).copy()
    y0, y1, wy = bilinear_coeffs(in_h, oh)
    x0, x1, wx = bilinear_coeffs(in_w, ow)
    return _impl.bilinear_scatter(_as_f64(gout), y0, y1, wy, x0, x1, wx, in_h, in_w)
