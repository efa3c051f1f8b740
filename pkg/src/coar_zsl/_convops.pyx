# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: patch extraction/scatter, 2x2 max pool, bilinear taps.

Mirrors the pure-NumPy fallback in ``_convops_py``; the ``kernels`` module
picks whichever is importable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int kh, int kw, int pad):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * pad - kh + 1
    cdef Py_ssize_t ow = w + 2 * pad - kw + 1
    out_arr = np.zeros((n, oh, ow, kh * kw * c), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, oy, ox, ky, kx, ch, iy, ix, base
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                base = 0
                for ky in range(kh):
                    iy = oy + ky - pad
                    for kx in range(kw):
                        ix = ox + kx - pad
                        if 0 <= iy < h and 0 <= ix < w:
                            for ch in range(c):
                                out[i, oy, ox, base + ch] = x[i, iy, ix, ch]
                        base += c
    return out_arr


def col2im(double[:, :, :, ::1] cols, int h, int w, int kh, int kw, int pad):
    cdef Py_ssize_t n = cols.shape[0], oh = cols.shape[1], ow = cols.shape[2]
    cdef Py_ssize_t c = cols.shape[3] // (kh * kw)
    out_arr = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, oy, ox, ky, kx, ch, iy, ix, base
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                base = 0
                for ky in range(kh):
                    iy = oy + ky - pad
                    for kx in range(kw):
                        ix = ox + kx - pad
                        if 0 <= iy < h and 0 <= ix < w:
                            for ch in range(c):
                                out[i, iy, ix, ch] += cols[i, oy, ox, base + ch]
                        base += c
    return out_arr


def maxpool2x2_forward(double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    out_arr = np.empty((n, oh, ow, c), dtype=np.float64)
    idx_arr = np.zeros((n, oh, ow, c), dtype=np.uint8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, oy, ox, ch, dy, dx
    cdef double best, v
    cdef unsigned char code
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    best = x[i, 2 * oy, 2 * ox, ch]
                    code = 0
                    v = x[i, 2 * oy, 2 * ox + 1, ch]
                    if v > best:
                        best = v
                        code = 1
                    v = x[i, 2 * oy + 1, 2 * ox, ch]
                    if v > best:
                        best = v
                        code = 2
                    v = x[i, 2 * oy + 1, 2 * ox + 1, ch]
                    if v > best:
                        best = v
                        code = 3
                    out[i, oy, ox, ch] = best
                    idx[i, oy, ox, ch] = code
    return out_arr, idx_arr


def maxpool2x2_backward(double[:, :, :, ::1] gout, unsigned char[:, :, :, ::1] idx):
    cdef Py_ssize_t n = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2], c = gout.shape[3]
    out_arr = np.zeros((n, oh * 2, ow * 2, c), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out_arr
    cdef Py_ssize_t i, oy, ox, ch
    cdef unsigned char code
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    code = idx[i, oy, ox, ch]
                    gx[i, 2 * oy + code // 2, 2 * ox + code % 2, ch] = gout[i, oy, ox, ch]
    return out_arr


def bilinear_gather(double[:, :, :, ::1] x,
                    long[::1] y0, long[::1] y1, double[::1] wy,
                    long[::1] x0, long[::1] x1, double[::1] wx):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[3]
    cdef Py_ssize_t oh = y0.shape[0], ow = x0.shape[0]
    out_arr = np.empty((n, oh, ow, c), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, oy, ox, ch
    cdef double fy, fx, w00, w01, w10, w11
    cdef Py_ssize_t a, b, p, q
    for i in range(n):
        for oy in range(oh):
            a = y0[oy]
            b = y1[oy]
            fy = wy[oy]
            for ox in range(ow):
                p = x0[ox]
                q = x1[ox]
                fx = wx[ox]
                w00 = (1 - fy) * (1 - fx)
                w01 = (1 - fy) * fx
                w10 = fy * (1 - fx)
                w11 = fy * fx
                for ch in range(c):
                    out[i, oy, ox, ch] = (w00 * x[i, a, p, ch] + w01 * x[i, a, q, ch]
                                          + w10 * x[i, b, p, ch] + w11 * x[i, b, q, ch])
    return out_arr


def bilinear_scatter(double[:, :, :, ::1] gout,
                     long[::1] y0, long[::1] y1, double[::1] wy,
                     long[::1] x0, long[::1] x1, double[::1] wx,
                     int h, int w):
    cdef Py_ssize_t n = gout.shape[0], oh = gout.shape[1], ow = gout.shape[2], c = gout.shape[3]
    out_arr = np.zeros((n, h, w, c), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = out_arr
    cdef Py_ssize_t i, oy, ox, ch
    cdef double fy, fx, g
    cdef Py_ssize_t a, b, p, q
    for i in range(n):
        for oy in range(oh):
            a = y0[oy]
            b = y1[oy]
            fy = wy[oy]
            for ox in range(ow):
                p = x0[ox]
                q = x1[ox]
                fx = wx[ox]
                for ch in range(c):
                    g = gout[i, oy, ox, ch]
                    gx[i, a, p, ch] += (1 - fy) * (1 - fx) * g
                    gx[i, a, q, ch] += (1 - fy) * fx * g
                    gx[i, b, p, ch] += fy * (1 - fx) * g
                    gx[i, b, q, ch] += fy * fx * g
    return out_arr
