# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend: im2col/col2im and max-pooling inner loops.

Mirrors imagedx.nn.pykernels exactly (same signatures, same layouts).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] xp, int kh, int kw, int sh, int sw, int oh, int ow):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t i, j, b, ch, u, v, row
    out_np = np.empty((n * oh * ow, c * kh * kw),
                      dtype=np.float32 if real is float else np.float64)
    cdef real[:, ::1] cols = out_np
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                cols[row, (ch * kh + u) * kw + v] = xp[b, ch, i * sh + u, j * sw + v]
    return out_np


def col2im(real[:, ::1] cols, int n, int c, int hp, int wp,
           int kh, int kw, int sh, int sw, int oh, int ow):
    cdef Py_ssize_t i, j, b, ch, u, v, row
    out_np = np.zeros((n, c, hp, wp),
                      dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] dxp = out_np
    with nogil:
        for b in range(n):
            for i in range(oh):
                for j in range(ow):
                    row = (b * oh + i) * ow + j
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                dxp[b, ch, i * sh + u, j * sw + v] += cols[row, (ch * kh + u) * kw + v]
    return out_np


def maxpool_forward(real[:, :, :, ::1] xp, int kh, int kw, int sh, int sw, int oh, int ow):
    cdef Py_ssize_t n = xp.shape[0], c = xp.shape[1]
    cdef Py_ssize_t b, ch, i, j, u, v
    cdef real best, val
    cdef long long bestk
    out_np = np.empty((n, c, oh, ow), dtype=np.float32 if real is float else np.float64)
    arg_np = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] out = out_np
    cdef long long[:, :, :, ::1] arg = arg_np
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        best = xp[b, ch, i * sh, j * sw]
                        bestk = 0
                        for u in range(kh):
                            for v in range(kw):
                                val = xp[b, ch, i * sh + u, j * sw + v]
                                if val > best:
                                    best = val
                                    bestk = u * kw + v
                        out[b, ch, i, j] = best
                        arg[b, ch, i, j] = bestk
    return out_np, arg_np


def maxpool_backward(real[:, :, :, ::1] dout, long long[:, :, :, ::1] argmax,
                     int hp, int wp, int kh, int kw, int sh, int sw):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1]
    cdef Py_ssize_t oh = dout.shape[2], ow = dout.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef long long k
    out_np = np.zeros((n, c, hp, wp), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, :, ::1] dxp = out_np
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(oh):
                    for j in range(ow):
                        k = argmax[b, ch, i, j]
                        dxp[b, ch, i * sh + k // kw, j * sw + k % kw] += dout[b, ch, i, j]
    return out_np
