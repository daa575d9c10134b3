"""Pure-numpy kernel backend.

Reference implementations of the hot inner loops used by the convolution
and pooling layers. The compiled backend (``imagedx.nn._ckernels``) must
produce bit-identical results; the dispatcher in ``imagedx.nn.kernels``
picks whichever is available at import time.

All functions take pre-padded inputs in NCHW layout. ``cols`` matrices are
(N*oh*ow, C*kh*kw) with column index ``(c*kh + u)*kw + v``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[0], xp.shape[1]
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    # windows: (N, C, oh, ow, kh, kw) -> (N, oh, ow, C, kh, kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray,
    n: int,
    c: int,
    hp: int,
    wp: int,
    kh: int,
    kw: int,
    sh: int,
    sw: int,
    oh: int,
    ow: int,
) -> np.ndarray:
    dxp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    cols6 = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u : u + sh * oh : sh, v : v + sw * ow : sw] += cols6[:, :, :, :, u, v]
    return dxp


def maxpool_forward(
    xp: np.ndarray, kh: int, kw: int, sh: int, sw: int, oh: int, ow: int
) -> tuple[np.ndarray, np.ndarray]:
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    flat = windows.reshape(*windows.shape[:4], kh * kw)
    argmax = flat.argmax(axis=-1).astype(np.int64)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), np.ascontiguousarray(argmax)


def maxpool_backward(
    dout: np.ndarray,
    argmax: np.ndarray,
    hp: int,
    wp: int,
    kh: int,
    kw: int,
    sh: int,
    sw: int,
) -> np.ndarray:
    n, c, oh, ow = dout.shape
    dxp = np.zeros((n, c, hp, wp), dtype=dout.dtype)
    u = argmax // kw
    v = argmax % kw
    ni = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, :, None, None]
    ri = np.arange(oh)[None, None, :, None] * sh + u
    qi = np.arange(ow)[None, None, None, :] * sw + v
    np.add.at(dxp, (ni, ci, ri, qi), dout)
    return dxp
