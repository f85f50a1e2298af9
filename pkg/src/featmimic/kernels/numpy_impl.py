"""Vectorized numpy implementations of the hot kernels.

Matches the numba implementations in semantics.  Accumulation order inside
matrix products follows whatever BLAS does, so the last float32 bits may
differ from the sequential numba loops; everything downstream treats the
two backends as equal within normal float tolerance.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dense_forward(w, b, x):
    return w @ x + b


def dense_input_grad(w, dy):
    return w.T @ dy


def conv2d_forward(x, k, b, sh, sw, ph, pw):
    f, c, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * kh * kw)
    y = cols @ k.reshape(f, c * kh * kw).T
    y = y.T.reshape(f, ho, wo) + b[:, None, None]
    return np.ascontiguousarray(y)


def conv2d_input_grad(dy, k, c, h, w, sh, sw, ph, pw):
    f, _, kh, kw = k.shape
    _, ho, wo = dy.shape
    dxp = np.zeros((c, h + 2 * ph, w + 2 * pw), np.float32)
    for u in range(kh):
        for v in range(kw):
            contrib = np.tensordot(k[:, :, u, v], dy, axes=([0], [0]))
            dxp[:, u : u + sh * ho : sh, v : v + sw * wo : sw] += contrib
    return np.ascontiguousarray(dxp[:, ph : ph + h, pw : pw + w])


def maxpool2d_forward(x, wh, ww, sh, sw):
    c, h, w = x.shape
    win = sliding_window_view(x, (wh, ww), axis=(1, 2))[:, ::sh, ::sw]
    ho, wo = win.shape[1], win.shape[2]
    flat = win.reshape(c, ho, wo, wh * ww)
    # argmax returns the first maximal element in window scan order,
    # matching the tie rule of the loop implementation
    arg = flat.argmax(axis=3)
    y = np.take_along_axis(flat, arg[..., None], axis=3)[..., 0]
    u, v = arg // ww, arg % ww
    rows = np.arange(ho, dtype=np.int64)[None, :, None] * sh + u
    cols = np.arange(wo, dtype=np.int64)[None, None, :] * sw + v
    idx = rows * w + cols
    return np.ascontiguousarray(y), np.ascontiguousarray(idx)


def maxpool2d_input_grad(dy, idx, c, h, w):
    dx = np.zeros((c, h * w), np.float32)
    ch = np.repeat(np.arange(c), idx.shape[1] * idx.shape[2])
    np.add.at(dx, (ch, idx.reshape(-1)), dy.reshape(-1))
    return dx.reshape(c, h, w)


def warp_bilinear(img, m, oh, ow):
    h, w = img.shape
    ys, xs = np.mgrid[0:oh, 0:ow].astype(np.float64)
    den = m[2, 0] * xs + m[2, 1] * ys + m[2, 2]
    cx = (m[0, 0] * xs + m[0, 1] * ys + m[0, 2]) / den
    cy = (m[1, 0] * xs + m[1, 1] * ys + m[1, 2]) / den
    # border replication: clamp sample coordinates to the image rectangle
    cx = np.clip(cx, 0.0, w - 1.0)
    cy = np.clip(cy, 0.0, h - 1.0)
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = cx - x0
    fy = cy - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def sepfilter2d_valid(img, k1):
    n = k1.size
    rows = sliding_window_view(img, n, axis=1) @ k1
    return sliding_window_view(rows, n, axis=0) @ k1
