"""Numba-compiled loop implementations of the hot kernels.

Dense and convolution accumulate in float32, sequentially in row-major
order, so repeated calls are bit-identical.  cache=True persists the
compiled machine code next to the source, which keeps worker processes
and repeat runs from paying the JIT cost again.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def dense_forward(w, b, x):
    out, inp = w.shape
    y = np.empty(out, np.float32)
    for i in range(out):
        acc = np.float32(0.0)
        for j in range(inp):
            acc += w[i, j] * x[j]
        y[i] = acc + b[i]
    return y


@njit(cache=True)
def dense_input_grad(w, dy):
    out, inp = w.shape
    dx = np.zeros(inp, np.float32)
    for i in range(out):
        d = dy[i]
        for j in range(inp):
            dx[j] += w[i, j] * d
    return dx


@njit(cache=True)
def conv2d_forward(x, k, b, sh, sw, ph, pw):
    c, h, w = x.shape
    f, _, kh, kw = k.shape
    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1
    y = np.empty((f, ho, wo), np.float32)
    for fi in range(f):
        for i in range(ho):
            for j in range(wo):
                acc = np.float32(0.0)
                for ci in range(c):
                    for u in range(kh):
                        row = i * sh + u - ph
                        if row < 0 or row >= h:
                            continue
                        for v in range(kw):
                            col = j * sw + v - pw
                            if col < 0 or col >= w:
                                continue
                            acc += x[ci, row, col] * k[fi, ci, u, v]
                y[fi, i, j] = acc + b[fi]
    return y


@njit(cache=True)
def conv2d_input_grad(dy, k, c, h, w, sh, sw, ph, pw):
    f, _, kh, kw = k.shape
    _, ho, wo = dy.shape
    dx = np.zeros((c, h, w), np.float32)
    for fi in range(f):
        for i in range(ho):
            for j in range(wo):
                d = dy[fi, i, j]
                for ci in range(c):
                    for u in range(kh):
                        row = i * sh + u - ph
                        if row < 0 or row >= h:
                            continue
                        for v in range(kw):
                            col = j * sw + v - pw
                            if col < 0 or col >= w:
                                continue
                            dx[ci, row, col] += d * k[fi, ci, u, v]
    return dx


@njit(cache=True)
def maxpool2d_forward(x, wh, ww, sh, sw):
    c, h, w = x.shape
    ho = (h - wh) // sh + 1
    wo = (w - ww) // sw + 1
    y = np.empty((c, ho, wo), np.float32)
    idx = np.empty((c, ho, wo), np.int64)
    for ci in range(c):
        for i in range(ho):
            for j in range(wo):
                best = x[ci, i * sh, j * sw]
                bu = 0
                bv = 0
                for u in range(wh):
                    for v in range(ww):
                        val = x[ci, i * sh + u, j * sw + v]
                        # strict comparison keeps the first maximal element
                        if val > best:
                            best = val
                            bu = u
                            bv = v
                y[ci, i, j] = best
                idx[ci, i, j] = (i * sh + bu) * w + (j * sw + bv)
    return y, idx


@njit(cache=True)
def maxpool2d_input_grad(dy, idx, c, h, w):
    dx = np.zeros((c, h * w), np.float32)
    _, ho, wo = dy.shape
    for ci in range(c):
        for i in range(ho):
            for j in range(wo):
                dx[ci, idx[ci, i, j]] += dy[ci, i, j]
    return dx.reshape(c, h, w)


@njit(cache=True)
def warp_bilinear(img, m, oh, ow):
    h, w = img.shape
    out = np.empty((oh, ow), np.float64)
    for i in range(oh):
        for j in range(ow):
            den = m[2, 0] * j + m[2, 1] * i + m[2, 2]
            cx = (m[0, 0] * j + m[0, 1] * i + m[0, 2]) / den
            cy = (m[1, 0] * j + m[1, 1] * i + m[1, 2]) / den
            if cx < 0.0:
                cx = 0.0
            elif cx > w - 1.0:
                cx = w - 1.0
            if cy < 0.0:
                cy = 0.0
            elif cy > h - 1.0:
                cy = h - 1.0
            x0 = int(np.floor(cx))
            y0 = int(np.floor(cy))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            fx = cx - x0
            fy = cy - y0
            top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
            out[i, j] = top * (1.0 - fy) + bot * fy
    return out


@njit(cache=True)
def sepfilter2d_valid(img, k1):
    h, w = img.shape
    n = k1.size
    rows = np.empty((h, w - n + 1), np.float64)
    for i in range(h):
        for j in range(w - n + 1):
            acc = 0.0
            for t in range(n):
                acc += img[i, j + t] * k1[t]
            rows[i, j] = acc
    out = np.empty((h - n + 1, w - n + 1), np.float64)
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            acc = 0.0
            for t in range(n):
                acc += rows[i + t, j] * k1[t]
            out[i, j] = acc
    return out
