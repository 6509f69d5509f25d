"""Pure-numpy convolution/pooling kernels (fallback lane).

Column layout is (C*kh*kw, N*Ho*Wo) so a whole batch convolves as one
matrix product. Loop orders here are the contract for the compiled
lane: col2im accumulates overlapping windows in (c, i, j) order with the
destination walked row-major, and the pooling forward adds the k*k taps
in (i, j) order, so both lanes produce bitwise-identical floats.
"""

import numpy as np


def im2col(xp, kh, kw, stride):
    """Padded input (N, C, Hp, Wp) -> columns (C*kh*kw, N*Ho*Wo)."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((c * kh * kw, n * ho * wo), dtype=xp.dtype)
    row = 0
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, ci, i : i + stride * ho : stride, j : j + stride * wo : stride]
                cols[row] = patch.reshape(-1)
                row += 1
    return cols


def col2im(dcols, n, c, hp, wp, kh, kw, stride):
    """Scatter-add column gradients back to the padded input layout."""
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    dxp = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    row = 0
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                dxp[:, ci, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                    dcols[row].reshape(n, ho, wo)
                )
                row += 1
    return dxp


def avgpool2d_forward(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            out += x[:, :, i::k, j::k]
    out *= x.dtype.type(1.0 / (k * k))
    return out


def avgpool2d_backward(dy, k):
    n, c, ho, wo = dy.shape
    scaled = dy * dy.dtype.type(1.0 / (k * k))
    dx = np.empty((n, c, ho * k, wo * k), dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dx[:, :, i::k, j::k] = scaled
    return dx
