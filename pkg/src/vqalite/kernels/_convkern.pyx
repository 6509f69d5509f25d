# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution/pooling kernels.

Mirrors conv_py element for element: identical loop orders mean every
float is produced by the same sequence of operations, so results match
the numpy lane bitwise.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef fused floating:
    float
    double


def im2col(floating[:, :, :, ::1] xp, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride):
    cdef Py_ssize_t n = xp.shape[0]
    cdef Py_ssize_t c = xp.shape[1]
    cdef Py_ssize_t hp = xp.shape[2]
    cdef Py_ssize_t wp = xp.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((c * kh * kw, n * ho * wo), dtype=dtype)
    cdef floating[:, ::1] cols = out
    cdef Py_ssize_t row, ci, i, j, nn, oy, ox, base
    row = 0
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                for nn in range(n):
                    base = nn * ho * wo
                    for oy in range(ho):
                        for ox in range(wo):
                            cols[row, base + oy * wo + ox] = xp[
                                nn, ci, i + oy * stride, j + ox * stride
                            ]
                row += 1
    return out


def col2im(
    floating[:, ::1] dcols,
    Py_ssize_t n,
    Py_ssize_t c,
    Py_ssize_t hp,
    Py_ssize_t wp,
    Py_ssize_t kh,
    Py_ssize_t kw,
    Py_ssize_t stride,
):
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((n, c, hp, wp), dtype=dtype)
    cdef floating[:, :, :, ::1] dxp = out
    cdef Py_ssize_t row, ci, i, j, nn, oy, ox, base
    row = 0
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                for nn in range(n):
                    base = nn * ho * wo
                    for oy in range(ho):
                        for ox in range(wo):
                            dxp[nn, ci, i + oy * stride, j + ox * stride] += dcols[
                                row, base + oy * wo + ox
                            ]
                row += 1
    return out


def avgpool2d_forward(floating[:, :, :, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t c = x.shape[1]
    cdef Py_ssize_t h = x.shape[2]
    cdef Py_ssize_t w = x.shape[3]
    cdef Py_ssize_t ho = h // k
    cdef Py_ssize_t wo = w // k
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.zeros((n, c, ho, wo), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef floating inv = <floating> (1.0 / (k * k))
    cdef Py_ssize_t i, j, nn, ci, oy, ox
    for i in range(k):
        for j in range(k):
            for nn in range(n):
                for ci in range(c):
                    for oy in range(ho):
                        for ox in range(wo):
                            out[nn, ci, oy, ox] += x[nn, ci, oy * k + i, ox * k + j]
    for nn in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    out[nn, ci, oy, ox] *= inv
    return out_arr


def avgpool2d_backward(floating[:, :, :, ::1] dy, Py_ssize_t k):
    cdef Py_ssize_t n = dy.shape[0]
    cdef Py_ssize_t c = dy.shape[1]
    cdef Py_ssize_t ho = dy.shape[2]
    cdef Py_ssize_t wo = dy.shape[3]
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((n, c, ho * k, wo * k), dtype=dtype)
    cdef floating[:, :, :, ::1] dx = out_arr
    cdef floating inv = <floating> (1.0 / (k * k))
    cdef floating v
    cdef Py_ssize_t nn, ci, oy, ox, i, j
    for nn in range(n):
        for ci in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    v = dy[nn, ci, oy, ox] * inv
                    for i in range(k):
                        for j in range(k):
                            dx[nn, ci, oy * k + i, ox * k + j] = v
    return out_arr
