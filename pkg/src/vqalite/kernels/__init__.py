"""Convolution and pooling kernels with two interchangeable lanes.

The compiled Cython lane and the pure-numpy fallback implement the same
data movement with the same accumulation order, and the actual matrix
product always goes through numpy's BLAS here, so the two lanes return
bitwise-identical results. Lane choice therefore never affects
determinism, only speed.

Selection: environment variable VQALITE_KERNELS = auto (default) | cy | py.
"""

import os

import numpy as np

from . import conv_py

_REQUESTED = os.environ.get("VQALITE_KERNELS", "auto").strip().lower()
if _REQUESTED not in ("auto", "cy", "py"):
    raise ValueError(
        f"VQALITE_KERNELS must be auto, cy, or py; got {_REQUESTED!r}"
    )

_impl = conv_py
_LANE = "numpy"
if _REQUESTED in ("auto", "cy"):
    try:
        from . import _convkern

        _impl = _convkern
        _LANE = "cython"
    except ImportError:
        if _REQUESTED == "cy":
            raise ImportError(
                "VQALITE_KERNELS=cy but the compiled extension is unavailable; "
                "build it with: pip install -e . --no-build-isolation"
            ) from None


def lane():
    """Active kernel lane: 'cython' or 'numpy'."""
    return _LANE


class ConvGeometryError(ValueError):
    """Input geometry incompatible with kernel size, stride, or padding."""


def conv_out_size(size, k, stride, pad):
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ConvGeometryError(
            f"input size {size} with kernel {k}, stride {stride}, pad {pad} "
            "does not tile evenly"
        )
    return span // stride + 1


def _pad(x, pad):
    if pad == 0:
        return np.ascontiguousarray(x)
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def conv2d_forward(x, w, stride=1, pad=0):
    """Cross-correlate (N,C,H,W) with (F,C,kh,kw).

    Returns (y, cols); cols is the (C*kh*kw, N*Ho*Wo) column matrix the
    backward pass reuses.
    """
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise ConvGeometryError(f"kernel channels {cw} != input channels {c}")
    ho = conv_out_size(h, kh, stride, pad)
    wo = conv_out_size(wd, kw, stride, pad)
    cols = _impl.im2col(_pad(x, pad), kh, kw, stride)
    w2 = w.reshape(f, c * kh * kw)
    y = np.matmul(w2, cols).reshape(f, n, ho, wo)
    return np.ascontiguousarray(y.transpose(1, 0, 2, 3)), cols


def conv2d_backward(w, cols, dy, x_shape, stride=1, pad=0):
    """Gradients (dx, dw) given the forward's column matrix."""
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    w2 = w.reshape(f, -1)
    dyf = np.ascontiguousarray(dy.transpose(1, 0, 2, 3)).reshape(f, -1)
    dw = np.matmul(dyf, cols.T).reshape(w.shape)
    dcols = np.matmul(w2.T, dyf)
    dxp = _impl.col2im(dcols, n, c, h + 2 * pad, wd + 2 * pad, kh, kw, stride)
    if pad:
        dxp = np.ascontiguousarray(dxp[:, :, pad:-pad, pad:-pad])
    return dxp, dw


def avg_pool2d_forward(x, k):
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ConvGeometryError(f"spatial size {(h, w)} not divisible by pool {k}")
    return _impl.avgpool2d_forward(np.ascontiguousarray(x), k)


def avg_pool2d_backward(dy, k):
    return _impl.avgpool2d_backward(np.ascontiguousarray(dy), k)
