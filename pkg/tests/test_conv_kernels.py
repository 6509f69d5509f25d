"""Convolution kernel lanes: correctness and cross-lane parity.

The compiled lane and the numpy lane must produce bitwise-identical
arrays, not merely close ones, because checkpoint reproducibility is
promised regardless of which lane happened to be active.
"""

import importlib
import os

import numpy as np
import pytest

import vqalite.kernels as kernels
from tests.conftest import relative_error


def load_lane(name):
    old = os.environ.get("VQALITE_KERNELS")
    os.environ["VQALITE_KERNELS"] = name
    try:
        importlib.reload(kernels)
    finally:
        if old is None:
            os.environ.pop("VQALITE_KERNELS", None)
        else:
            os.environ["VQALITE_KERNELS"] = old
    return kernels


@pytest.fixture(scope="module", autouse=True)
def restore_lane():
    yield
    importlib.reload(kernels)


def conv_reference(x, w, stride, pad):
    """Plain quadruple loop, the slowest possible oracle."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    y = np.zeros((n, f, ho, wo), dtype=x.dtype)
    for nn in range(n):
        for ff in range(f):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[nn, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    y[nn, ff, i, j] = np.sum(patch * w[ff])
    return y


class TestForward:
    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
    def test_matches_loop_oracle(self, rng, stride, pad):
        size = 7 if stride == 2 else 6  # stride must tile the input exactly
        x = rng.standard_normal((2, 3, size, size))
        w = rng.standard_normal((4, 3, 3, 3))
        y, _ = kernels.conv2d_forward(x, w, stride=stride, pad=pad)
        assert relative_error(y, conv_reference(x, w, stride, pad)) < 1e-12

    def test_one_by_one_kernel_is_channel_mix(self, rng):
        x = rng.standard_normal((2, 5, 4, 4))
        w = rng.standard_normal((3, 5, 1, 1))
        y, _ = kernels.conv2d_forward(x, w)
        expected = np.einsum("nchw,fc->nfhw", x, w[:, :, 0, 0])
        assert relative_error(y, expected) < 1e-12

    def test_identity_kernel_passes_input_through(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        w = np.zeros((1, 1, 3, 3), dtype=np.float32)
        w[0, 0, 1, 1] = 1.0
        y, _ = kernels.conv2d_forward(x, w, stride=1, pad=1)
        np.testing.assert_array_equal(y[0, 0], x[0, 0])

    def test_rejects_uneven_geometry(self):
        x = np.zeros((1, 1, 5, 5))
        w = np.zeros((1, 1, 2, 2))
        with pytest.raises(kernels.ConvGeometryError):
            kernels.conv2d_forward(x, w, stride=2, pad=0)

    def test_rejects_channel_mismatch(self):
        with pytest.raises(kernels.ConvGeometryError):
            kernels.conv2d_forward(np.zeros((1, 3, 4, 4)), np.zeros((2, 4, 3, 3)))


class TestBackward:
    def test_gradients_match_finite_differences(self, rng):
        x = rng.standard_normal((2, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        y, cols = kernels.conv2d_forward(x, w, stride=1, pad=1)
        dy = rng.standard_normal(y.shape)
        dx, dw = kernels.conv2d_backward(w, cols, dy, x.shape, 1, 1)

        h = 1e-6
        for arr, grad, rebuild in (
            (x, dx, lambda a: kernels.conv2d_forward(a, w, stride=1, pad=1)[0]),
            (w, dw, lambda a: kernels.conv2d_forward(x, a, stride=1, pad=1)[0]),
        ):
            flat = arr.reshape(-1)
            num = np.zeros_like(flat)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + h
                hi = float(np.sum(rebuild(arr) * dy))
                flat[i] = keep - h
                lo = float(np.sum(rebuild(arr) * dy))
                flat[i] = keep
                num[i] = (hi - lo) / (2 * h)
            assert relative_error(grad.reshape(-1), num) < 1e-5


class TestAvgPool:
    def test_forward_is_window_mean(self, rng):
        x = rng.standard_normal((2, 3, 6, 6)).astype(np.float32)
        y = kernels.avg_pool2d_forward(x, 2)
        assert y.shape == (2, 3, 3, 3)
        expected = x.reshape(2, 3, 3, 2, 3, 2).mean(axis=(3, 5))
        assert relative_error(y, expected) < 1e-6

    def test_backward_spreads_uniformly(self):
        dy = np.ones((1, 1, 2, 2), dtype=np.float32)
        dx = kernels.avg_pool2d_backward(dy, 2)
        np.testing.assert_allclose(dx, 0.25)

    def test_rejects_indivisible_size(self):
        with pytest.raises(kernels.ConvGeometryError):
            kernels.avg_pool2d_forward(np.zeros((1, 1, 5, 5)), 2)


class TestLaneParity:
    """Both lanes on identical inputs must agree to the last bit."""

    def _has_compiled_lane(self):
        try:
            from vqalite.kernels import _convkern  # noqa: F401
            return True
        except ImportError:
            return False

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_conv_and_pool_bitwise_identical(self, rng, dtype):
        if not self._has_compiled_lane():
            pytest.skip("compiled kernel lane not built")
        x = rng.standard_normal((4, 8, 12, 12)).astype(dtype)
        w = rng.standard_normal((16, 8, 3, 3)).astype(dtype)

        k = load_lane("py")
        assert k.lane() == "numpy"
        y_py, cols_py = k.conv2d_forward(x, w, stride=1, pad=1)
        dy = rng.standard_normal(y_py.shape).astype(dtype)
        dx_py, dw_py = k.conv2d_backward(w, cols_py, dy, x.shape, 1, 1)
        p_py = k.avg_pool2d_forward(x, 2)
        dp_py = k.avg_pool2d_backward(p_py, 2)

        k = load_lane("cy")
        assert k.lane() == "cython"
        y_cy, cols_cy = k.conv2d_forward(x, w, stride=1, pad=1)
        dx_cy, dw_cy = k.conv2d_backward(w, cols_cy, dy, x.shape, 1, 1)
        p_cy = k.avg_pool2d_forward(x, 2)
        dp_cy = k.avg_pool2d_backward(p_py, 2)

        assert np.array_equal(y_py, y_cy)
        assert np.array_equal(cols_py, cols_cy)
        assert np.array_equal(dx_py, dx_cy)
        assert np.array_equal(dw_py, dw_cy)
        assert np.array_equal(p_py, p_cy)
        assert np.array_equal(dp_py, dp_cy)

    def test_lane_selection_env_var(self):
        k = load_lane("py")
        assert k.lane() == "numpy"
        k = load_lane("auto")
        assert k.lane() in ("numpy", "cython")

    def test_unknown_lane_rejected(self):
        with pytest.raises(ValueError):
            load_lane("gpu")
