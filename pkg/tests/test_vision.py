"""Image backbone and feature normalization."""

import numpy as np
import pytest

import vqalite.tensor as T
from vqalite.vision import (
    FEATURE_CHANNELS,
    FEATURE_SIZE,
    IMAGE_SIZE,
    ImageEncoder,
    l2_normalize_features,
)


def encoder():
    return ImageEncoder(np.random.default_rng(17))


def test_output_geometry():
    enc = encoder()
    x = T.tensor(np.random.default_rng(0).random((2, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32))
    v = enc(x)
    assert v.shape == (2, FEATURE_CHANNELS, FEATURE_SIZE, FEATURE_SIZE)


def test_zero_image_gives_zero_features_before_bias():
    enc = encoder()
    for block in enc.blocks:
        block.bias.data[:] = 0
    v = enc(T.tensor(np.zeros((1, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)))
    np.testing.assert_array_equal(v.data, 0)


def test_features_respond_to_input():
    enc = encoder()
    a = enc(T.tensor(np.zeros((1, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)))
    b = enc(T.tensor(np.ones((1, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)))
    assert not np.allclose(a.data, b.data)


def test_features_are_nonnegative_after_relu():
    enc = encoder()
    x = T.tensor(np.random.default_rng(1).random((2, 3, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32))
    assert np.all(enc(x).data >= 0)


class TestL2Normalize:
    def test_unit_global_norm(self, rng):
        v = T.tensor(rng.standard_normal((3, 4, 5, 5)).astype(np.float32))
        out = l2_normalize_features(v)
        norms = np.sqrt((out.data.astype(np.float64) ** 2).sum(axis=(1, 2, 3)))
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_scale_invariance(self, rng):
        x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        a = l2_normalize_features(T.tensor(x))
        b = l2_normalize_features(T.tensor(50.0 * x))
        np.testing.assert_allclose(a.data, b.data, atol=1e-5)

    def test_zero_input_stays_finite(self):
        out = l2_normalize_features(T.tensor(np.zeros((1, 2, 3, 3), dtype=np.float32)))
        assert np.all(np.isfinite(out.data))
        np.testing.assert_array_equal(out.data, 0)

    def test_each_sample_normalized_independently(self, rng):
        x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
        x[1] *= 100
        out = l2_normalize_features(T.tensor(x))
        norms = np.sqrt((out.data.astype(np.float64) ** 2).sum(axis=(1, 2, 3)))
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_gradient_flows(self, rng):
        v = T.tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
        with T.default_dtype(np.float64):
            T.tsum(T.square(l2_normalize_features(v))).backward()
        assert v.grad is not None
        assert np.all(np.isfinite(v.grad))
