"""Image side: a small trainable CNN plus global L2 feature normalization.

The backbone maps a 3x64x64 image in [0,1] to a 64x8x8 feature map:
four conv3x3/relu blocks with channels 3-16-32-64-64 and 2x2 average
pooling after the first three blocks only.
"""

import numpy as np

from . import tensor as T
from .layers import Conv2d, Module

FEATURE_CHANNELS = 64
FEATURE_SIZE = 8
IMAGE_SIZE = 64
NORM_EPS = 1e-8


class ImageEncoder(Module):
    def __init__(self, rng):
        super().__init__()
        self.blocks = [
            Conv2d(rng, 3, 16, 3, stride=1, padding=1),
            Conv2d(rng, 16, 32, 3, stride=1, padding=1),
            Conv2d(rng, 32, 64, 3, stride=1, padding=1),
            Conv2d(rng, 64, 64, 3, stride=1, padding=1),
        ]

    def __call__(self, images):
        """images: (N, 3, 64, 64) tensor -> raw features (N, 64, 8, 8)."""
        if images.ndim != 4 or images.shape[1:] != (3, IMAGE_SIZE, IMAGE_SIZE):
            raise T.ShapeError(
                f"expected images of shape (N, 3, {IMAGE_SIZE}, {IMAGE_SIZE}), got {images.shape}"
            )
        x = images
        for i, block in enumerate(self.blocks):
            x = T.relu(block(x))
            if i < 3:
                x = T.avg_pool2d(x, 2)
        return x


def l2_normalize_features(v, eps=NORM_EPS):
    """Divide each sample's feature map by its global L2 norm plus eps.

    The norm runs over all channels and positions of one sample, so an
    all-zero map stays zero instead of dividing by zero.
    """
    norm = T.sqrt(T.tsum(T.square(v), axis=(1, 2, 3), keepdims=True))
    return T.div(v, T.add(norm, v.data.dtype.type(eps)))
