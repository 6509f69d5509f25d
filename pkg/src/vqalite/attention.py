"""Glimpse attention over image features, conditioned on the question.

Pipeline per batch:
  V' = 1x1 conv of V to width m        q' = linear map of q to width m
  F  = fuse(V', tile(q'))              fuse(x, y) = -(x - y)^2 + relu(x + y)
  A  = 1x1 conv of F to G glimpse logit maps (no bias)
  per glimpse: softmax over the H*W positions, weighted sum of V columns
  output: concatenation over glimpses, length G*C

The raw logit maps A are kept around because the counter consumes the
first one.
"""

import numpy as np

from . import tensor as T
from .layers import Conv2d, Dropout, Linear, Module

GLIMPSES = 2


def fuse(x, y):
    """Elementwise -(x - y)^2 + relu(x + y); symmetric, f(x,x) = relu(2x)."""
    if x.shape != y.shape:
        raise T.ShapeError(f"fuse: shapes differ, {x.shape} vs {y.shape}")
    return T.add(T.neg(T.square(T.sub(x, y))), T.relu(T.add(x, y)))


class GlimpseAttention(Module):
    def __init__(self, rng, channels, question_width, common_width, dropout_rate=0.0, dropout_rng=None):
        super().__init__()
        self.channels = channels
        self.common_width = common_width
        self.project_v = Conv2d(rng, channels, common_width, 1)
        self.project_q = Linear(rng, question_width, common_width)
        self.head = Conv2d(rng, common_width, GLIMPSES, 1, bias=False)
        self.drop_v = Dropout(dropout_rate, dropout_rng or rng)
        self.drop_q = Dropout(dropout_rate, dropout_rng or rng)

    def maps(self, v, q):
        """Raw glimpse logits A of shape (N, G, H, W)."""
        n, c, h, w = v.shape
        vp = self.drop_v(self.project_v(v))
        qp = self.drop_q(self.project_q(q))
        f = fuse(vp, T.tile_spatial(qp, h, w))
        return self.head(f)

    def __call__(self, v, q):
        """Returns (attended (N, G*C), logits (N, G, H, W))."""
        a = self.maps(v, q)
        return apply_attention(a, v), a


def apply_attention(a, v):
    """Spatial softmax per glimpse, then weighted sum of feature columns.

    a: (N, G, H, W) logits; v: (N, C, H, W). Output (N, G*C) with glimpse
    0's C values first.
    """
    n, g, h, w = a.shape
    vc = v.shape[1]
    if v.shape[0] != n or v.shape[2:] != (h, w):
        raise T.ShapeError(f"apply_attention: feature shape {v.shape} does not match maps {a.shape}")
    weights = T.softmax(T.reshape(a, (n, g, h * w)), axis=2)
    vflat = T.reshape(v, (n, vc, h * w))
    # (N, G, HW) x (N, HW, C) -> (N, G, C)
    attended = T.matmul(weights, T.transpose(vflat, (0, 2, 1)))
    return T.reshape(attended, (n, g * vc))


def attention_weights(a):
    """Softmaxed maps (N, G, H, W) from raw logits, for inspection."""
    n, g, h, w = a.shape
    weights = T.softmax(T.reshape(a, (n, g, h * w)), axis=2)
    return T.reshape(weights, (n, g, h, w))


def attention_to_text(weights_1hw):
    """Plain-text grid of one (H, W) weight map, 6 decimals per value."""
    arr = np.asarray(weights_1hw)
    return "\n".join(" ".join(f"{x:.6f}" for x in row) for row in arr)
