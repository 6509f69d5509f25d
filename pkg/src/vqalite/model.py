"""End-to-end answer model and its ablation variants.

Forward path: encode question, encode and normalize the image, attend
(two glimpses), count from ground-truth boxes and the first glimpse's
logits, then fuse:

    x = fuse(Linear(V_att), Linear(q))
    x = x + BatchNorm(ReLU(Linear(c)))
    logits = Linear(x)

Ablations (Table-style comparisons):
  no-count      skip the count residual
  no-text       zero q at the fusion input only; attention stays conditioned
  no-attention  V_att becomes the spatial mean of V repeated per glimpse
  no-attn-count both of the above structural cuts together
"""

import numpy as np

from . import tensor as T
from .attention import GLIMPSES, GlimpseAttention, apply_attention, fuse
from .counting import count_vectors
from .layers import BatchNorm1d, Linear, Module
from .text import QuestionEncoder
from .vision import FEATURE_CHANNELS, FEATURE_SIZE, ImageEncoder, l2_normalize_features

ABLATION_MODES = ("none", "no-count", "no-text", "no-attention", "no-attn-count")


class FusionHead(Module):
    def __init__(self, rng, visual_width, question_width, count_width, fused_width, num_answers):
        super().__init__()
        self.project_visual = Linear(rng, visual_width, fused_width)
        self.project_question = Linear(rng, question_width, fused_width)
        self.project_count = Linear(rng, count_width, fused_width)
        self.count_norm = BatchNorm1d(fused_width)
        self.output = Linear(rng, fused_width, num_answers)

    def fuse_modalities(self, v_att, q):
        return fuse(self.project_visual(v_att), self.project_question(q))

    def integrate_count(self, x, c):
        return T.add(x, self.count_norm(T.relu(self.project_count(c))))

    def __call__(self, v_att, q, c=None):
        x = self.fuse_modalities(v_att, q)
        if c is not None:
            x = self.integrate_count(x, c)
        return self.output(x)


class VqaModel(Module):
    """Question + image + boxes -> answer logits."""

    def __init__(
        self,
        rng,
        vocab_size,
        num_answers,
        embedding_dim=300,
        gru_hidden=128,
        common_width=256,
        fused_width=1024,
        max_count=10,
        dropout_rate=0.0,
        mode="none",
        dropout_rng=None,
    ):
        super().__init__()
        if mode not in ABLATION_MODES:
            raise ValueError(f"unknown ablation mode {mode!r}; expected one of {ABLATION_MODES}")
        self.mode = mode
        self.max_count = max_count
        self.text = QuestionEncoder(rng, vocab_size, embedding_dim, gru_hidden)
        self.image = ImageEncoder(rng)
        self.attention = GlimpseAttention(
            rng,
            FEATURE_CHANNELS,
            2 * gru_hidden,
            common_width,
            dropout_rate=dropout_rate,
            dropout_rng=dropout_rng,
        )
        self.head = FusionHead(
            rng,
            GLIMPSES * FEATURE_CHANNELS,
            2 * gru_hidden,
            max_count + 1,
            fused_width,
            num_answers,
        )

    @property
    def uses_attention(self):
        return self.mode not in ("no-attention", "no-attn-count")

    @property
    def uses_count(self):
        return self.mode not in ("no-count", "no-attn-count")

    def parameters(self):
        """Only the parameters the current mode can reach.

        Sub-modules cut by an ablation never appear in the graph, so
        they would trip the optimizer's missing-gradient guard; state
        dicts and checkpoints still carry the full model.
        """
        skip = ()
        if not self.uses_count:
            skip += ("head.project_count.", "head.count_norm.")
        if not (self.uses_attention or self.uses_count):
            skip += ("attention.",)
        return [p for name, p in self.named_parameters() if not name.startswith(skip)]

    def __call__(self, images, ids, lengths, geoms):
        """images (N,3,64,64), ids (N,T), lengths (N,), geoms: per-sample
        BoxGeometry list. Returns answer logits (N, num_answers)."""
        q = self.text(ids, lengths)
        v = l2_normalize_features(self.image(images))
        n, c_ch, h, w = v.shape

        need_maps = self.uses_attention or self.uses_count
        a_maps = self.attention.maps(v, q) if need_maps else None

        if self.uses_attention:
            v_att = apply_attention(a_maps, v)
        else:
            vmean = T.tmean(v, axis=(2, 3))
            v_att = T.concat([vmean] * GLIMPSES, axis=1)

        if self.mode == "no-text":
            q_fused = T.Tensor(np.zeros_like(q.data))
        else:
            q_fused = q

        c = None
        if self.uses_count:
            a1 = T.reshape(T.take(a_maps, 0, axis=1), (n, h * w))
            c = count_vectors(a1, geoms, self.max_count)

        return self.head(v_att, q_fused, c)

    def predict(self, images, ids, lengths, geoms):
        """Answer probabilities (rows sum to 1)."""
        return T.softmax(self(images, ids, lengths, geoms), axis=1)


def cross_entropy(logits, targets, smoothing=0.0):
    """Mean cross-entropy from logits via log-sum-exp.

    With smoothing > 0 the target distribution is (1 - eps) on the true
    class and eps/(K-1) spread over the rest.
    """
    n, k = logits.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise T.ShapeError(f"expected {n} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= k):
        raise ValueError(f"target class out of range for {k} answers")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"label smoothing must be in [0, 1), got {smoothing}")
    dtype = logits.data.dtype
    dist = np.full((n, k), smoothing / (k - 1), dtype=dtype)
    dist[np.arange(n), targets] = 1.0 - smoothing
    logp = T.log_softmax(logits, axis=1)
    total = T.tsum(T.mul(logp, T.Tensor(dist)))
    return T.div(T.neg(total), dtype.type(n))
