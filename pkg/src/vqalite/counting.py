"""Differentiable object counter driven by boxes and an attention map.

Each box reads an attention score from the logits of the first glimpse
map: the sigmoid of the mean logit over the grid cells whose centers
fall inside the box (nearest cell if none do). Overlapping confident
boxes are then deduplicated softly,

    s_ij = sigmoid(kappa * (IoU_ij - tau))        i != j
    count = sum_i a_i / (1 + sum_{j != i} a_j * s_ij)

so a cluster of m near-identical boxes with a=1 contributes m * 1/m = 1
in the sharp limit. The scalar count is finally hat-encoded over integer
bins 0..max_count.

Box geometry (cell membership, pairwise overlap) depends only on the
ground-truth boxes, so it is precomputed once per sample and reused
every epoch.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T

TAU = 0.5
KAPPA = 20.0


def iou_matrix(boxes):
    """Pairwise intersection-over-union of (N, 4) x0,y0,x1,y1 boxes."""
    b = np.asarray(boxes, dtype=np.float64)
    if b.size == 0:
        return np.zeros((0, 0))
    x0, y0, x1, y1 = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    if np.any(x0 >= x1) or np.any(y0 >= y1):
        raise ValueError("iou_matrix: degenerate box with non-positive extent")
    ix = np.maximum(
        0.0, np.minimum(x1[:, None], x1[None, :]) - np.maximum(x0[:, None], x0[None, :])
    )
    iy = np.maximum(
        0.0, np.minimum(y1[:, None], y1[None, :]) - np.maximum(y0[:, None], y0[None, :])
    )
    inter = ix * iy
    area = (x1 - x0) * (y1 - y0)
    union = area[:, None] + area[None, :] - inter
    return inter / union


def cell_centers(h, w):
    """(h*w, 2) array of (x, y) cell centers on the unit square, row-major."""
    ys, xs = np.divmod(np.arange(h * w), w)
    return np.stack([(xs + 0.5) / w, (ys + 0.5) / h], axis=1)


def box_pool_matrix(boxes, h, w):
    """(N, h*w) averaging matrix: row i means the logits inside box i.

    A box containing no cell center falls back to the single nearest
    cell (row-major first on ties), so every row sums to 1.
    """
    b = np.asarray(boxes, dtype=np.float64)
    n = b.shape[0]
    centers = cell_centers(h, w)
    pool = np.zeros((n, h * w))
    for i in range(n):
        x0, y0, x1, y1 = b[i]
        inside = (
            (centers[:, 0] >= x0)
            & (centers[:, 0] <= x1)
            & (centers[:, 1] >= y0)
            & (centers[:, 1] <= y1)
        )
        k = int(inside.sum())
        if k > 0:
            pool[i, inside] = 1.0 / k
        else:
            cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
            d2 = (centers[:, 0] - cx) ** 2 + (centers[:, 1] - cy) ** 2
            pool[i, int(np.argmin(d2))] = 1.0
    return pool


def overlap_weights(iou, tau=TAU, kappa=KAPPA):
    """Soft overlap indicator s_ij with a zeroed diagonal."""
    s = 1.0 / (1.0 + np.exp(-kappa * (np.asarray(iou, dtype=np.float64) - tau)))
    np.fill_diagonal(s, 0.0)
    return s


@dataclass
class BoxGeometry:
    """Precomputed per-sample constants: n boxes, pool (n, h*w), s (n, n)."""

    n: int
    pool: np.ndarray
    overlap: np.ndarray


def build_box_geometry(boxes, h, w, tau=TAU, kappa=KAPPA):
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if b.shape[0] == 0:
        return BoxGeometry(0, np.zeros((0, h * w)), np.zeros((0, 0)))
    return BoxGeometry(
        n=b.shape[0],
        pool=box_pool_matrix(b, h, w),
        overlap=overlap_weights(iou_matrix(b), tau, kappa),
    )


def box_attention_scores(a1_flat, pool):
    """Per-box scores: sigmoid of pooled logits. a1_flat: Tensor (h*w,)."""
    dtype = a1_flat.data.dtype
    p = T.Tensor(pool.astype(dtype))
    logits = T.reshape(a1_flat, (a1_flat.size, 1))
    return T.sigmoid(T.matmul(p, logits))


def soft_count_from_scores(a, s):
    """Cluster-normalized count; a: Tensor (n, 1), s: ndarray (n, n)."""
    dtype = a.data.dtype
    denom = T.matmul(T.Tensor(s.astype(dtype)), a)
    one = dtype.type(1)
    return T.tsum(T.div(a, T.add(one, denom)))


def soft_count(a, iou, tau=TAU, kappa=KAPPA):
    """Count from scores and raw IoU; accepts a as Tensor or array."""
    if not isinstance(a, T.Tensor):
        a = T.Tensor(np.asarray(a, dtype=np.float64))
    a2 = T.reshape(a, (a.size, 1))
    return soft_count_from_scores(a2, overlap_weights(iou, tau, kappa))


def count_feature_vector(count, max_count):
    """Hat-encode a scalar count over bins 0..max_count.

    c_k = max(0, 1 - |count - k|); counts beyond max_count clamp to the
    last bin, so the encoding always sums to 1.
    """
    dtype = count.data.dtype
    clamped = T.clamp(T.reshape(count, (1,)), 0.0, float(max_count))
    ks = T.Tensor(np.arange(max_count + 1, dtype=dtype))
    return T.relu(T.sub(dtype.type(1), T.absolute(T.sub(clamped, ks))))


def greedy_nms_count(boxes, a, tau=TAU):
    """Hard-count oracle: keep confident boxes, suppress IoU > tau repeats.

    Boxes are visited in descending score order; each kept box suppresses
    later boxes overlapping it beyond tau. Only used for verification.
    """
    b = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(a, dtype=np.float64).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    iou = iou_matrix(b) if b.shape[0] else np.zeros((0, 0))
    kept = []
    for i in order:
        if scores[i] < 0.5:
            continue
        if all(iou[i, j] <= tau for j in kept):
            kept.append(i)
    return len(kept)


def count_vectors(a1_flat_batch, geoms, max_count, tau=TAU, kappa=KAPPA):
    """Hat-encoded counts for a batch.

    a1_flat_batch: Tensor (N, h*w) of first-glimpse logits; geoms: one
    BoxGeometry per sample. Returns Tensor (N, max_count + 1).
    """
    n = a1_flat_batch.shape[0]
    if len(geoms) != n:
        raise ValueError(f"got {len(geoms)} box geometries for a batch of {n}")
    dtype = a1_flat_batch.data.dtype
    rows = []
    for i, geom in enumerate(geoms):
        if geom.n == 0:
            count = T.Tensor(np.zeros((), dtype=dtype))
        else:
            logits_i = T.take(a1_flat_batch, i, axis=0)
            a = box_attention_scores(logits_i, geom.pool)
            count = soft_count_from_scores(a, geom.overlap)
        rows.append(count_feature_vector(count, max_count))
    return T.stack(rows, axis=0)
