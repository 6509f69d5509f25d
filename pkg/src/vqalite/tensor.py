"""Reverse-mode autodiff over numpy buffers.

A ``Tensor`` wraps an ndarray, remembers the tensors it was computed from
and a closure that routes gradients back to them. ``backward()`` on a
scalar runs the closures in reverse topological order, accumulating into
``.grad`` additively so a tensor feeding several consumers receives the
sum of all path gradients.

Precision is float32 by default; gradient checking switches to float64
via ``default_dtype``. Broadcasting follows trailing-dimension alignment
with size-1 expansion and nothing fancier.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels

DTYPE = np.float32

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used by tensor factories."""
    global DTYPE
    prev = DTYPE
    DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        DTYPE = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad=False):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()

    # ---- basic introspection ----

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # ---- backward pass ----

    def backward(self):
        """Populate ``.grad`` of every reachable requires_grad leaf.

        Only valid on a scalar (single-element) tensor produced by a
        tracked computation.
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar root, got shape {self.shape}")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def zero_grad(self):
        self.grad = None


# ---- graph plumbing ----


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else DTYPE
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward(out)
    return out


def _accum(t, g, own=False):
    """Add ``g`` into ``t.grad``.

    ``own=True`` lets the first contribution bind ``g`` directly instead
    of copying. Callers may only pass it for arrays they freshly
    computed, or for at most one parent per op when handing through
    ``out.grad`` (two parents binding the same buffer would corrupt each
    other through later in-place accumulation).
    """
    if not t.requires_grad:
        return
    if t.grad is None:
        if own and g.flags.writeable:
            t.grad = g
        else:
            t.grad = np.array(g)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Sum g down to ``shape``, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, opname):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{opname}: cannot broadcast {a.shape} with {b.shape}") from None


# ---- elementwise ops ----


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    _check_broadcast(a, b, "add")
    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape), own=True)
            gb = _unbroadcast(out.grad, b.shape)
            _accum(b, gb, own=gb is not out.grad)
        return run
    return _make(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    _check_broadcast(a, b, "sub")
    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad, a.shape), own=True)
            _accum(b, -_unbroadcast(out.grad, b.shape), own=True)
        return run
    return _make(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    _check_broadcast(a, b, "mul")
    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad * b.data, a.shape), own=True)
            _accum(b, _unbroadcast(out.grad * a.data, b.shape), own=True)
        return run
    return _make(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    _check_broadcast(a, b, "div")
    def bw(out):
        def run():
            _accum(a, _unbroadcast(out.grad / b.data, a.shape), own=True)
            _accum(b, _unbroadcast(-out.grad * a.data / (b.data * b.data), b.shape), own=True)
        return run
    return _make(a.data / b.data, (a, b), bw)


def neg(a):
    def bw(out):
        def run():
            _accum(a, -out.grad, own=True)
        return run
    return _make(-a.data, (a,), bw)


def square(a):
    def bw(out):
        def run():
            _accum(a, out.grad * (2.0 * a.data), own=True)
        return run
    return _make(a.data * a.data, (a,), bw)


def sqrt(a):
    y = np.sqrt(a.data)
    def bw(out):
        def run():
            _accum(a, out.grad * (0.5 / y), own=True)
        return run
    return _make(y, (a,), bw)


def absolute(a):
    def bw(out):
        def run():
            _accum(a, out.grad * np.sign(a.data), own=True)
        return run
    return _make(np.abs(a.data), (a,), bw)


def relu(a):
    # derivative at exactly 0 is defined as 0
    mask = a.data > 0
    def bw(out):
        def run():
            _accum(a, out.grad * mask, own=True)
        return run
    return _make(np.where(mask, a.data, a.data.dtype.type(0)), (a,), bw)


def sigmoid(a):
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    def bw(out):
        def run():
            _accum(a, out.grad * (y * (1.0 - y)), own=True)
        return run
    return _make(y, (a,), bw)


def tanh(a):
    y = np.tanh(a.data)
    def bw(out):
        def run():
            _accum(a, out.grad * (1.0 - y * y), own=True)
        return run
    return _make(y, (a,), bw)


def clamp(a, lo, hi):
    mask = (a.data >= lo) & (a.data <= hi)
    def bw(out):
        def run():
            _accum(a, out.grad * mask, own=True)
        return run
    return _make(np.clip(a.data, lo, hi), (a,), bw)


# ---- matmul ----


def matmul(a, b):
    """Matrix product: 2D x 2D, or batched 3D with matching batch dims."""
    a, b = _as_tensor(a), _as_tensor(b, like=a)
    da, db_ = a.data, b.data
    if da.ndim == 2 and db_.ndim == 2:
        if da.shape[1] != db_.shape[0]:
            raise ShapeError(f"matmul: inner dims disagree for {da.shape} @ {db_.shape}")
    elif da.ndim == 3 and db_.ndim == 3:
        if da.shape[0] != db_.shape[0] or da.shape[2] != db_.shape[1]:
            raise ShapeError(f"matmul: incompatible batched shapes {da.shape} @ {db_.shape}")
    else:
        raise ShapeError(f"matmul: unsupported ranks {da.shape} @ {db_.shape}")

    def bw(out):
        def run():
            g = out.grad
            if da.ndim == 2:
                _accum(a, g @ db_.T, own=True)
                _accum(b, da.T @ g, own=True)
            else:
                _accum(a, np.matmul(g, db_.transpose(0, 2, 1)), own=True)
                _accum(b, np.matmul(da.transpose(0, 2, 1), g), own=True)
        return run
    return _make(np.matmul(da, db_), (a, b), bw)


# ---- reductions ----


def tsum(a, axis=None, keepdims=False):
    def bw(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.shape), own=True)
        return run
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    scale = a.data.dtype.type(1.0 / n)
    def bw(out):
        def run():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g * scale, a.shape), own=True)
        return run
    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


# ---- shape ops ----


def reshape(a, shape):
    def bw(out):
        def run():
            _accum(a, out.grad.reshape(a.shape), own=True)
        return run
    return _make(a.data.reshape(shape), (a,), bw)


def transpose(a, axes):
    inv = np.argsort(axes)
    def bw(out):
        def run():
            _accum(a, out.grad.transpose(inv), own=True)
        return run
    return _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), bw)


def concat(tensors, axis=0):
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def bw(out):
        def run():
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, out.grad[tuple(idx)], own=True)
        return run
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = list(tensors)
    def bw(out):
        def run():
            for k, t in enumerate(tensors):
                _accum(t, np.take(out.grad, k, axis=axis), own=True)
        return run
    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


# ---- softmax family ----


def softmax(a, axis=-1):
    """Numerically stable softmax along ``axis``; rows sum to one."""
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    def bw(out):
        def run():
            g = out.grad
            _accum(a, y * (g - (g * y).sum(axis=axis, keepdims=True)), own=True)
        return run
    return _make(y, (a,), bw)


def log_softmax(a, axis=-1):
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)
    def bw(out):
        def run():
            g = out.grad
            _accum(a, g - sm * g.sum(axis=axis, keepdims=True), own=True)
        return run
    return _make(y, (a,), bw)


# ---- lookup / spatial ops ----


def embedding(weight, ids):
    """Row lookup into ``weight`` by an integer ndarray ``ids``."""
    ids = np.asarray(ids)
    def bw(out):
        def run():
            if weight.requires_grad:
                if weight.grad is None:
                    weight.grad = np.zeros_like(weight.data)
                np.add.at(weight.grad, ids, out.grad)
        return run
    return _make(weight.data[ids], (weight,), bw)


def take(a, index, axis=0):
    """Select the slice at integer ``index`` along ``axis``."""
    def bw(out):
        def run():
            if not a.requires_grad:
                return
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            sel = [slice(None)] * a.data.ndim
            sel[axis] = index
            a.grad[tuple(sel)] += out.grad
        return run
    return _make(np.take(a.data, index, axis=axis), (a,), bw)


def conv2d(x, w, bias=None, stride=1, padding=0):
    """Cross-correlation of NCHW input with (F, C, kh, kw) kernels."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4D input and kernels, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch between input {x.shape} and kernels {w.shape}")
    y, cols = kernels.conv2d_forward(x.data, w.data, stride, padding)
    if bias is not None:
        y = y + bias.data.reshape(1, -1, 1, 1)
    parents = (x, w) if bias is None else (x, w, bias)
    def bw(out):
        def run():
            dy = out.grad
            dx, dw = kernels.conv2d_backward(w.data, cols, dy, x.shape, stride, padding)
            _accum(x, dx, own=True)
            _accum(w, dw, own=True)
            if bias is not None:
                _accum(bias, dy.sum(axis=(0, 2, 3)), own=True)
        return run
    return _make(y, parents, bw)


def avg_pool2d(x, k=2):
    y = kernels.avg_pool2d_forward(x.data, k)
    def bw(out):
        def run():
            _accum(x, kernels.avg_pool2d_backward(out.grad, k), own=True)
        return run
    return _make(y, (x,), bw)


def tile_spatial(q, h, w):
    """Replicate a (N, m) tensor to (N, m, h, w); backward sums the h*w copies."""
    data = np.ascontiguousarray(
        np.broadcast_to(q.data[:, :, None, None], q.shape + (h, w))
    )
    def bw(out):
        def run():
            _accum(q, out.grad.sum(axis=(2, 3)), own=True)
        return run
    return _make(data, (q,), bw)


# ---- operator sugar ----

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(_as_tensor(other, like=self), self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(_as_tensor(other, like=self), self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
Tensor.square = square
Tensor.sqrt = sqrt
Tensor.abs = absolute
Tensor.relu = relu
Tensor.sigmoid = sigmoid
Tensor.tanh = tanh
Tensor.clamp = clamp
Tensor.sum = tsum
Tensor.mean = tmean
Tensor.reshape = reshape
Tensor.transpose = transpose
Tensor.softmax = softmax
Tensor.log_softmax = log_softmax


# ---- factories ----


def tensor(data, requires_grad=False, dtype=None):
    arr = np.asarray(data, dtype=dtype or DTYPE)
    return Tensor(arr, requires_grad=requires_grad)


def zeros(shape, requires_grad=False, dtype=None):
    return Tensor(np.zeros(shape, dtype=dtype or DTYPE), requires_grad=requires_grad)


def ones(shape, requires_grad=False, dtype=None):
    return Tensor(np.ones(shape, dtype=dtype or DTYPE), requires_grad=requires_grad)


def parameter(data, dtype=None):
    return Tensor(np.asarray(data, dtype=dtype or DTYPE), requires_grad=True)
