"""Trainable building blocks: Linear, Conv2d, GRUCell, BatchNorm1d, Dropout.

Modules discover their parameters by attribute walk, in insertion order,
which keeps parameter ordering (and therefore checkpoints and optimizer
state) deterministic run to run. Weights start uniform in
[-1/sqrt(fan_in), +1/sqrt(fan_in)], biases at zero.
"""

import numpy as np

from . import tensor as T


def uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


class Module:
    """Base class with recursive parameter/state discovery and mode flags."""

    def __init__(self):
        self.training = True

    def _children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        """All trainable tensors as (dotted_name, tensor), depth first."""
        for name, value in vars(self).items():
            if isinstance(value, T.Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_parameters(prefix + name + ".")

    def named_state(self, prefix=""):
        """Parameters plus persistent buffers (e.g. batchnorm running stats)."""
        for name, value in vars(self).items():
            if isinstance(value, T.Tensor):
                yield prefix + name, value
        for name, child in self._children():
            yield from child.named_state(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def train(self, flag=True):
        self.training = flag
        for _, child in self._children():
            child.train(flag)
        return self

    def eval(self):
        return self.train(False)

    def param_count(self):
        return sum(p.size for p in self.parameters())


class Linear(Module):
    def __init__(self, rng, in_features, out_features, bias=True):
        super().__init__()
        self.weight = uniform_init(rng, (in_features, out_features), in_features)
        self.bias = T.zeros((out_features,), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2d(Module):
    def __init__(self, rng, in_channels, out_channels, kernel_size, stride=1, padding=0, bias=True):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = uniform_init(
            rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in
        )
        self.bias = T.zeros((out_channels,), requires_grad=True) if bias else None
        self.stride = stride
        self.padding = padding

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class GRUCell(Module):
    """Gated recurrent unit step.

    z = sigmoid(x Wz + h Uz + bz)
    r = sigmoid(x Wr + h Ur + br)
    n = tanh(x Wh + (r * h) Uh + bh)
    h' = (1 - z) * h + z * n
    """

    def __init__(self, rng, input_size, hidden_size):
        super().__init__()
        self.hidden_size = hidden_size
        self.wz = uniform_init(rng, (input_size, hidden_size), input_size)
        self.uz = uniform_init(rng, (hidden_size, hidden_size), hidden_size)
        self.bz = T.zeros((hidden_size,), requires_grad=True)
        self.wr = uniform_init(rng, (input_size, hidden_size), input_size)
        self.ur = uniform_init(rng, (hidden_size, hidden_size), hidden_size)
        self.br = T.zeros((hidden_size,), requires_grad=True)
        self.wh = uniform_init(rng, (input_size, hidden_size), input_size)
        self.uh = uniform_init(rng, (hidden_size, hidden_size), hidden_size)
        self.bh = T.zeros((hidden_size,), requires_grad=True)

    def __call__(self, x, h):
        z = T.sigmoid(T.matmul(x, self.wz) + T.matmul(h, self.uz) + self.bz)
        r = T.sigmoid(T.matmul(x, self.wr) + T.matmul(h, self.ur) + self.br)
        n = T.tanh(T.matmul(x, self.wh) + T.matmul(T.mul(r, h), self.uh) + self.bh)
        one = x.data.dtype.type(1)
        return T.add(T.mul(T.sub(one, z), h), T.mul(z, n))


class BatchNorm1d(Module):
    """Batch normalization over the leading axis of a (N, F) tensor.

    Training mode normalizes with the batch mean and population variance
    and refreshes the running estimates with momentum 0.1; eval mode uses
    the stored running estimates. Built from differentiable primitives,
    so gradients flow through the batch statistics.
    """

    def __init__(self, num_features, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = T.ones((num_features,), requires_grad=True)
        self.beta = T.zeros((num_features,), requires_grad=True)
        self.running_mean = T.zeros((num_features,))
        self.running_var = T.ones((num_features,))

    def __call__(self, x):
        if self.training:
            if x.shape[0] < 2:
                raise ValueError(
                    f"BatchNorm1d needs at least 2 rows in training mode, got {x.shape[0]}"
                )
            mu = T.tmean(x, axis=0)
            var = T.tmean(T.square(T.sub(x, mu)), axis=0)
            m = self.momentum
            self.running_mean.data = (
                (1.0 - m) * self.running_mean.data + m * mu.data
            ).astype(self.running_mean.data.dtype)
            self.running_var.data = (
                (1.0 - m) * self.running_var.data + m * var.data
            ).astype(self.running_var.data.dtype)
        else:
            mu = self.running_mean.detach()
            var = self.running_var.detach()
        xhat = T.div(T.sub(x, mu), T.sqrt(var + x.data.dtype.type(self.eps)))
        return T.add(T.mul(xhat, self.gamma), self.beta)


class Dropout(Module):
    """Inverted dropout; identity when p=0 or in eval mode."""

    def __init__(self, p, rng):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def __call__(self, x):
        if not self.training or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (self.rng.random(x.shape) < keep).astype(x.data.dtype) / x.data.dtype.type(keep)
        return T.mul(x, T.Tensor(mask))
