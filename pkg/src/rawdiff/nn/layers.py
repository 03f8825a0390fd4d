"""Parameterized layers on top of :mod:`rawdiff.nn.tensor`."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Parameter container; attributes that are Tensors, Modules or lists of Modules are walked."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> dict:
        return dict(self.named_parameters())

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _param(arr, dtype) -> Tensor:
    return Tensor(np.asarray(arr, dtype=dtype), requires_grad=True)


class Conv2d(Module):
    def __init__(self, cin, cout, k=3, stride=1, padding=None, rng=None, dtype=np.float32, zero_init=False):
        rng = rng or np.random.default_rng(0)
        fan_in = cin * k * k
        w = np.zeros((cout, cin, k, k)) if zero_init else rng.normal(0, np.sqrt(2.0 / fan_in), (cout, cin, k, k))
        self.weight = _param(w, dtype)
        self.bias = _param(np.zeros(cout), dtype)
        self.stride = stride
        self.padding = k // 2 if padding is None else padding

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k=4, stride=2, padding=1, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        fan_in = cin * k * k / (stride * stride)
        self.weight = _param(rng.normal(0, np.sqrt(2.0 / fan_in), (cin, cout, k, k)), dtype)
        self.bias = _param(np.zeros(cout), dtype)
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return T.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding)


class GroupNorm(Module):
    def __init__(self, channels, groups=8, dtype=np.float32):
        self.groups = min(groups, channels)
        while channels % self.groups:
            self.groups -= 1
        self.weight = _param(np.ones(channels), dtype)
        self.bias = _param(np.zeros(channels), dtype)

    def forward(self, x):
        return T.group_norm(x, self.groups, self.weight, self.bias)


class Linear(Module):
    def __init__(self, cin, cout, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(cin)
        self.weight = _param(rng.uniform(-bound, bound, (cout, cin)), dtype)
        self.bias = _param(np.zeros(cout), dtype)

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class Embedding(Module):
    def __init__(self, num, dim, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        self.table = _param(rng.normal(0, 1.0, (num, dim)), dtype)

    def forward(self, ids):
        return T.embedding(ids, self.table)
