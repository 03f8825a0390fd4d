"""Central finite-difference check of analytic gradients."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


def numerical_grad(f, arrays, index, eps=1e-6):
    """d f(arrays) / d arrays[index] by central differences; ``f`` returns a float."""
    x = arrays[index]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f(arrays)
        x[i] = old - eps
        fm = f(arrays)
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def relative_error(a, b) -> float:
    """||a - b|| / max(||a||, ||b||), 0 when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)


def check_gradients(op, arrays, rng=None, eps=1e-6):
    """Compare autodiff against finite differences for every float input of ``op``.

    ``op`` maps Tensors to a Tensor; it is reduced to a scalar by a fixed random
    projection so the full Jacobian participates. Returns one relative error per input.
    """
    rng = rng or np.random.default_rng(0)
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*tensors)
    proj = rng.normal(size=out.shape)
    (out * Tensor(proj)).sum().backward()

    def scalar(arrs):
        return float((op(*[Tensor(a) for a in arrs]).data * proj).sum())

    return [relative_error(t.grad, numerical_grad(scalar, arrays, i, eps)) for i, t in enumerate(tensors)]


def op_cases() -> dict:
    """name -> (op, generator(rng) -> input arrays) covering every differentiable op."""
    ids = np.array([[0, 2, 1], [3, 3, 0]])
    return {
        "add_broadcast": (lambda a, b: a + b, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
        "sub": (lambda a, b: a - b, lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 1))]),
        "mul_broadcast": (lambda a, b: a * b, lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(1, 3, 1))]),
        "matmul": (lambda a, b: a @ b, lambda r: [r.normal(size=(3, 5)), r.normal(size=(5, 2))]),
        "sum_axis": (lambda a: a.sum(axis=1), lambda r: [r.normal(size=(3, 4, 2))]),
        "mean": (lambda a: a.mean(axis=(0, 2), keepdims=True), lambda r: [r.normal(size=(3, 4, 2))]),
        "reshape": (lambda a: a.reshape(6, 2) * a.reshape(6, 2), lambda r: [r.normal(size=(3, 4))]),
        "silu": (T.silu, lambda r: [r.normal(scale=3, size=(4, 5))]),
        "linear": (T.linear, lambda r: [r.normal(size=(4, 3)), r.normal(size=(2, 3)), r.normal(size=(2,))]),
        "embedding": (lambda t: T.embedding(ids, t), lambda r: [r.normal(size=(4, 3))]),
        "concat": (lambda a, b: T.concat([a, b], axis=1) * T.concat([b, a], axis=1),
                   lambda r: [r.normal(size=(2, 3, 2, 2)), r.normal(size=(2, 3, 2, 2))]),
        "mse_loss": (T.mse_loss, lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))]),
        "conv2d": (lambda x, w, b: T.conv2d(x, w, b, stride=1, padding=1),
                   lambda r: [r.normal(size=(2, 2, 5, 5)), r.normal(size=(3, 2, 3, 3)), r.normal(size=(3,))]),
        "conv2d_stride2": (lambda x, w, b: T.conv2d(x, w, b, stride=2, padding=1),
                           lambda r: [r.normal(size=(1, 2, 6, 6)), r.normal(size=(2, 2, 3, 3)), r.normal(size=(2,))]),
        "conv2d_1x1": (lambda x, w, b: T.conv2d(x, w, b),
                       lambda r: [r.normal(size=(2, 3, 3, 4)), r.normal(size=(2, 3, 1, 1)), r.normal(size=(2,))]),
        "conv_transpose2d": (lambda x, w, b: T.conv_transpose2d(x, w, b, stride=2, padding=1),
                             lambda r: [r.normal(size=(1, 2, 3, 3)), r.normal(size=(2, 3, 4, 4)), r.normal(size=(3,))]),
        "group_norm": (lambda x, w, b: T.group_norm(x, 2, w, b),
                       lambda r: [r.normal(size=(2, 4, 3, 3)), r.normal(size=(4,)), r.normal(size=(4,))]),
        "avg_pool2d": (lambda x: T.avg_pool2d(x, 2), lambda r: [r.normal(size=(2, 2, 4, 6))]),
        "upsample_nearest": (lambda x: T.upsample_nearest(x, 2), lambda r: [r.normal(size=(1, 2, 3, 2))]),
    }


def gradient_suite(instances: int = 10, seed: int = 0) -> dict:
    """Worst relative error per op over ``instances`` random float64 inputs."""
    out = {}
    for k, (name, (op, gen)) in enumerate(sorted(op_cases().items())):
        rng = np.random.default_rng([seed, k])
        out[name] = max(max(check_gradients(op, gen(rng), rng)) for _ in range(instances))
    return out
