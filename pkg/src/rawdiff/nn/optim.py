"""Adam with decoupled weight decay and a linear-warmup / cosine-decay learning rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Full-scale training recipe; desk-scale runs override total_steps (and usually lr).
FINETUNE_LR = 5e-5
FINETUNE_WARMUP = 500
FINETUNE_WEIGHT_DECAY = 1e-2


class TrainingError(RuntimeError):
    pass


def warmup_cosine_lr(step: int, lr_base: float, warmup_steps: int, total_steps: int) -> float:
    """0 at step 0, linear to ``lr_base`` at ``warmup_steps``, cosine to 0 at ``total_steps``."""
    if step < warmup_steps:
        return lr_base * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    progress = min((step - warmup_steps) / span, 1.0)
    return lr_base * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamW:
    params: dict
    lr_base: float = FINETUNE_LR
    warmup_steps: int = FINETUNE_WARMUP
    total_steps: int = 10000
    weight_decay: float = FINETUNE_WEIGHT_DECAY
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def lr(self, step: int | None = None) -> float:
        s = self.step_count if step is None else step
        return warmup_cosine_lr(s, self.lr_base, self.warmup_steps, self.total_steps)

    def step(self):
        """Apply one update using ``.grad`` of every parameter; missing grads count as zero."""
        lr = self.lr()
        t = self.step_count + 1
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient in parameter {name!r} at step {self.step_count}")
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data = (p.data - lr * update).astype(p.data.dtype, copy=False)
        self.step_count = t

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
