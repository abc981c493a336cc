"""Adam and the warmup/linear-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np


def linear_warmup_decay(step: int, peak_lr: float, warmup_steps: int, total_steps: int) -> float:
    """0 -> ``peak_lr`` over ``warmup_steps``, then linearly down to 0 at ``total_steps``."""
    if warmup_steps > total_steps:
        raise ValueError("warmup_steps must not exceed total_steps")
    if step <= warmup_steps:
        return peak_lr * step / warmup_steps if warmup_steps else peak_lr
    if total_steps == warmup_steps:
        return 0.0
    return peak_lr * max(0.0, (total_steps - step) / (total_steps - warmup_steps))


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            step = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            params[k] -= step.astype(params[k].dtype)
