"""Adam with decoupled weight decay and a linear warmup/decay schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from synlm.model import no_weight_decay


@dataclass
class TrainSchedule:
    total_steps: int = 2000
    warmup_steps: int = 120
    peak_lr: float = 3e-4
    batch_size: int = 16
    seed: int = 42

    def __post_init__(self):
        if not 0 <= self.warmup_steps < self.total_steps:
            raise ValueError(
                f"warmup_steps {self.warmup_steps} must be < total_steps {self.total_steps}")

    def lr_at(self, step: int) -> float:
        """Linear ramp to peak over warmup, then linear decay to 0."""
        if step < self.warmup_steps:
            return self.peak_lr * (step + 1) / self.warmup_steps
        return self.peak_lr * (self.total_steps - step) / (self.total_steps - self.warmup_steps)


class Adam:
    """Per-tensor Adam moments; decay is skipped for LN, biases and alpha."""

    def __init__(self, params: dict[str, np.ndarray], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             lr: float) -> None:
        """In-place update of every parameter that has a gradient."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and not no_weight_decay(name):
                update = update + self.weight_decay * params[name]
            params[name] -= lr * update
