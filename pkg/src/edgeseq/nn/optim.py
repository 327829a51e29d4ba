from __future__ import annotations

import numpy as np

from .layers import Parameter


def step_halving_lr(base_lr: float, epoch: int, halve_every: int) -> float:
    """``base_lr * 0.5 ** (epoch // halve_every)``."""
    if halve_every <= 0:
        return base_lr
    return base_lr * 0.5 ** (epoch // halve_every)


class Adam:
    """Bias-corrected Adam with a step-halving learning-rate schedule."""

    def __init__(
        self,
        params: dict[str, Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        halve_every: int = 200,
    ):
        self.params = params
        self.base_lr = lr
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.halve_every = halve_every
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def set_epoch(self, epoch: int):
        self.lr = step_halving_lr(self.base_lr, epoch, self.halve_every)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * p.grad * p.grad
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray], t: int):
        for k in self.params:
            self.m[k][...] = tensors[f"adam.m.{k}"]
            self.v[k][...] = tensors[f"adam.v.{k}"]
        self.t = t
