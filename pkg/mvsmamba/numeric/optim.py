"""
First-order optimiser
"""

from typing import Sequence

import numpy as np

from mvsmamba.config.constants import ADAM_BETAS, ADAM_EPS
from mvsmamba.numeric.tensor import Tensor


class Adam:
    """Adaptive-moment optimiser with bias correction and a step learning-rate schedule"""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=ADAM_BETAS,
                 eps: float = ADAM_EPS, milestones: Sequence[int] = (), gamma: float = 0.5):
        self.params = list(params)
        self.base_lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.milestones = sorted(milestones)
        self.gamma = gamma
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self) -> float:
        passed = sum(1 for m in self.milestones if self.step_count >= m)
        return self.base_lr * self.gamma ** passed

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        lr = self.lr
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * p.grad
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * p.grad ** 2
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data -= (lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)
