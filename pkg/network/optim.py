"""
AdamW with decoupled weight decay and the warmup + cosine learning-rate schedule
"""
from __future__ import annotations

from classes.data_classes import TrainConfig

import numpy as np

def lr_at(step: int, tc: TrainConfig) -> float:
    """
    Linear warmup to lr_init, then cosine annealing down to eta_min
    :param step: 0-based optimizer step
    :param tc: TrainConfig
    :return: learning rate
    """
    if step < tc.warmup_steps:
        return tc.lr_init * (step + 1) / tc.warmup_steps
    remaining = max(tc.steps - tc.warmup_steps, 1)
    progress = min((step - tc.warmup_steps) / remaining, 1.0)
    return tc.eta_min + 0.5 * (tc.lr_init - tc.eta_min) * (1.0 + np.cos(np.pi * progress))

class AdamW:
    """
    :param parameters: list of Parameter
    :param tc: TrainConfig (betas, eps, weight_decay)
    """
    def __init__(self, parameters: list, tc: TrainConfig):
        self.parameters = list(parameters)
        self.beta1, self.beta2 = tc.betas
        self.eps = tc.eps
        self.weight_decay = tc.weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.tensor.data) for p in self.parameters}
        self.v = {p.name: np.zeros_like(p.tensor.data) for p in self.parameters}

    def step(self, lr: float):
        """
        One update of every parameter that received a gradient
        """
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for parameter in self.parameters:
            tensor = parameter.tensor
            if tensor.grad is None:
                continue
            m, v = self.m[parameter.name], self.v[parameter.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * tensor.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * tensor.grad * tensor.grad
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            tensor.data *= 1.0 - lr * self.weight_decay
            tensor.data -= (lr * update).astype(tensor.data.dtype)

    def zero_grad(self):
        for parameter in self.parameters:
            parameter.tensor.grad = None
