"""Parameter store and the Adam update."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class ParamStore:
    """Ordered collection of parameters plus Adam moment state."""

    def __init__(self, params: list[Parameter]):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.params = list(params)
        self.first_moment = {p.name: np.zeros_like(p.data) for p in params}
        self.second_moment = {p.name: np.zeros_like(p.data) for p in params}
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0

    def total_size(self) -> int:
        return sum(p.size for p in self.params)


def adam_step(store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7) -> None:
    """Bias-corrected Adam update over every parameter in the store."""
    store.step_count += 1
    t = store.step_count
    for p in store.params:
        g = p.grad
        if np.isnan(g).any():
            raise RuntimeError(f"NaN gradient in parameter {p.name!r}")
        m = store.first_moment[p.name]
        v = store.second_moment[p.name]
        m[...] = beta1 * m + (1 - beta1) * g
        v[...] = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.data[...] = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
