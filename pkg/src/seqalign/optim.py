"""Adam optimizer and the step-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from .store import ParameterStore


def lr_schedule(epoch: int, base_lr: float) -> float:
    """Halve the rate every 50 epochs; constant from epoch 150 onward."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return base_lr * 0.5 ** min(epoch // 50, 3)


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update to every parameter in the store.

    Parameters with no accumulated gradient are treated as having a zero
    gradient. Gradients are cleared afterwards.
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        g = g.astype(p.data.dtype, copy=False)
        m = store.opt_m.get(name)
        if m is None:
            m = store.opt_m[name] = np.zeros_like(p.data)
            store.opt_v[name] = np.zeros_like(p.data)
        v = store.opt_v[name]
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.grad = None
