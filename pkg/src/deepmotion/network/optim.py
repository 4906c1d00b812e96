"""Adadelta with L2 weight decay folded into the gradient."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdadeltaState:
    square_avg: dict[str, np.ndarray] = field(default_factory=dict)
    acc_delta: dict[str, np.ndarray] = field(default_factory=dict)
    steps: int = 0


def adadelta_step(params, grads, state: AdadeltaState | None = None, l2_weight: float = 0.001,
                  lr: float = 1.0, rho: float = 0.95, eps: float = 1e-6):
    """One Adadelta update of every parameter that has a gradient.

    Returns new ``(params, state)``; the inputs are left untouched.
    """
    state = AdadeltaState() if state is None else state
    new_params = dict(params)
    sq, acc = dict(state.square_avg), dict(state.acc_delta)
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        g = g + l2_weight * p if l2_weight else g
        s = sq.get(name)
        s = (1 - rho) * g * g if s is None else rho * s + (1 - rho) * g * g
        a = acc.get(name, np.zeros_like(p))
        delta = np.sqrt(a + eps) / np.sqrt(s + eps) * g
        acc[name] = rho * a + (1 - rho) * delta * delta
        sq[name] = s
        new_params[name] = p - lr * delta
    return new_params, AdadeltaState(sq, acc, state.steps + 1)
