"""Adam optimizer over dictionaries of named arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(ValueError):
    pass


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place.

    Raises NonFiniteGradient, leaving params and state untouched, if any
    gradient holds a NaN or infinity.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name}")

    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    step = state.lr * np.sqrt(1 - b2**t) / (1 - b1**t)
    # eps is added to the bias-corrected second moment root, as in the original algorithm
    eps_hat = state.epsilon * np.sqrt(1 - b2**t)
    for name, p in params.items():
        g = grads[name].astype(np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.shape, p.dtype)
            state.v[name] = np.zeros(p.shape, p.dtype)
        m = b1 * state.m[name] + (1 - b1) * g
        v = b2 * state.v[name] + (1 - b2) * g * g
        state.m[name][...] = m
        state.v[name][...] = v
        p -= (step * m / (np.sqrt(v) + eps_hat)).astype(p.dtype)
