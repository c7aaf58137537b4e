"""Nadam: Adam with a Nesterov look-ahead on the first moment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class NadamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def nadam_update(state: NadamState, params: dict, grads: dict):
    """Apply one Nadam step to ``params`` in place; returns ``(params, state)``.

    m_t = b1 m + (1-b1) g,  v_t = b2 v + (1-b2) g^2
    m_hat = b1 m_t / (1 - b1^(t+1)) + (1-b1) g / (1 - b1^t)
    theta -= lr m_hat / (sqrt(v_t / (1 - b2^t)) + eps)
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = b1 * m / (1.0 - b1 ** (t + 1)) + (1.0 - b1) * g / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state
