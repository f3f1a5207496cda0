"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """Per-parameter moment estimates plus hyperparameters."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    params: dict, grads: dict, state: AdamState
) -> tuple[dict, AdamState]:
    """One Adam update; pure, returns fresh params and state.

    m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2, then bias-corrected with
    the incremented step counter: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
    """
    t = state.t + 1
    new_params = {}
    new_m = {}
    new_v = {}
    for name, theta in params.items():
        g = grads[name]
        m = state.beta1 * state.m.get(name, 0.0) + (1 - state.beta1) * g
        v = state.beta2 * state.v.get(name, 0.0) + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new_params[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(
        lr=state.lr,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        t=t,
        m=new_m,
        v=new_v,
    )
