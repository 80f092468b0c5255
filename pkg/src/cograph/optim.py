"""Adam with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class AdamState:
    """Per-parameter moment buffers keyed by parameter name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, named_params) -> "AdamState":
        state = cls()
        for name, p in named_params:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(named_params, grads, state: AdamState, lr: float,
              weight_decay: float = 0.0):
    """One optimizer step, updating parameter tensors in place.

    Weight decay is decoupled: p <- p - lr*wd*p before the bias-corrected
    moment update. `grads` aligns with `named_params`; a None entry means
    zero gradient for that parameter.
    """
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for (name, p), g in zip(named_params, grads):
        if g is None:
            g = np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter '{name}'")
        if p.data.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match "
                             f"parameter '{name}' shape {p.data.shape}")
        if weight_decay:
            p.data -= lr * weight_decay * p.data
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if not np.isfinite(p.data).all():
            raise NumericError(f"parameter '{name}' became non-finite after update")
    return named_params


def zero_grads(named_params) -> None:
    for _, p in named_params:
        p.grad = None
