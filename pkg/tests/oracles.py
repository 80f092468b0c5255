"""Independent oracles used across the test suite.

These deliberately avoid the library's differentiation and loss code
paths: gradients come from central finite differences on raw numpy
buffers, and the contrastive loss from a literal per-term double loop.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

FD_EPS = 1e-5


def fd_gradient(f: Callable[[], float], buf: np.ndarray, eps: float = FD_EPS) -> np.ndarray:
    """Central finite-difference gradient of f() w.r.t. every entry of buf.

    f must recompute the scalar from current buffer contents; buf is
    perturbed in place and restored.
    """
    grad = np.zeros_like(buf)
    for idx in np.ndindex(buf.shape):
        orig = buf[idx]
        buf[idx] = orig + eps
        fp = f()
        buf[idx] = orig - eps
        fm = f()
        buf[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * eps)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Matrix-level relative error: max abs gap over the larger gradient scale."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    gap = np.abs(a - b).max(initial=0.0)
    if scale == 0.0:
        return gap
    return gap / scale


def naive_info_nce(hp: np.ndarray, hq: np.ndarray, tau: float) -> float:
    """Per-term double loop: -sum_j log(exp(s_jj) / sum_n exp(s_jn))."""
    n = len(hp)
    loss = 0.0
    for j in range(n):
        num = np.exp(float(hp[j] @ hq[j]) / tau)
        den = 0.0
        for m in range(n):
            den += np.exp(float(hp[j] @ hq[m]) / tau)
        loss += -np.log(num / den)
    return loss
