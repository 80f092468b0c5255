"""Positive-pair construction and the collaborative InfoNCE losses.

Each encoder's representations of the items in a batch act as queries;
every other encoder's representations of the same items are the keys.
The loss is summed (not averaged) over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, UsageError

MODES = ("batchwise", "graphwise")
SIMILARITIES = ("dot", "cosine")

# cap on transient score-matrix elements before row blocking kicks in
_BLOCK_ELEMENTS = 1 << 25


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float
    mode: str = "batchwise"
    similarity: str = "dot"

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise UsageError(f"temperature must be positive, got {self.temperature}")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.similarity not in SIMILARITIES:
            raise UsageError(f"similarity must be one of {SIMILARITIES}, "
                             f"got '{self.similarity}'")


def positive_pairs(k: int, n: int, p: int) -> list[tuple[int, int, int]]:
    """(query item, key encoder, key item) triples for query encoder p.

    Each of the n items pairs with its own representation under every
    other encoder, giving exactly n*(k-1) triples.
    """
    if k < 2:
        raise UsageError(f"collaborative learning needs >= 2 encoders, got {k}")
    if n < 1:
        raise UsageError(f"batch must hold >= 1 item, got {n}")
    if not 0 <= p < k:
        raise UsageError(f"query encoder index {p} out of range for k={k}")
    return [(i, j, i) for i in range(n) for j in range(k) if j != p]


def info_nce(hp: Tensor, hq: Tensor, temperature: float,
             similarity: str = "dot", row_block: int | None = None) -> Tensor:
    """Temperature-scaled softmax loss scoring each item's own key against
    all in-batch keys; differentiable through both sides.

    Scores are processed in row slabs so the n x n matrix never has to be
    materialized or retained: each slab still sees all columns and uses an
    exact max-subtracted log-sum-exp, so blocking changes nothing beyond
    float rounding. The backward pass recomputes slab softmaxes instead of
    storing them.
    """
    if temperature <= 0.0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    if hp.shape != hq.shape:
        raise ShapeError(f"query/key shapes differ: {hp.shape} vs {hq.shape}")
    if similarity == "cosine":
        hp = ad.row_normalize(hp)
        hq = ad.row_normalize(hq)
    elif similarity != "dot":
        raise UsageError(f"similarity must be one of {SIMILARITIES}, got '{similarity}'")
    n = hp.shape[0]
    if row_block is None:
        row_block = n if n * n <= _BLOCK_ELEMENTS else max(64, _BLOCK_ELEMENTS // n)
    row_block = max(1, min(row_block, n))

    hp_data, hq_data = hp.data, hq.data
    lse = np.empty(n)
    diag = np.empty(n)
    for start in range(0, n, row_block):
        stop = min(start + row_block, n)
        scores = (hp_data[start:stop] @ hq_data.T) / temperature
        m = scores.max(axis=1)
        lse[start:stop] = m + np.log(np.exp(scores - m[:, None]).sum(axis=1))
        diag[start:stop] = scores[np.arange(stop - start), np.arange(start, stop)]
    out_data = np.array([[float((lse - diag).sum())]])

    def bwd(g: np.ndarray) -> None:
        scale = g[0, 0] / temperature
        ghp = np.empty_like(hp_data)
        ghq = -hp_data * scale
        for start in range(0, n, row_block):
            stop = min(start + row_block, n)
            probs = np.exp((hp_data[start:stop] @ hq_data.T) / temperature
                           - lse[start:stop, None])
            ghp[start:stop] = (probs @ hq_data - hq_data[start:stop]) * scale
            ghq += (probs.T @ hp_data[start:stop]) * scale
        ad._accumulate(hp, ghp)
        ad._accumulate(hq, ghq)

    return ad._finish((hp, hq), out_data, bwd)


def encoder_loss(p: int, reps: list[Tensor], temperature: float,
                 detach_keys: bool = True, similarity: str = "dot",
                 row_block: int | None = None) -> Tensor:
    """Sum of pairwise losses of encoder p against every other encoder.

    Keys are detached by default so the gradient reaches only encoder p;
    detach_keys=False leaves key encoders on the tape (joint mode).
    """
    k = len(reps)
    if k < 2:
        raise UsageError(f"collaborative learning needs >= 2 encoders, got {k}")
    if not 0 <= p < k:
        raise UsageError(f"query encoder index {p} out of range for k={k}")
    total = None
    for q in range(k):
        if q == p:
            continue
        key = reps[q].detach() if detach_keys else reps[q]
        term = info_nce(reps[p], key, temperature, similarity, row_block)
        total = term if total is None else ad.add(total, term)
    return total


def score_matrix(hp, hq, temperature: float) -> np.ndarray:
    """Temperature-scaled pairwise similarity matrix s[j,n] = hp[j]*hq[n]/t."""
    hp = hp.data if isinstance(hp, Tensor) else np.asarray(hp, dtype=np.float64)
    hq = hq.data if isinstance(hq, Tensor) else np.asarray(hq, dtype=np.float64)
    if temperature <= 0.0:
        raise UsageError(f"temperature must be positive, got {temperature}")
    if hp.shape != hq.shape:
        raise ShapeError(f"query/key shapes differ: {hp.shape} vs {hq.shape}")
    s = hp @ hq.T / temperature
    if not np.isfinite(s).all():
        raise ShapeError("score matrix contains non-finite values")
    return s


def loss_equivalence_oracle(hp, hq, temperature: float) -> float:
    """Absolute deviation between the softmax-ratio form of the loss and its
    expanded form (score minus log-sum-exp), computed independently in plain
    arithmetic. The two are algebraically identical; this measures the
    numerical gap on concrete inputs.
    """
    s = score_matrix(hp, hq, temperature)
    n = len(s)
    ratio_form = 0.0
    for j in range(n):
        ratio_form -= np.log(np.exp(s[j, j]) / np.exp(s[j]).sum())
    expanded_form = 0.0
    for j in range(n):
        expanded_form -= s[j, j] - np.log(np.exp(s[j]).sum())
    return float(abs(ratio_form - expanded_form))
