"""Dense-matrix reverse-mode automatic differentiation.

Tensors are strictly 2-D float64 matrices. Operations executed while a
Tape is active record a backward rule; `backward(loss, tape)` replays the
tape in reverse and accumulates gradients into every `requires_grad`
tensor that participated. Sparse adjacency matrices enter only through
`spmm`, whose weights are constants and never differentiated.

Single-threaded per tape: the active tape is thread-local, so independent
forward passes on different threads each get their own tape.
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, ShapeError

_local = threading.local()


def current_tape() -> Optional["Tape"]:
    return getattr(_local, "tape", None)


class Tensor:
    """A 2-D float64 matrix with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D matrices, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DomainError("tensor data contains non-finite values")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def detach(self) -> "Tensor":
        """A constant view of this tensor's value, cut off from any tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out.node_id = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        out = Tensor(self.data.copy(), requires_grad=self.requires_grad)
        return out

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class _Op:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of operations; inputs always precede their op."""

    def __init__(self):
        self._ops: list[_Op] = []
        self._tensors: dict[int, Tensor] = {}
        self._next_id = 0

    def __enter__(self) -> "Tape":
        if current_tape() is not None:
            raise RuntimeError("a tape is already active on this thread")
        _local.tape = self
        return self

    def __exit__(self, *exc):
        _local.tape = None
        return False

    def _register(self, t: Tensor) -> None:
        if id(t) not in self._tensors:
            t.node_id = self._next_id
            self._next_id += 1
            self._tensors[id(t)] = t

    def record(self, inputs: Sequence[Tensor], output: Tensor,
               backward_fn: Callable[[np.ndarray], None]) -> None:
        for t in inputs:
            self._register(t)
        self._register(output)
        self._ops.append(_Op(tuple(inputs), output, backward_fn))

    def __len__(self) -> int:
        return len(self._ops)

    @property
    def tensors(self):
        return self._tensors.values()


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _finish(inputs: Sequence[Tensor], out_data: np.ndarray,
            backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out.node_id = None
    tape = current_tape()
    if tape is not None and out.requires_grad:
        tape.record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Reverse-topological gradient accumulation from a scalar loss.

    Every requires_grad tensor registered on the tape ends up with a grad
    buffer; tensors unreachable from the loss get zeros.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be scalar (1x1), got {loss.shape}")
    if id(loss) not in tape._tensors:
        raise ValueError("loss was not recorded on this tape")
    for t in tape.tensors:
        t.grad = None
    loss.grad = np.ones((1, 1))
    for op in reversed(tape._ops):
        if op.output.grad is None:
            continue
        op.backward_fn(op.output.grad)
    for t in tape.tensors:
        if t.requires_grad and t.grad is None:
            t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _finish((a, b), out_data, bwd)


def spmm(adj, x: Tensor) -> Tensor:
    """Sparse-dense product adj @ x; the adjacency weights are constants.

    `adj` is any CSR-like object exposing shape, dot_dense and tdot_dense
    (see graphs.SparseMatrix). Gradient routes through the transpose.
    """
    if adj.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm dims differ: {adj.shape} x {x.shape}")
    out_data = adj.dot_dense(x.data)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, adj.tdot_dense(g))

    return _finish((x,), out_data, bwd)


def transpose(x: Tensor) -> Tensor:
    out_data = x.data.T.copy()

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g.T)

    return _finish((x,), out_data, bwd)


def _broadcast_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.shape == (1, 1) or b.shape == (1, 1):
        return
    raise ShapeError(f"{op} shapes differ: {a.shape} vs {b.shape} "
                     "(only scalar-by-matrix broadcast supported)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum().reshape(1, 1)


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "add")
    out_data = a.data + b.data

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _finish((a, b), out_data, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b, "mul")
    out_data = a.data * b.data

    def bwd(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _finish((a, b), out_data, bwd)


def scale(x: Tensor, c: float) -> Tensor:
    if not np.isfinite(c):
        raise DomainError(f"scale factor must be finite, got {c}")
    out_data = x.data * c

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * c)

    return _finish((x,), out_data, bwd)


def add_rowvec(x: Tensor, b: Tensor) -> Tensor:
    """x[m,c] + b[1,c] broadcast over rows (bias add)."""
    if b.shape != (1, x.shape[1]):
        raise ShapeError(f"add_rowvec needs (1,{x.shape[1]}) bias, got {b.shape}")
    out_data = x.data + b.data

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g)
        _accumulate(b, g.sum(axis=0, keepdims=True))

    return _finish((x, b), out_data, bwd)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * (x.data > 0.0))

    return _finish((x,), out_data, bwd)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    out_data = np.where(x.data > 0.0, x.data, slope * x.data)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * np.where(x.data > 0.0, 1.0, slope))

    return _finish((x,), out_data, bwd)


def elu(x: Tensor) -> Tensor:
    neg = np.expm1(np.minimum(x.data, 0.0))
    out_data = np.where(x.data > 0.0, x.data, neg)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * np.where(x.data > 0.0, 1.0, neg + 1.0))

    return _finish((x,), out_data, bwd)


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    if not np.isfinite(out_data).all():
        raise DomainError("exp overflow to non-finite values")

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * out_data)

    return _finish((x,), out_data, bwd)


def log(x: Tensor) -> Tensor:
    if (x.data <= 0.0).any():
        raise DomainError("log of non-positive value")
    out_data = np.log(x.data)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g / x.data)

    return _finish((x,), out_data, bwd)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with prob p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout p must be in [0,1), got {p}")
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    out_data = x.data * keep

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g * keep)

    return _finish((x,), out_data, bwd)


def row_log_softmax(x: Tensor) -> Tensor:
    """Per-row log softmax, max-subtracted for stability."""
    if not np.isfinite(x.data).all():
        raise DomainError("row_log_softmax input contains non-finite values")
    m = x.data.max(axis=1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out_data = shifted - lse
    softmax = np.exp(out_data)

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, g - softmax * g.sum(axis=1, keepdims=True))

    return _finish((x,), out_data, bwd)


def row_normalize(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit Euclidean norm.

    Rows with norm below eps (e.g. zeroed out by relu and dropout) map to
    zero and receive zero gradient; everything else uses the exact
    normalization Jacobian.
    """
    norms = np.linalg.norm(x.data, axis=1, keepdims=True)
    dead = norms < eps
    safe = np.where(dead, 1.0, norms)
    out_data = np.where(dead, 0.0, x.data / safe)

    def bwd(g: np.ndarray) -> None:
        proj = (g * out_data).sum(axis=1, keepdims=True)
        _accumulate(x, np.where(dead, 0.0, (g - out_data * proj) / safe))

    return _finish((x,), out_data, bwd)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.array([[x.data.sum()]])

    def bwd(g: np.ndarray) -> None:
        _accumulate(x, np.full(x.shape, g[0, 0]))

    return _finish((x,), out_data, bwd)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out_data = x.data[idx]

    def bwd(g: np.ndarray) -> None:
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accumulate(x, gx)

    return _finish((x,), out_data, bwd)


def segment_softmax(logits: Tensor, offsets: np.ndarray) -> Tensor:
    """Softmax within contiguous segments of a column vector.

    offsets are CSR-style boundaries (len = n_segments + 1); every segment
    must be non-empty. Used for per-neighborhood attention weights.
    """
    if logits.shape[1] != 1:
        raise ShapeError(f"segment_softmax expects a column vector, got {logits.shape}")
    offsets = np.asarray(offsets, dtype=np.intp)
    if (np.diff(offsets) <= 0).any():
        raise ShapeError("segment_softmax segments must be non-empty")
    starts = offsets[:-1]
    e = logits.data[:, 0]
    seg_max = np.maximum.reduceat(e, starts)
    seg_of = np.repeat(np.arange(len(starts)), np.diff(offsets))
    ex = np.exp(e - seg_max[seg_of])
    denom = np.add.reduceat(ex, starts)
    alpha = ex / denom[seg_of]
    out_data = alpha.reshape(-1, 1)

    def bwd(g: np.ndarray) -> None:
        gv = g[:, 0]
        dot = np.add.reduceat(gv * alpha, starts)
        ge = alpha * (gv - dot[seg_of])
        _accumulate(logits, ge.reshape(-1, 1))

    return _finish((logits,), out_data, bwd)


def edge_weighted_sum(w: Tensor, z: Tensor, rows: np.ndarray, cols: np.ndarray,
                      num_rows: int) -> Tensor:
    """out[rows[e]] += w[e] * z[cols[e]]; differentiable in w and z."""
    if w.shape != (len(rows), 1):
        raise ShapeError(f"edge weights must be ({len(rows)},1), got {w.shape}")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    zc = z.data[cols]
    out_data = np.zeros((num_rows, z.shape[1]))
    np.add.at(out_data, rows, w.data * zc)

    def bwd(g: np.ndarray) -> None:
        gr = g[rows]
        _accumulate(w, (gr * zc).sum(axis=1, keepdims=True))
        gz = np.zeros_like(z.data)
        np.add.at(gz, cols, w.data * gr)
        _accumulate(z, gz)

    return _finish((w, z), out_data, bwd)
