"""GNN encoder family: GCN, GIN and GAT layers with global-add readout.

Every forward pass runs through the autodiff ops, so the same code path
serves training (on a tape) and deterministic evaluation (no tape, no
dropout). Final layers are linear so embeddings span the full space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embeddings import EmbeddingSet
from .errors import ShapeError, UsageError
from .graphs import Graph, GraphBatch, normalized_adjacency, pooling_matrix, raw_adjacency

KINDS = ("gcn", "gin", "gat")
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class EncoderSpec:
    """Architecture description of one encoder."""

    kind: str
    input_dim: int
    hidden_dim: int = 128
    num_layers: int = 3
    dropout: float = 0.5
    pooling: str = "global_add"
    init: str = "xavier"
    init_value: float = 10.0
    gat_heads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown encoder kind '{self.kind}', expected one of {KINDS}")
        if self.num_layers < 1:
            raise UsageError("num_layers must be >= 1")
        if self.hidden_dim < 1 or self.input_dim < 1:
            raise UsageError("input_dim and hidden_dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise UsageError(f"dropout must be in [0,1), got {self.dropout}")
        if self.pooling not in ("none", "global_add"):
            raise UsageError(f"pooling must be 'none' or 'global_add', got '{self.pooling}'")
        if self.init not in ("xavier", "constant"):
            raise UsageError(f"init must be 'xavier' or 'constant', got '{self.init}'")
        if self.kind == "gat" and self.hidden_dim % self.gat_heads != 0:
            raise UsageError(f"hidden_dim {self.hidden_dim} not divisible by "
                             f"{self.gat_heads} attention heads")


@dataclass
class EncoderParams:
    """Trainable tensors of one encoder, keyed by stable names."""

    spec: EncoderSpec
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def named(self) -> list[tuple[str, Tensor]]:
        return list(self.tensors.items())

    def grads(self) -> list[Optional[np.ndarray]]:
        return [t.grad for t in self.tensors.values()]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.spec, {k: t.copy() for k, t in self.tensors.items()})

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}


def _init_matrix(shape: tuple[int, int], spec: EncoderSpec,
                 rng: np.random.Generator) -> Tensor:
    if spec.init == "constant":
        data = np.full(shape, spec.init_value)
    else:
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        data = rng.uniform(-limit, limit, size=shape)
    return Tensor(data, requires_grad=True)


def _init_bias(width: int, spec: EncoderSpec) -> Tensor:
    value = spec.init_value if spec.init == "constant" else 0.0
    return Tensor(np.full((1, width), value), requires_grad=True)


def init_params(spec: EncoderSpec, rng: np.random.Generator) -> EncoderParams:
    """Allocate all weights for a spec; shapes depend only on the spec.
    Bias rows start at zero (at the constant under constant init)."""
    params = EncoderParams(spec)
    d = spec.hidden_dim
    for layer in range(spec.num_layers):
        fan_in = spec.input_dim if layer == 0 else d
        if spec.kind == "gcn":
            params.tensors[f"layer{layer}.weight"] = _init_matrix((fan_in, d), spec, rng)
            params.tensors[f"layer{layer}.bias"] = _init_bias(d, spec)
        elif spec.kind == "gin":
            params.tensors[f"layer{layer}.mlp0"] = _init_matrix((fan_in, d), spec, rng)
            params.tensors[f"layer{layer}.bias0"] = _init_bias(d, spec)
            params.tensors[f"layer{layer}.mlp1"] = _init_matrix((d, d), spec, rng)
            params.tensors[f"layer{layer}.bias1"] = _init_bias(d, spec)
        else:
            dh = d // spec.gat_heads
            for h in range(spec.gat_heads):
                params.tensors[f"layer{layer}.head{h}.weight"] = \
                    _init_matrix((fan_in, dh), spec, rng)
                params.tensors[f"layer{layer}.head{h}.att"] = \
                    _init_matrix((2 * dh, 1), spec, rng)
            params.tensors[f"layer{layer}.bias"] = _init_bias(d, spec)
    return params


def _check_input(spec: EncoderSpec, x: Tensor) -> None:
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"features have {x.shape[1]} columns, spec expects "
                         f"{spec.input_dim}")


def _maybe_dropout(x: Tensor, p: float, training: bool,
                   rng: Optional[np.random.Generator]) -> Tensor:
    if not training or p == 0.0:
        return x
    if rng is None:
        raise UsageError("training-mode forward needs an rng for dropout")
    return ad.dropout(x, p, True, rng)


def gcn_forward(params: EncoderParams, norm_adj, x: Tensor, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
    """Stacked symmetric-normalized convolutions; relu between layers only."""
    spec = params.spec
    _check_input(spec, x)
    h = x
    for layer in range(spec.num_layers):
        h = _maybe_dropout(h, spec.dropout, training, rng)
        h = ad.spmm(norm_adj, ad.matmul(h, params.tensors[f"layer{layer}.weight"]))
        h = ad.add_rowvec(h, params.tensors[f"layer{layer}.bias"])
        if layer < spec.num_layers - 1:
            h = ad.relu(h)
    return h


def gin_forward(params: EncoderParams, raw_adj, x: Tensor, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
    """Sum aggregation with a two-layer perceptron per layer (epsilon = 0);
    the adjacency must carry no self-loops."""
    spec = params.spec
    _check_input(spec, x)
    h = x
    for layer in range(spec.num_layers):
        h = _maybe_dropout(h, spec.dropout, training, rng)
        agg = ad.add(h, ad.spmm(raw_adj, h))
        hidden = ad.relu(ad.add_rowvec(ad.matmul(agg, params.tensors[f"layer{layer}.mlp0"]),
                                       params.tensors[f"layer{layer}.bias0"]))
        h = ad.add_rowvec(ad.matmul(hidden, params.tensors[f"layer{layer}.mlp1"]),
                          params.tensors[f"layer{layer}.bias1"])
    return h


def gat_forward(params: EncoderParams, adj_with_loops, x: Tensor, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
    """Attention over each node's neighborhood (self-loops included so every
    node attends to itself); heads are concatenated; elu between layers only."""
    spec = params.spec
    _check_input(spec, x)
    n = adj_with_loops.shape[0]
    offsets = adj_with_loops.row_offsets
    cols = adj_with_loops.col_indices
    rows = np.repeat(np.arange(n, dtype=np.intp), np.diff(offsets))
    dh = spec.hidden_dim // spec.gat_heads
    src_rows = np.arange(dh, dtype=np.intp)
    dst_rows = np.arange(dh, 2 * dh, dtype=np.intp)
    h = x
    for layer in range(spec.num_layers):
        h = _maybe_dropout(h, spec.dropout, training, rng)
        head_outs = []
        for head in range(spec.gat_heads):
            w = params.tensors[f"layer{layer}.head{head}.weight"]
            att = params.tensors[f"layer{layer}.head{head}.att"]
            z = ad.matmul(h, w)
            s_src = ad.matmul(z, ad.gather_rows(att, src_rows))
            s_dst = ad.matmul(z, ad.gather_rows(att, dst_rows))
            logits = ad.leaky_relu(
                ad.add(ad.gather_rows(s_src, rows), ad.gather_rows(s_dst, cols)),
                LEAKY_SLOPE)
            alpha = ad.segment_softmax(logits, offsets)
            head_outs.append(ad.edge_weighted_sum(alpha, z, rows, cols, n))
        out = head_outs[0] if len(head_outs) == 1 else _concat_cols(head_outs)
        out = ad.add_rowvec(out, params.tensors[f"layer{layer}.bias"])
        h = ad.elu(out) if layer < spec.num_layers - 1 else out
    return h


def _concat_cols(parts: list[Tensor]) -> Tensor:
    # column concat via constant placement matrices
    total = sum(p.shape[1] for p in parts)
    out = None
    col = 0
    for p in parts:
        placer = np.zeros((p.shape[1], total))
        placer[np.arange(p.shape[1]), col + np.arange(p.shape[1])] = 1.0
        placed = ad.matmul(p, Tensor(placer))
        out = placed if out is None else ad.add(out, placed)
        col += p.shape[1]
    return out


def global_add_pool(node_reps: Tensor, batch: GraphBatch) -> Tensor:
    """Sum each graph's node rows into one row per graph."""
    if node_reps.shape[0] != batch.num_nodes:
        raise ShapeError(f"{node_reps.shape[0]} node rows for a batch of "
                         f"{batch.num_nodes} nodes")
    return ad.spmm(pooling_matrix(batch), node_reps)


def forward_nodes(params: EncoderParams, data: Union[Graph, GraphBatch],
                  training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> Tensor:
    """Node representations for a graph or disjoint-union batch."""
    spec = params.spec
    x = Tensor(data.features)
    if spec.kind == "gcn":
        return gcn_forward(params, normalized_adjacency(data), x, training, rng)
    if spec.kind == "gin":
        return gin_forward(params, raw_adjacency(data, self_loops=False), x, training, rng)
    return gat_forward(params, raw_adjacency(data, self_loops=True), x, training, rng)


def forward_graphs(params: EncoderParams, batch: GraphBatch, training: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
    """Pooled graph representations, one row per batch member."""
    if params.spec.pooling != "global_add":
        raise UsageError("graph-level forward requires pooling='global_add'")
    return global_add_pool(forward_nodes(params, batch, training, rng), batch)


def encode(params: EncoderParams, data: Union[Graph, GraphBatch],
           training: bool = False,
           rng: Optional[np.random.Generator] = None) -> EmbeddingSet:
    """Embed a graph, batch, or node set; eval mode is deterministic."""
    spec = params.spec
    if spec.pooling == "global_add":
        batch = GraphBatch.from_graphs([data]) if isinstance(data, Graph) else data
        reps = forward_graphs(params, batch, training, rng)
        return EmbeddingSet(reps.data, ids=list(range(batch.size)),
                            labels=batch.graph_labels)
    if isinstance(data, GraphBatch):
        raise UsageError("node-level encoders take a single graph, not a batch")
    reps = forward_nodes(params, data, training, rng)
    return EmbeddingSet(reps.data, ids=list(range(data.num_nodes)),
                        labels=data.node_labels)
