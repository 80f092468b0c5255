"""Graph and minibatch data model, benchmark parsers, feature schemes,
and adjacency preprocessing.

Graphs store each undirected edge once; adjacency builders expand to both
directions. Parsed values are immutable after construction by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataFormatError, ShapeError, UsageError


def _as_edge_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.intp)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeError(f"edge list must be (m,2), got {arr.shape}")
    return arr


@dataclass
class Graph:
    """One graph: undirected edges stored once plus an optional feature matrix."""

    num_nodes: int
    edges: np.ndarray
    features: Optional[np.ndarray] = None
    graph_label: Optional[int] = None
    node_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.edges = _as_edge_array(self.edges)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.num_nodes):
            raise DataFormatError(f"edge endpoint out of range for {self.num_nodes} nodes")
        if (self.edges[:, 0] == self.edges[:, 1]).any():
            raise DataFormatError("self-loops may not be stored on a graph")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
                raise ShapeError(f"features must be ({self.num_nodes}, D), "
                                 f"got {self.features.shape}")
        if self.node_labels is not None:
            self.node_labels = np.asarray(self.node_labels, dtype=np.intp)
            if self.node_labels.shape != (self.num_nodes,):
                raise ShapeError("node_labels length must equal num_nodes")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """Degree per node on the undirected simple graph."""
        d = np.zeros(self.num_nodes, dtype=np.intp)
        np.add.at(d, self.edges[:, 0], 1)
        np.add.at(d, self.edges[:, 1], 1)
        return d


@dataclass
class GraphBatch:
    """Disjoint union of graphs with node ids offset per graph."""

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    graph_of_node: np.ndarray
    graph_ranges: list[tuple[int, int]]
    size: int
    graph_labels: Optional[np.ndarray] = None

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> "GraphBatch":
        if not graphs:
            raise UsageError("cannot batch an empty graph list")
        feats, edge_blocks, ranges, owner = [], [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            if g.features is None:
                raise UsageError("all graphs must be featurized before batching")
            feats.append(g.features)
            edge_blocks.append(g.edges + offset)
            ranges.append((offset, offset + g.num_nodes))
            owner.append(np.full(g.num_nodes, gi, dtype=np.intp))
            offset += g.num_nodes
        labels = None
        if all(g.graph_label is not None for g in graphs):
            labels = np.array([g.graph_label for g in graphs], dtype=np.intp)
        return cls(
            num_nodes=offset,
            edges=np.concatenate(edge_blocks, axis=0) if edge_blocks else np.zeros((0, 2), np.intp),
            features=np.concatenate(feats, axis=0),
            graph_of_node=np.concatenate(owner),
            graph_ranges=ranges,
            size=len(graphs),
            graph_labels=labels,
        )

    def unbatch(self) -> list[Graph]:
        """Recover the member graphs exactly (edges, features, labels)."""
        out = []
        for gi, (start, stop) in enumerate(self.graph_ranges):
            mask = (self.edges[:, 0] >= start) & (self.edges[:, 0] < stop)
            out.append(Graph(
                num_nodes=stop - start,
                edges=self.edges[mask] - start,
                features=self.features[start:stop].copy(),
                graph_label=None if self.graph_labels is None else int(self.graph_labels[gi]),
            ))
        return out


class SparseMatrix:
    """Compressed-row sparse matrix with constant (non-differentiated) values."""

    __slots__ = ("shape", "row_offsets", "col_indices", "values", "_csr")

    def __init__(self, shape, row_offsets, col_indices, values):
        self.shape = tuple(shape)
        self.row_offsets = np.asarray(row_offsets, dtype=np.intp)
        self.col_indices = np.asarray(col_indices, dtype=np.intp)
        self.values = np.asarray(values, dtype=np.float64)
        if len(self.row_offsets) != self.shape[0] + 1:
            raise ShapeError("row_offsets length must be rows+1")
        if (np.diff(self.row_offsets) < 0).any():
            raise ShapeError("row_offsets must be monotone")
        if self.col_indices.size and (self.col_indices.min() < 0
                                      or self.col_indices.max() >= self.shape[1]):
            raise ShapeError("column index out of bounds")
        if not np.isfinite(self.values).all():
            raise DataFormatError("sparse matrix values must be finite")
        self._csr = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape)

    @classmethod
    def from_entries(cls, rows, cols, values, shape) -> "SparseMatrix":
        coo = sp.coo_matrix((values, (rows, cols)), shape=shape)
        csr = coo.tocsr()
        csr.sort_indices()
        return cls(shape, csr.indptr, csr.indices, csr.data)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def dot_dense(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._csr @ x)

    def tdot_dense(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(self._csr.T @ g)

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


def _both_directions(edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u = np.concatenate([edges[:, 0], edges[:, 1]])
    v = np.concatenate([edges[:, 1], edges[:, 0]])
    return u, v


def raw_adjacency(graph, self_loops: bool = False) -> SparseMatrix:
    """Unweighted 0/1 adjacency of the undirected expansion."""
    n = graph.num_nodes
    u, v = _both_directions(graph.edges)
    if self_loops:
        loops = np.arange(n, dtype=np.intp)
        u = np.concatenate([u, loops])
        v = np.concatenate([v, loops])
    return SparseMatrix.from_entries(u, v, np.ones(len(u)), (n, n))


def normalized_adjacency(graph) -> SparseMatrix:
    """Symmetrically normalized adjacency with self-loops added first."""
    n = graph.num_nodes
    u, v = _both_directions(graph.edges)
    loops = np.arange(n, dtype=np.intp)
    u = np.concatenate([u, loops])
    v = np.concatenate([v, loops])
    deg = np.bincount(u, minlength=n).astype(np.float64)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = inv_sqrt[u] * inv_sqrt[v]
    return SparseMatrix.from_entries(u, v, vals, (n, n))


def pooling_matrix(batch: GraphBatch) -> SparseMatrix:
    """0/1 indicator summing node rows into their graph's row."""
    rows = batch.graph_of_node
    cols = np.arange(batch.num_nodes, dtype=np.intp)
    return SparseMatrix.from_entries(rows, cols, np.ones(batch.num_nodes),
                                     (batch.size, batch.num_nodes))


# ---------------------------------------------------------------------------
# feature schemes

SCHEMES = ("default", "constant", "one_hot_degree")


def featurize(graphs: Sequence[Graph], scheme: str,
              max_degree: Optional[int] = None) -> list[Graph]:
    """Replace node features per the named scheme.

    one_hot_degree without an explicit cap uses the maximum degree observed
    across the dataset.
    """
    if scheme not in SCHEMES:
        raise UsageError(f"unknown feature scheme '{scheme}', expected one of {SCHEMES}")
    if scheme == "default":
        for g in graphs:
            if g.features is None:
                raise UsageError("default feature scheme requires existing features")
        return list(graphs)
    out = []
    if scheme == "constant":
        for g in graphs:
            out.append(Graph(g.num_nodes, g.edges, np.ones((g.num_nodes, 1)),
                             g.graph_label, g.node_labels))
        return out
    if max_degree is None:
        max_degree = max((int(g.degrees().max()) if g.num_nodes else 0) for g in graphs)
    for g in graphs:
        deg = g.degrees()
        if deg.size and deg.max() > max_degree:
            raise UsageError(f"node degree {int(deg.max())} exceeds one_hot_degree "
                             f"cap {max_degree}")
        feats = np.zeros((g.num_nodes, max_degree + 1))
        feats[np.arange(g.num_nodes), deg] = 1.0
        out.append(Graph(g.num_nodes, g.edges, feats, g.graph_label, g.node_labels))
    return out


def make_batches(graphs: Sequence[Graph], batch_size: int,
                 rng: np.random.Generator) -> list[GraphBatch]:
    """Shuffle and pack graphs; a trailing batch of one graph is dropped
    (a single-graph contrastive loss carries no signal)."""
    if not graphs:
        raise UsageError("cannot batch an empty graph list")
    if batch_size < 2:
        raise UsageError(f"batch_size must be >= 2, got {batch_size}")
    order = rng.permutation(len(graphs))
    batches = []
    for start in range(0, len(graphs), batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) < 2:
            continue
        batches.append(GraphBatch.from_graphs([graphs[i] for i in chunk]))
    return batches


# ---------------------------------------------------------------------------
# parsers


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise DataFormatError(f"missing mandatory file: {path}")
    return path.read_text().splitlines()


def _parse_int(token: str, path: Path, lineno: int) -> int:
    try:
        return int(token.strip())
    except ValueError:
        raise DataFormatError(f"{path}:{lineno}: expected integer, got {token!r}") from None


def load_tudataset(directory, name: str) -> list[Graph]:
    """Parse the multi-file benchmark text layout (1-indexed edge list,
    graph indicator, graph labels, optional node labels/attributes).

    Node labels are one-hot encoded into features when no attribute file
    exists. Graph labels are remapped to 0..C-1 in sorted order. Self-loop
    lines are dropped (loops are added only by adjacency preprocessing).
    """
    directory = Path(directory)
    ind_path = directory / f"{name}_graph_indicator.txt"
    indicator = [_parse_int(t, ind_path, i + 1) for i, t in enumerate(_read_lines(ind_path))]
    if not indicator:
        raise DataFormatError(f"{ind_path}:1: empty graph indicator")
    for i in range(1, len(indicator)):
        if indicator[i] < indicator[i - 1]:
            raise DataFormatError(f"{ind_path}:{i + 1}: graph indicator must be non-decreasing")
    node_graph = np.asarray(indicator, dtype=np.intp) - 1
    num_graphs = int(node_graph.max()) + 1
    counts = np.bincount(node_graph, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    lbl_path = directory / f"{name}_graph_labels.txt"
    raw_labels = [_parse_int(t, lbl_path, i + 1) for i, t in enumerate(_read_lines(lbl_path))]
    if len(raw_labels) != num_graphs:
        raise DataFormatError(f"{lbl_path}:1: {len(raw_labels)} labels for {num_graphs} graphs")
    classes = sorted(set(raw_labels))
    remap = {c: i for i, c in enumerate(classes)}
    labels = [remap[c] for c in raw_labels]

    edge_path = directory / f"{name}_A.txt"
    per_graph_edges: list[set[tuple[int, int]]] = [set() for _ in range(num_graphs)]
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataFormatError(f"{edge_path}:{lineno}: expected 'u, v', got {line!r}")
        u = _parse_int(parts[0], edge_path, lineno) - 1
        v = _parse_int(parts[1], edge_path, lineno) - 1
        if not (0 <= u < len(node_graph) and 0 <= v < len(node_graph)):
            raise DataFormatError(f"{edge_path}:{lineno}: node id out of range")
        if node_graph[u] != node_graph[v]:
            raise DataFormatError(f"{edge_path}:{lineno}: edge crosses graph boundary")
        if u == v:
            continue
        g = int(node_graph[u])
        lu, lv = u - offsets[g], v - offsets[g]
        per_graph_edges[g].add((min(lu, lv), max(lu, lv)))

    node_label_path = directory / f"{name}_node_labels.txt"
    attr_path = directory / f"{name}_node_attributes.txt"
    features_all: Optional[np.ndarray] = None
    node_labels_all: Optional[np.ndarray] = None
    if attr_path.is_file():
        rows = []
        width = None
        for lineno, line in enumerate(_read_lines(attr_path), start=1):
            parts = [p for p in line.split(",")]
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise DataFormatError(f"{attr_path}:{lineno}: bad float") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(f"{attr_path}:{lineno}: ragged attribute row "
                                      f"({len(row)} values, expected {width})")
            rows.append(row)
        if len(rows) != len(node_graph):
            raise DataFormatError(f"{attr_path}:1: {len(rows)} attribute rows for "
                                  f"{len(node_graph)} nodes")
        features_all = np.asarray(rows, dtype=np.float64)
    if node_label_path.is_file():
        raw = [_parse_int(t, node_label_path, i + 1)
               for i, t in enumerate(_read_lines(node_label_path))]
        if len(raw) != len(node_graph):
            raise DataFormatError(f"{node_label_path}:1: {len(raw)} node labels for "
                                  f"{len(node_graph)} nodes")
        node_labels_all = np.asarray(raw, dtype=np.intp)
        if features_all is None:
            cats = sorted(set(raw))
            cat_map = {c: i for i, c in enumerate(cats)}
            features_all = np.zeros((len(raw), len(cats)))
            features_all[np.arange(len(raw)), [cat_map[c] for c in raw]] = 1.0

    graphs = []
    for g in range(num_graphs):
        start, stop = int(offsets[g]), int(offsets[g + 1])
        edges = sorted(per_graph_edges[g])
        graphs.append(Graph(
            num_nodes=stop - start,
            edges=np.asarray(edges, dtype=np.intp).reshape(-1, 2),
            features=None if features_all is None else features_all[start:stop],
            graph_label=labels[g],
            node_labels=None if node_labels_all is None else node_labels_all[start:stop],
        ))
    return graphs


def load_node_dataset(directory) -> Graph:
    """Load one interchange directory (edges.tsv / features.tsv / labels.tsv)."""
    directory = Path(directory)
    feat_path = directory / "features.tsv"
    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(feat_path), start=1):
        parts = line.split("\t")
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise DataFormatError(f"{feat_path}:{lineno}: bad float") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataFormatError(f"{feat_path}:{lineno}: ragged feature row")
        rows.append(row)
    features = np.asarray(rows, dtype=np.float64)
    num_nodes = len(features)

    lbl_path = directory / "labels.tsv"
    labels = [_parse_int(t, lbl_path, i + 1) for i, t in enumerate(_read_lines(lbl_path))]
    if len(labels) != num_nodes:
        raise DataFormatError(f"{lbl_path}:1: {len(labels)} labels for {num_nodes} "
                              "feature rows")

    edge_path = directory / "edges.tsv"
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(_read_lines(edge_path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"{edge_path}:{lineno}: expected 'u<TAB>v', got {line!r}")
        u = _parse_int(parts[0], edge_path, lineno)
        v = _parse_int(parts[1], edge_path, lineno)
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise DataFormatError(f"{edge_path}:{lineno}: endpoint out of range "
                                  f"for {num_nodes} nodes")
        if u == v:
            continue
        seen.add((min(u, v), max(u, v)))
    edges = np.asarray(sorted(seen), dtype=np.intp).reshape(-1, 2)

    meta_path = directory / "meta.tsv"
    if meta_path.is_file():
        meta = {}
        for lineno, line in enumerate(meta_path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            key, _, value = line.partition("\t")
            meta[key] = value
        declared = meta.get("num_nodes")
        if declared is not None and int(declared) != num_nodes:
            raise DataFormatError(f"{meta_path}:1: meta num_nodes {declared} does not "
                                  f"match {num_nodes} feature rows")
    return Graph(num_nodes=num_nodes, edges=edges, features=features,
                 node_labels=np.asarray(labels, dtype=np.intp))
