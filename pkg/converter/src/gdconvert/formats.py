"""Parsers for the upstream benchmark distributions.

Two citation-network layouts are understood:

* pickled split files (ind.NAME.x/tx/allx/y/ty/ally/graph + test.index),
  the distribution graph-learning toolchains download; features arrive as
  scipy sparse matrices and labels as one-hot arrays. Test rows are stored
  in a shuffled order and must be rearranged by test.index; index gaps
  (isolated test papers) become zero feature rows.
* plain text content/cites files (NAME.content, NAME.cites): one line per
  paper with features and a class name, plus one cited-paper pair per line.

Both produce the same in-memory form: features, integer labels, and a
deduplicated undirected edge list with u < v.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp


class ConversionError(RuntimeError):
    pass


@dataclass
class ParsedGraph:
    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray          # unique undirected pairs, u < v
    source_links: Optional[int] = None  # raw citation records, when the
                                        # upstream exposes them
    notes: list[str] = field(default_factory=list)

    @property
    def num_nodes(self) -> int:
        return len(self.features)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


def _dedup_edges(pairs) -> np.ndarray:
    seen = set()
    for u, v in pairs:
        if u == v:
            continue
        seen.add((min(u, v), max(u, v)))
    return np.asarray(sorted(seen), dtype=np.int64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# pickled split layout


_PICKLE_PARTS = ("x", "tx", "allx", "y", "ty", "ally", "graph")


def has_pickle_layout(cache: Path, name: str) -> bool:
    return all((cache / f"ind.{name}.{part}").is_file() for part in _PICKLE_PARTS) \
        and (cache / f"ind.{name}.test.index").is_file()


def _load_pickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def parse_pickle_layout(cache: Path, name: str) -> ParsedGraph:
    parts = {p: _load_pickle(cache / f"ind.{name}.{p}") for p in _PICKLE_PARTS}
    test_idx = np.array([int(line) for line in
                         (cache / f"ind.{name}.test.index").read_text().split()],
                        dtype=np.int64)
    if len(test_idx) == 0:
        raise ConversionError(f"{name}: empty test.index")
    test_sorted = np.sort(test_idx)
    notes = []

    allx = sp.csr_matrix(parts["allx"])
    tx = sp.csr_matrix(parts["tx"])
    ally = np.asarray(parts["ally"])
    ty = np.asarray(parts["ty"])

    min_test = int(test_sorted.min())
    if min_test != allx.shape[0]:
        raise ConversionError(f"{name}: test ids start at {min_test} but the "
                              f"non-test block holds {allx.shape[0]} rows")
    full_len = int(test_sorted.max()) - min_test + 1
    if full_len != len(test_idx):
        # isolated test papers missing from tx: give them zero rows at their
        # natural positions; the reorder below only moves the real rows
        notes.append(f"{full_len - len(test_idx)} isolated test rows "
                     "zero-filled (gaps in test.index)")
        tx_full = sp.lil_matrix((full_len, tx.shape[1]))
        ty_full = np.zeros((full_len, ty.shape[1]))
        pos = test_sorted - min_test
        tx_full[pos] = tx
        ty_full[pos] = ty
        tx = sp.csr_matrix(tx_full)
        ty = ty_full

    features = sp.vstack([allx, tx]).tolil()
    labels_onehot = np.vstack([ally, ty])
    # test rows arrive in test.index order; rearrange into true positions
    features[test_idx, :] = features[test_sorted, :]
    labels_onehot[test_idx, :] = labels_onehot[test_sorted, :]

    graph = parts["graph"]
    num_nodes = features.shape[0]
    pairs = []
    links = 0
    for u, neighbors in graph.items():
        for v in neighbors:
            links += 1
            if 0 <= u < num_nodes and 0 <= v < num_nodes:
                pairs.append((int(u), int(v)))
            else:
                raise ConversionError(f"{name}: adjacency endpoint {u}-{v} out of "
                                      f"range for {num_nodes} nodes")
    zero_rows = np.flatnonzero(labels_onehot.sum(axis=1) == 0)
    if len(zero_rows):
        notes.append(f"{len(zero_rows)} unlabeled rows assigned class 0")
    return ParsedGraph(
        features=np.asarray(sp.csr_matrix(features).todense(), dtype=np.float64),
        labels=np.argmax(labels_onehot, axis=1).astype(np.int64),
        edges=_dedup_edges(pairs),
        source_links=None,  # adjacency lists are already symmetrized upstream
        notes=notes,
    )


# ---------------------------------------------------------------------------
# content/cites text layout


def has_content_layout(cache: Path, name: str) -> bool:
    return (cache / f"{name}.content").is_file() and (cache / f"{name}.cites").is_file()


def parse_content_layout(cache: Path, name: str) -> ParsedGraph:
    content = cache / f"{name}.content"
    ids: dict[str, int] = {}
    rows = []
    class_names = []
    for lineno, line in enumerate(content.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 3:
            raise ConversionError(f"{content}:{lineno}: expected id, features, class")
        paper_id, feats, cls = parts[0], parts[1:-1], parts[-1]
        if paper_id in ids:
            raise ConversionError(f"{content}:{lineno}: duplicate paper id {paper_id}")
        ids[paper_id] = len(rows)
        try:
            rows.append([float(x) for x in feats])
        except ValueError:
            raise ConversionError(f"{content}:{lineno}: bad feature value") from None
        class_names.append(cls)
    if not rows:
        raise ConversionError(f"{content}: no records")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ConversionError(f"{content}: ragged feature row {i + 1}")
    classes = {c: i for i, c in enumerate(sorted(set(class_names)))}
    labels = np.array([classes[c] for c in class_names], dtype=np.int64)

    cites = cache / f"{name}.cites"
    pairs = []
    links = 0
    dangling = 0
    for lineno, line in enumerate(cites.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConversionError(f"{cites}:{lineno}: expected 'cited citing'")
        links += 1
        a, b = parts
        if a in ids and b in ids:
            pairs.append((ids[a], ids[b]))
        else:
            dangling += 1
    notes = []
    if dangling:
        notes.append(f"{dangling} citation records referencing papers outside "
                     "the content file were dropped")
    return ParsedGraph(
        features=np.asarray(rows, dtype=np.float64),
        labels=labels,
        edges=_dedup_edges(pairs),
        source_links=links,
        notes=notes,
    )
