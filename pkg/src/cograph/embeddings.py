"""Embedding container plus lossless TSV export/import."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataFormatError, ShapeError


@dataclass
class EmbeddingSet:
    """Learned representations with item ids and optional labels."""

    matrix: np.ndarray
    ids: list
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ShapeError(f"embedding matrix must be 2-D, got {self.matrix.shape}")
        if len(self.ids) != len(self.matrix):
            raise ShapeError("ids length must equal embedding rows")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.intp)
            if len(self.labels) != len(self.matrix):
                raise ShapeError("labels length must equal embedding rows")

    def __len__(self) -> int:
        return len(self.matrix)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def export_embeddings(emb: EmbeddingSet, path) -> None:
    """Write a TSV (id, label, e0..e{d-1}); floats round-trip at 17 digits."""
    path = Path(path)
    d = emb.dim
    header = "id\tlabel\t" + "\t".join(f"e{i}" for i in range(d))
    lines = [header]
    for i in range(len(emb)):
        label = "" if emb.labels is None else str(int(emb.labels[i]))
        vals = "\t".join(f"{x:.17g}" for x in emb.matrix[i])
        lines.append(f"{emb.ids[i]}\t{label}\t{vals}")
    path.write_text("\n".join(lines) + "\n")


def read_embeddings(path) -> EmbeddingSet:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataFormatError(f"{path}:1: empty embedding file")
    header = lines[0].split("\t")
    if header[:2] != ["id", "label"]:
        raise DataFormatError(f"{path}:1: expected 'id<TAB>label<TAB>e0...' header")
    ids, labels, rows = [], [], []
    has_labels = True
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != len(header):
            raise DataFormatError(f"{path}:{lineno}: expected {len(header)} columns, "
                                  f"got {len(parts)}")
        ids.append(parts[0])
        if parts[1] == "":
            has_labels = False
        else:
            labels.append(int(parts[1]))
        rows.append([float(p) for p in parts[2:]])
    return EmbeddingSet(
        matrix=np.asarray(rows, dtype=np.float64),
        ids=ids,
        labels=np.asarray(labels, dtype=np.intp) if has_labels else None,
    )
