"""Conversion driver: parse an upstream distribution from a cache directory
(optionally downloading it first) and emit the interchange files the
training toolkit reads, verifying counts against the published statistics.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .formats import (ConversionError, ParsedGraph, has_content_layout,
                      has_pickle_layout, parse_content_layout, parse_pickle_layout)

PICKLE_BASE_URL = "https://github.com/kimiyoung/planetoid/raw/master/data"
TU_BASE_URL = "https://www.chrsmrrs.com/graphkerneldatasets"

CITATION_DATASETS = ("cora", "citeseer", "pubmed")

# published statistics: nodes, classes, feature dim (identical across
# upstreams), plus the raw citation-record count where one exists
EXPECTED_CITATION = {
    "cora": {"num_nodes": 2708, "num_classes": 7, "feature_dim": 1433,
             "source_links": 5429},
    "citeseer": {"num_nodes": 3327, "num_classes": 6, "feature_dim": 3703,
                 "source_links": 4732},
    "pubmed": {"num_nodes": 19717, "num_classes": 3, "feature_dim": 500,
               "source_links": 44338},
}

# graph counts for the benchmark text datasets passed through unchanged
EXPECTED_TU_GRAPHS = {
    "MUTAG": 188, "PROTEINS": 1113, "DD": 1178, "NCI1": 4110, "COLLAB": 5000,
    "IMDB-BINARY": 1000, "IMDB-MULTI": 1500, "REDDIT-BINARY": 2000,
    "REDDIT-MULTI-5K": 4999,
}

_PICKLE_FILES = ("x", "tx", "allx", "y", "ty", "ally", "graph", "test.index")


@dataclass
class ConversionReport:
    dataset: str
    num_nodes: int
    num_edges: int
    num_classes: int
    feature_dim: int
    output_paths: list[str]
    checksums: dict[str, str]
    source_links: Optional[int] = None
    num_graphs: Optional[int] = None
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if v is not None}
        return json.dumps(payload, indent=2, sort_keys=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _download(url: str, dest: Path) -> None:
    try:
        with urllib.request.urlopen(url, timeout=60) as resp:
            dest.write_bytes(resp.read())
    except (urllib.error.URLError, OSError) as exc:
        raise ConversionError(
            f"cannot download {url} ({exc}); place the upstream files in the "
            f"cache directory {dest.parent} and re-run") from exc


def _ensure_citation_cache(name: str, cache: Path, download: bool) -> None:
    if has_pickle_layout(cache, name) or has_content_layout(cache, name):
        return
    if not download:
        raise ConversionError(
            f"no cached distribution for '{name}' in {cache}: expected either "
            f"ind.{name}.* split files or {name}.content/{name}.cites")
    cache.mkdir(parents=True, exist_ok=True)
    for part in _PICKLE_FILES:
        _download(f"{PICKLE_BASE_URL}/ind.{name}.{part}", cache / f"ind.{name}.{part}")


def _verify(name: str, stat: str, actual, expected, strict: bool,
            notes: list[str]) -> None:
    if expected is None or actual == expected:
        return
    message = f"{name}: {stat} is {actual}, published statistic is {expected}"
    if strict:
        raise ConversionError(message)
    notes.append(message)


def write_interchange(parsed: ParsedGraph, out_dir: Path) -> tuple[list[str], dict]:
    out_dir.mkdir(parents=True, exist_ok=True)
    edges = out_dir / "edges.tsv"
    features = out_dir / "features.tsv"
    labels = out_dir / "labels.tsv"
    meta = out_dir / "meta.tsv"
    edges.write_text("".join(f"{u}\t{v}\n" for u, v in parsed.edges))
    features.write_text(
        "\n".join("\t".join(f"{x:.17g}" for x in row) for row in parsed.features)
        + "\n")
    labels.write_text("\n".join(str(int(c)) for c in parsed.labels) + "\n")
    meta.write_text(f"num_nodes\t{parsed.num_nodes}\n"
                    f"num_edges\t{parsed.num_edges}\n"
                    f"num_classes\t{parsed.num_classes}\n"
                    f"feature_dim\t{parsed.feature_dim}\n")
    paths = [str(p) for p in (edges, features, labels, meta)]
    checksums = {p.name: _sha256(p) for p in (edges, features, labels, meta)}
    return paths, checksums


def convert_citation(name: str, out_dir, cache_dir=None, download: bool = True,
                     strict: bool = True) -> ConversionReport:
    """Convert one citation network to the interchange layout.

    The emitted edge list holds each undirected edge once (u < v), after
    dropping self-citations and duplicate/reverse records; the published
    per-dataset link counts refer to raw citation records before this
    deduplication and are checked only when the upstream exposes them.
    """
    name = name.lower()
    if name not in CITATION_DATASETS:
        raise ConversionError(f"unknown citation dataset '{name}'; "
                              f"expected one of {CITATION_DATASETS}")
    out_dir = Path(out_dir)
    cache = Path(cache_dir) if cache_dir else out_dir / "_cache"
    _ensure_citation_cache(name, cache, download)

    if has_content_layout(cache, name):
        parsed = parse_content_layout(cache, name)
    else:
        parsed = parse_pickle_layout(cache, name)

    expected = EXPECTED_CITATION[name]
    notes = list(parsed.notes)
    _verify(name, "num_classes", parsed.num_classes, expected["num_classes"],
            strict, notes)
    _verify(name, "feature_dim", parsed.feature_dim, expected["feature_dim"],
            strict, notes)
    _verify(name, "num_nodes", parsed.num_nodes, expected["num_nodes"],
            strict=False, notes=notes)
    if parsed.source_links is not None:
        _verify(name, "source_links", parsed.source_links,
                expected["source_links"], strict=False, notes=notes)

    paths, checksums = write_interchange(parsed, out_dir)
    return ConversionReport(
        dataset=name, num_nodes=parsed.num_nodes, num_edges=parsed.num_edges,
        num_classes=parsed.num_classes, feature_dim=parsed.feature_dim,
        output_paths=paths, checksums=checksums, source_links=parsed.source_links,
        notes=notes)


def convert_tudataset(name: str, out_dir, cache_dir=None,
                      strict: bool = True) -> ConversionReport:
    """Pass the benchmark text files through unchanged (the training toolkit
    reads them natively) and verify the graph count."""
    out_dir = Path(out_dir)
    cache = Path(cache_dir) if cache_dir else out_dir / "_cache"
    src_dir = cache / name
    if not src_dir.is_dir():
        raise ConversionError(f"no cached distribution for '{name}' in {cache}: "
                              f"expected directory {src_dir} holding {name}_*.txt")
    indicator = src_dir / f"{name}_graph_indicator.txt"
    if not indicator.is_file():
        raise ConversionError(f"{src_dir}: missing {indicator.name}")
    num_graphs = max(int(line) for line in indicator.read_text().split())
    counts_rows = len(indicator.read_text().split())
    notes: list[str] = []
    _verify(name, "num_graphs", num_graphs, EXPECTED_TU_GRAPHS.get(name),
            strict, notes)

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    checksums = {}
    for src in sorted(src_dir.glob(f"{name}_*.txt")):
        dest = out_dir / src.name
        if dest.resolve() != src.resolve():
            shutil.copyfile(src, dest)
        paths.append(str(dest))
        checksums[dest.name] = _sha256(dest)
    labels_file = out_dir / f"{name}_graph_labels.txt"
    num_classes = len(set(labels_file.read_text().split())) \
        if labels_file.is_file() else 0
    return ConversionReport(
        dataset=name, num_nodes=counts_rows, num_edges=0, num_classes=num_classes,
        feature_dim=0, output_paths=paths, checksums=checksums,
        num_graphs=num_graphs, notes=notes)
