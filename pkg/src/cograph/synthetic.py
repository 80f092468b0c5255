"""Synthetic datasets for self-tests, examples, and benchmarks without
external data. Deterministic given an rng."""

from __future__ import annotations

import numpy as np

from .graphs import Graph

_SIGNAL_DIRECTION = np.array([0.5, 0.5, 0.5, 0.5])


def two_class_graphs(count: int, rng: np.random.Generator, amp: float = 1.2,
                     n_lo: int = 10, n_hi: int = 25) -> list[Graph]:
    """Binary-labeled random graphs with a sign-symmetric feature shift.

    Class 1 graphs shift every node's features by +/-amp along a fixed
    direction (the sign drawn per graph), class 0 graphs are unshifted.
    Pooled raw features therefore cannot separate the classes linearly;
    an encoder has to fold the two shifted modes onto the same side.
    """
    graphs = []
    for i in range(count):
        label = i % 2
        n = int(rng.integers(n_lo, n_hi))
        edges = set()
        for u in range(n):
            for v in range(u + 1, n):
                if rng.random() < 0.25:
                    edges.add((u, v))
        if not edges:
            edges.add((0, 1))
        feats = rng.normal(0.0, 1.0, (n, 4))
        if label == 1:
            c = (amp if rng.random() < 0.5 else -amp) * rng.uniform(0.8, 1.2)
            feats = feats + c * _SIGNAL_DIRECTION
        graphs.append(Graph(n, sorted(edges), features=feats, graph_label=label))
    return graphs


def community_node_graph(rng: np.random.Generator, num_classes: int = 3,
                         per_class: int = 12, p_in: float = 0.25,
                         p_out: float = 0.02, feature_dim: int = 8,
                         signal: float = 1.0) -> Graph:
    """One stochastic-block-model graph with a noisy per-community feature
    direction; node labels are the community ids."""
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)
    edges = set()
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.add((u, v))
    if not edges:
        edges.add((0, 1))
    directions = rng.normal(0.0, 1.0, (num_classes, feature_dim))
    feats = rng.normal(0.0, 1.0, (n, feature_dim)) + signal * directions[labels]
    return Graph(n, sorted(edges), features=feats,
                 node_labels=labels.astype(np.intp))
