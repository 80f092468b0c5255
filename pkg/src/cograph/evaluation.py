"""Downstream evaluation: frozen-embedding probes, random node splits,
the pretrain-finetune protocol, and repeated-run statistics.

The graph probe is an L2-regularized linear max-margin classifier (squared
hinge, one-vs-rest) trained by a deterministic quasi-Newton solver, with
an inner hold-out grid over the inverse-regularization constant. The node
probe is a one-hidden-layer perceptron trained with Adam and early-stopped
on validation accuracy. Features are standardized on the training portion
of every split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .embeddings import EmbeddingSet
from .encoders import EncoderParams, encode, forward_graphs
from .errors import UsageError
from .graphs import Graph, GraphBatch
from .optim import AdamState, adam_step
from .rng import stream

C_GRID = (1.0, 10.0, 100.0, 1000.0, 10000.0)
_EVAL_CHUNK = 512


# ---------------------------------------------------------------------------
# embedding extraction


def embed_dataset(params: EncoderParams,
                  data: Union[Graph, Sequence[Graph]]) -> EmbeddingSet:
    """Deterministic eval-mode embeddings of all graphs (pooled) or of all
    nodes of one graph. When several encoders were pretrained, the caller
    passes the target encoder's parameters."""
    if isinstance(data, Graph):
        return encode(params, data)
    chunks = [encode(params, GraphBatch.from_graphs(list(data[i:i + _EVAL_CHUNK])))
              for i in range(0, len(data), _EVAL_CHUNK)]
    matrix = np.concatenate([c.matrix for c in chunks], axis=0)
    labels = None
    if all(c.labels is not None for c in chunks):
        labels = np.concatenate([c.labels for c in chunks])
    return EmbeddingSet(matrix, ids=list(range(len(matrix))), labels=labels)


# ---------------------------------------------------------------------------
# linear max-margin probe (graph classification)


def _standardizer(x: np.ndarray):
    mean = x.mean(axis=0, keepdims=True)
    std = x.std(axis=0, keepdims=True)
    std[std < 1e-12] = 1.0
    return lambda z: (z - mean) / std


def _fit_linear_svm(x: np.ndarray, y_signs: np.ndarray, c: float) -> np.ndarray:
    """Squared-hinge primal with an augmented bias column; deterministic."""
    aug = np.hstack([x, np.ones((len(x), 1))])

    def objective(w):
        margin = 1.0 - y_signs * (aug @ w)
        active = np.maximum(margin, 0.0)
        value = 0.5 * w @ w + c * (active ** 2).sum()
        grad = w - 2.0 * c * (aug.T @ (active * y_signs))
        return value, grad

    res = minimize(objective, np.zeros(aug.shape[1]), jac=True, method="L-BFGS-B",
                   options={"maxiter": 300})
    return res.x


class LinearProbe:
    """One-vs-rest linear max-margin classifier with fixed C."""

    def __init__(self, c: float):
        self.c = c
        self.classes_: Optional[np.ndarray] = None
        self.weights_: Optional[np.ndarray] = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "LinearProbe":
        self.classes_ = np.unique(y)
        self.weights_ = np.stack([
            _fit_linear_svm(x, np.where(y == cls, 1.0, -1.0), self.c)
            for cls in self.classes_])
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        aug = np.hstack([x, np.ones((len(x), 1))])
        return self.classes_[np.argmax(aug @ self.weights_.T, axis=1)]

    def score(self, x: np.ndarray, y: np.ndarray) -> float:
        return float((self.predict(x) == y).mean())


def stratified_folds(labels: np.ndarray, k: int,
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Round-robin per-class assignment; every class must reach every fold."""
    labels = np.asarray(labels)
    for cls in np.unique(labels):
        if (labels == cls).sum() < k:
            raise UsageError(f"class {cls} has fewer than {k} members; "
                             f"stratified {k}-fold split impossible")
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        ids = np.flatnonzero(labels == cls)
        ids = ids[rng.permutation(len(ids))]
        for pos, idx in enumerate(ids):
            folds[pos % k].append(int(idx))
    return [np.sort(np.array(f, dtype=np.intp)) for f in folds]


def _stratified_holdout(labels: np.ndarray, fraction: float,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(rest, held-out) index split keeping at least one held-out per class."""
    held: list[int] = []
    for cls in np.unique(labels):
        ids = np.flatnonzero(labels == cls)
        ids = ids[rng.permutation(len(ids))]
        take = max(1, int(round(fraction * len(ids))))
        held.extend(ids[:take].tolist())
    held_arr = np.sort(np.array(held, dtype=np.intp))
    rest = np.setdiff1d(np.arange(len(labels)), held_arr)
    return rest, held_arr


def linear_probe_graph(emb: EmbeddingSet, folds: int = 10, repeats: int = 10,
                       c_grid: Sequence[float] = C_GRID,
                       seed: int = 0) -> tuple[float, float]:
    """Repeated stratified cross-validation with an inner hold-out C grid;
    returns (mean, sample std) over the repeat means."""
    if emb.labels is None:
        raise UsageError("linear probe needs labeled embeddings")
    labels = emb.labels
    if len(np.unique(labels)) < 2:
        raise UsageError("linear probe needs at least two classes")
    repeat_means = []
    for rep in range(repeats):
        fold_ids = stratified_folds(labels, folds, stream(seed, "folds", rep))
        accs = []
        for f in range(folds):
            test_ids = fold_ids[f]
            train_ids = np.sort(np.concatenate(
                [fold_ids[g] for g in range(folds) if g != f]))
            norm = _standardizer(emb.matrix[train_ids])
            x_train = norm(emb.matrix[train_ids])
            x_test = norm(emb.matrix[test_ids])
            y_train, y_test = labels[train_ids], labels[test_ids]
            inner_rest, inner_val = _stratified_holdout(
                y_train, 1.0 / (folds - 1), stream(seed, "inner", rep, f))
            best_c, best_acc = None, -1.0
            for c in c_grid:
                probe = LinearProbe(c).fit(x_train[inner_rest], y_train[inner_rest])
                acc = probe.score(x_train[inner_val], y_train[inner_val])
                if acc > best_acc:
                    best_c, best_acc = c, acc
            final = LinearProbe(best_c).fit(x_train, y_train)
            accs.append(final.score(x_test, y_test))
        repeat_means.append(float(np.mean(accs)))
    mean = float(np.mean(repeat_means))
    std = float(np.std(repeat_means, ddof=1)) if len(repeat_means) > 1 else 0.0
    return mean, std


# ---------------------------------------------------------------------------
# node classification probe


@dataclass
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_node_split(labels: np.ndarray, per_class: int = 40, val: int = 500,
                    test: int = 1000,
                    rng: Optional[np.random.Generator] = None) -> NodeSplit:
    """Sample per_class train nodes per class, then disjoint val/test pools."""
    if rng is None:
        raise UsageError("make_node_split needs an rng")
    labels = np.asarray(labels)
    train: list[int] = []
    for cls in np.unique(labels):
        ids = np.flatnonzero(labels == cls)
        if len(ids) < per_class:
            raise UsageError(f"class {cls} has {len(ids)} nodes, "
                             f"cannot sample {per_class}")
        train.extend(rng.choice(ids, size=per_class, replace=False).tolist())
    train_arr = np.sort(np.array(train, dtype=np.intp))
    pool = np.setdiff1d(np.arange(len(labels)), train_arr)
    if len(pool) < val + test:
        raise UsageError(f"only {len(pool)} nodes left for val={val} + test={test}")
    pool = pool[rng.permutation(len(pool))]
    return NodeSplit(train=train_arr, val=np.sort(pool[:val]),
                     test=np.sort(pool[val:val + test]))


class _MLP:
    def __init__(self, in_dim: int, hidden: int, classes: int,
                 rng: np.random.Generator):
        def xavier(shape):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            return Tensor(rng.uniform(-limit, limit, shape), requires_grad=True)

        self.tensors = {
            "w1": xavier((in_dim, hidden)),
            "b1": Tensor(np.zeros((1, hidden)), requires_grad=True),
            "w2": xavier((hidden, classes)),
            "b2": Tensor(np.zeros((1, classes)), requires_grad=True),
        }

    def named(self):
        return list(self.tensors.items())

    def logits(self, x: Tensor) -> Tensor:
        t = self.tensors
        h = ad.relu(ad.add_rowvec(ad.matmul(x, t["w1"]), t["b1"]))
        return ad.add_rowvec(ad.matmul(h, t["w2"]), t["b2"])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(Tensor(x)).data, axis=1)


def _cross_entropy(logits: Tensor, y: np.ndarray) -> Tensor:
    mask = np.zeros(logits.shape)
    mask[np.arange(len(y)), y] = 1.0
    picked = ad.mul(ad.row_log_softmax(logits), Tensor(mask))
    return ad.scale(ad.sum_all(picked), -1.0 / len(y))


def node_probe(emb: EmbeddingSet, split: NodeSplit, lr: float = 0.01,
               epochs: int = 200, patience: int = 20, seed: int = 0) -> float:
    """Perceptron with one hidden layer of the embedding width; early-stopped
    on validation accuracy, reported on the test ids."""
    if emb.labels is None:
        raise UsageError("node probe needs labeled embeddings")
    labels = emb.labels
    classes = int(labels.max()) + 1
    norm = _standardizer(emb.matrix[split.train])
    x = {name: norm(emb.matrix[ids])
         for name, ids in (("train", split.train), ("val", split.val),
                           ("test", split.test))}
    y_train = labels[split.train]
    mlp = _MLP(emb.dim, emb.dim, classes, stream(seed, "probe_init"))
    state = AdamState.for_params(mlp.named())
    best_val = -1.0
    best_weights = {k: t.data.copy() for k, t in mlp.tensors.items()}
    since = 0
    x_train = Tensor(x["train"])
    for _epoch in range(epochs):
        with Tape() as tape:
            loss = _cross_entropy(mlp.logits(x_train), y_train)
        backward(loss, tape)
        adam_step(mlp.named(), [t.grad for _, t in mlp.named()], state, lr)
        val_acc = float((mlp.predict(x["val"]) == labels[split.val]).mean())
        if val_acc >= best_val:
            # ties keep the later snapshot: margins sharpen while val is flat
            if val_acc > best_val:
                since = 0
            else:
                since += 1
            best_val = val_acc
            best_weights = {k: t.data.copy() for k, t in mlp.tensors.items()}
        else:
            since += 1
        if since >= patience:
            break
    for k, t in mlp.tensors.items():
        t.data = best_weights[k]
    return float((mlp.predict(x["test"]) == labels[split.test]).mean())


# ---------------------------------------------------------------------------
# pretrain-finetune


@dataclass
class FinetuneResult:
    accuracy: float
    steps: int

    def __float__(self):
        return self.accuracy


def finetune(pretrained: EncoderParams, graphs: Sequence[Graph],
             label_fraction: float = 0.1, steps: int = 120, lr: float = 5e-4,
             weight_decay: float = 1e-4, seed: int = 0) -> FinetuneResult:
    """Append a linear head to the pooled embedding and train head plus
    encoder jointly on the labeled fraction; accuracy on the remainder."""
    if not 0.0 < label_fraction <= 1.0:
        raise UsageError(f"label_fraction must be in (0,1], got {label_fraction}")
    if any(g.graph_label is None for g in graphs):
        raise UsageError("finetuning needs labeled graphs")
    labels = np.array([g.graph_label for g in graphs], dtype=np.intp)
    classes = int(labels.max()) + 1
    rng = stream(seed, "finetune_split")
    labeled: list[int] = []
    for cls in np.unique(labels):
        ids = np.flatnonzero(labels == cls)
        take = max(1, int(round(label_fraction * len(ids))))
        labeled.extend(rng.choice(ids, size=take, replace=False).tolist())
    labeled_arr = np.sort(np.array(labeled, dtype=np.intp))
    rest = np.setdiff1d(np.arange(len(graphs)), labeled_arr)
    eval_ids = rest if len(rest) else labeled_arr

    params = pretrained.copy()
    # zero-initialized head: the prescribed few steps determine its direction
    head_w = Tensor(np.zeros((params.spec.hidden_dim, classes)), requires_grad=True)
    head_b = Tensor(np.zeros((1, classes)), requires_grad=True)
    named = params.named() + [("head.weight", head_w), ("head.bias", head_b)]
    state = AdamState.for_params(named)
    batch = GraphBatch.from_graphs([graphs[i] for i in labeled_arr])
    y = labels[labeled_arr]
    for step in range(steps):
        with Tape() as tape:
            pooled = forward_graphs(params, batch, training=True,
                                    rng=stream(seed, "finetune_dropout", step))
            logits = ad.add_rowvec(ad.matmul(pooled, head_w), head_b)
            loss = _cross_entropy(logits, y)
        backward(loss, tape)
        adam_step(named, [t.grad for _, t in named], state, lr, weight_decay)

    eval_batch = GraphBatch.from_graphs([graphs[i] for i in eval_ids])
    pooled = forward_graphs(params, eval_batch, training=False)
    logits = ad.add_rowvec(ad.matmul(pooled, head_w), head_b)
    preds = np.argmax(logits.data, axis=1)
    accuracy = float((preds == labels[eval_ids]).mean())
    return FinetuneResult(accuracy=accuracy, steps=state.t)


# ---------------------------------------------------------------------------
# repeated runs


@dataclass
class RepeatStats:
    mean: float
    std: float
    seeds: list[int]
    accuracies: list[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.mean, self.std))


def repeat_runs(protocol: Callable[[int], float], n: int = 10,
                seeds: Optional[Sequence[int]] = None) -> RepeatStats:
    """Run a seeded protocol n times; sample standard deviation, results kept."""
    if seeds is None:
        seeds = list(range(n))
    seeds = list(seeds)[:n]
    if len(seeds) != n:
        raise UsageError(f"need {n} seeds, got {len(seeds)}")
    accs = [float(protocol(s)) for s in seeds]
    mean = float(np.mean(accs))
    std = float(np.std(accs, ddof=1)) if n > 1 else 0.0
    return RepeatStats(mean=mean, std=std, seeds=seeds, accuracies=accs)
