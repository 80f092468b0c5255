"""Collaborative pretraining loop over k encoders.

Per batch, every encoder embeds the items once from its start-of-batch
parameters; each encoder then takes one optimizer step on its own loss
against the other encoders' detached embeddings, in fixed index order.
Graph-level mode contrasts graphs within a minibatch; node-level mode
contrasts the nodes of one full graph per epoch.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, backward
from .contrastive import encoder_loss
from .encoders import EncoderParams, EncoderSpec, forward_graphs, forward_nodes, init_params
from .errors import NumericError, UsageError
from .graphs import Graph, GraphBatch, make_batches
from .optim import AdamState, adam_step
from .rng import stream


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 0.001
    weight_decay: float = 0.0001
    batch_size: int = 256
    epochs: int = 100
    temperature: float = 0.5
    hidden_dim: int = 128
    dropout: float = 0.5
    early_stop_patience: int = 20
    mode: str = "graph_level"
    similarity: str = "dot"
    joint_gradients: bool = False
    alternate_order: bool = False
    row_block: Optional[int] = None

    def __post_init__(self):
        if self.mode not in ("graph_level", "node_level"):
            raise UsageError(f"mode must be graph_level or node_level, got '{self.mode}'")
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if self.temperature <= 0.0:
            raise UsageError("temperature must be positive")
        if self.early_stop_patience < 1:
            raise UsageError("early_stop_patience must be >= 1")


@dataclass
class LogRow:
    epoch: int
    encoder: int
    mean_loss: float
    seconds: float


@dataclass
class ConvergenceLog:
    rows: list[LogRow] = field(default_factory=list)

    def add_epoch(self, epoch: int, losses: Sequence[float], seconds: float) -> None:
        for enc, loss in enumerate(losses):
            self.rows.append(LogRow(epoch, enc, float(loss), seconds))

    def encoder_losses(self, encoder: int) -> list[float]:
        return [r.mean_loss for r in self.rows if r.encoder == encoder]

    def epoch_means(self) -> list[float]:
        """Mean loss across encoders, one value per epoch in order."""
        by_epoch: dict[int, list[float]] = {}
        for r in self.rows:
            by_epoch.setdefault(r.epoch, []).append(r.mean_loss)
        return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]

    def num_encoders(self) -> int:
        return max((r.encoder for r in self.rows), default=-1) + 1

    def synchrony(self) -> float:
        """Mean pairwise Spearman correlation of the per-encoder epoch-loss
        curves; positive values mean the encoders converge together.
        Reported for diagnostics, never asserted."""
        from scipy.stats import spearmanr

        k = self.num_encoders()
        curves = [self.encoder_losses(enc) for enc in range(k)]
        if k < 2 or len(curves[0]) < 2:
            return float("nan")
        rhos = []
        for a in range(k):
            for b in range(a + 1, k):
                rho = spearmanr(curves[a], curves[b]).statistic
                if np.isfinite(rho):
                    rhos.append(float(rho))
        return float(np.mean(rhos)) if rhos else float("nan")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "encoder", "mean_loss", "seconds"])
            for r in self.rows:
                writer.writerow([r.epoch, r.encoder, repr(r.mean_loss), f"{r.seconds:.6f}"])

    @classmethod
    def read_csv(cls, path) -> "ConvergenceLog":
        log = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                log.rows.append(LogRow(int(rec["epoch"]), int(rec["encoder"]),
                                       float(rec["mean_loss"]), float(rec["seconds"])))
        return log


@dataclass
class TrainerState:
    """Everything needed to resume training exactly: parameters, optimizer
    moments, and the number of completed epochs."""

    params: list[EncoderParams]
    adam: list[AdamState]
    epoch: int


@dataclass
class PretrainResult:
    params: list[EncoderParams]
    log: ConvergenceLog
    best_epoch: int
    stopped_epoch: int
    final_state: TrainerState

    def __iter__(self):
        # allows `params, log = pretrain_...(...)`
        return iter((self.params, self.log))


def early_stop(epoch_losses: Sequence[float], patience: int) -> int:
    """Epoch (1-based) of the running minimum once `patience` consecutive
    epochs fail to improve it; the final minimum if that never happens."""
    if patience < 1:
        raise UsageError("patience must be >= 1")
    best = float("inf")
    best_epoch = 0
    since = 0
    for epoch, loss in enumerate(epoch_losses, start=1):
        if loss < best:
            best = loss
            best_epoch = epoch
            since = 0
        else:
            since += 1
            if since >= patience:
                break
    return best_epoch


def _validate(specs: Sequence[EncoderSpec], cfg: TrainConfig, pooling: str) -> None:
    if len(specs) < 2:
        raise UsageError(f"collaborative pretraining needs >= 2 encoders, got {len(specs)}")
    for spec in specs:
        if spec.pooling != pooling:
            raise UsageError(f"{cfg.mode} pretraining requires pooling='{pooling}', "
                             f"spec has '{spec.pooling}'")


def _init_state(specs, cfg) -> TrainerState:
    params = [init_params(spec, stream(cfg.seed, "init", i)) for i, spec in enumerate(specs)]
    adam = [AdamState.for_params(p.named()) for p in params]
    return TrainerState(params, adam, epoch=0)


def _check_loss(value: float, epoch: int, batch: int, encoder: int) -> float:
    if not np.isfinite(value):
        raise NumericError(f"non-finite contrastive loss at epoch {epoch}, "
                           f"batch {batch}, encoder {encoder}")
    return float(value)


def _step_on_batch(data, k, state, cfg, epoch, batch_idx, forward) -> list[float]:
    """All encoders embed, then each takes one optimizer step; returns the
    per-encoder summed losses for this batch."""

    def run(i, tag):
        rng = stream(cfg.seed, "dropout", epoch, batch_idx, i, tag)
        return forward(state.params[i], data, True, rng)

    losses = [0.0] * k
    order = range(k)
    if cfg.alternate_order and (epoch + batch_idx) % 2 == 1:
        order = reversed(range(k))
    if cfg.joint_gradients:
        with Tape() as tape:
            reps = [run(i, "query") for i in range(k)]
            total = None
            per_enc = []
            for p in range(k):
                lp = encoder_loss(p, reps, cfg.temperature, detach_keys=False,
                                  similarity=cfg.similarity, row_block=cfg.row_block)
                per_enc.append(lp)
                total = lp if total is None else ad.add(total, lp)
        backward(total, tape)
        for p in range(k):
            losses[p] = _check_loss(per_enc[p].data[0, 0], epoch, batch_idx, p)
        for p in order:
            adam_step(state.params[p].named(), state.params[p].grads(), state.adam[p],
                      cfg.learning_rate, cfg.weight_decay)
        return losses

    keys = [run(i, "key").detach() for i in range(k)]
    for p in order:
        with Tape() as tape:
            reps = list(keys)
            reps[p] = run(p, "query")
            loss = encoder_loss(p, reps, cfg.temperature, detach_keys=True,
                                similarity=cfg.similarity, row_block=cfg.row_block)
        backward(loss, tape)
        losses[p] = _check_loss(loss.data[0, 0], epoch, batch_idx, p)
        adam_step(state.params[p].named(), state.params[p].grads(), state.adam[p],
                  cfg.learning_rate, cfg.weight_decay)
    return losses


def _pretrain(specs, cfg, epoch_batches, pooling, forward,
              resume_from: Optional[TrainerState]) -> PretrainResult:
    _validate(specs, cfg, pooling)
    state = resume_from if resume_from is not None else _init_state(specs, cfg)
    k = len(specs)
    log = ConvergenceLog()
    best_mean = float("inf")
    best_epoch = 0
    best_params = [p.copy() for p in state.params]
    since_best = 0
    stopped = state.epoch
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        totals = np.zeros(k)
        items = 0
        for batch_idx, (data, size) in enumerate(epoch_batches(epoch)):
            batch_losses = _step_on_batch(data, k, state, cfg, epoch, batch_idx, forward)
            totals += batch_losses
            items += size
        state.epoch = epoch
        stopped = epoch
        means = totals / max(items, 1)
        log.add_epoch(epoch, means, time.perf_counter() - t0)
        epoch_mean = float(means.mean())
        if epoch_mean < best_mean:
            best_mean = epoch_mean
            best_epoch = epoch
            best_params = [p.copy() for p in state.params]
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    return PretrainResult(params=best_params, log=log, best_epoch=best_epoch,
                          stopped_epoch=stopped, final_state=state)


def pretrain_graph_level(graphs: Sequence[Graph], specs: Sequence[EncoderSpec],
                         cfg: TrainConfig,
                         resume_from: Optional[TrainerState] = None) -> PretrainResult:
    """Minibatched collaborative pretraining of graph-level encoders."""
    if cfg.mode != "graph_level":
        raise UsageError("config mode must be graph_level")
    if not graphs:
        raise UsageError("no graphs to pretrain on")
    for g in graphs:
        if g.features is None:
            raise UsageError("graphs must be featurized before pretraining")

    def epoch_batches(epoch):
        batches = make_batches(graphs, cfg.batch_size, stream(cfg.seed, "shuffle", epoch))
        return [(b, b.size) for b in batches]

    return _pretrain(specs, cfg, epoch_batches, "global_add", forward_graphs, resume_from)


def pretrain_node_level(graph: Graph, specs: Sequence[EncoderSpec], cfg: TrainConfig,
                        resume_from: Optional[TrainerState] = None) -> PretrainResult:
    """Collaborative pretraining over all nodes of one graph; no batching
    (node dependence ties the whole graph together)."""
    if cfg.mode != "node_level":
        raise UsageError("config mode must be node_level")
    if isinstance(graph, GraphBatch):
        raise UsageError("node-level pretraining takes a single graph")
    if graph.features is None:
        raise UsageError("graph must carry features")

    def epoch_batches(epoch):
        return [(graph, graph.num_nodes)]

    return _pretrain(specs, cfg, epoch_batches, "none", forward_nodes, resume_from)
