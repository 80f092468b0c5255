"""Per-dataset hyperparameter presets for the benchmark suites."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UsageError
from .trainer import TrainConfig


@dataclass(frozen=True)
class Preset:
    name: str
    mode: str
    learning_rate: float
    weight_decay: float
    hidden_dim: int
    dropout: float
    temperature: float
    seed: int
    feature_scheme: str = "default"
    batch_size: int = 256
    epochs: int = 100
    early_stop_patience: int = 20


def _graph(name, lr, wd, tau, scheme):
    return Preset(name=name, mode="graph_level", learning_rate=lr, weight_decay=wd,
                  hidden_dim=128, dropout=0.5, temperature=tau, seed=888,
                  feature_scheme=scheme, batch_size=256, epochs=100)


def _node(name, lr, tau):
    return Preset(name=name, mode="node_level", learning_rate=lr, weight_decay=0.0001,
                  hidden_dim=64, dropout=0.5, temperature=tau, seed=123,
                  batch_size=0, epochs=200)


PRESETS = {p.name: p for p in [
    _graph("proteins", 0.01, 0.001, 0.07, "default"),
    _graph("dd", 0.05, 0.0001, 0.01, "default"),
    _graph("mutag", 0.001, 0.0001, 0.07, "default"),
    _graph("collab", 0.01, 0.0001, 0.3, "constant"),
    _graph("rdt-b", 0.05, 0.0001, 0.1, "constant"),
    _graph("rdt-m5k", 0.05, 0.0001, 0.1, "constant"),
    _graph("imdb-b", 0.05, 0.0001, 0.5, "one_hot_degree"),
    _graph("imdb-m", 0.05, 0.0001, 0.1, "one_hot_degree"),
    _node("cora", 0.001, 0.5),
    _node("citeseer", 0.01, 0.8),
    _node("pubmed", 0.01, 0.5),
]}

FINETUNE_LR = 0.0005
FINETUNE_WEIGHT_DECAY = 0.0001
FINETUNE_STEPS = 120


def get_preset(name: str) -> Preset:
    key = name.lower()
    if key not in PRESETS:
        raise UsageError(f"unknown dataset preset '{name}'; "
                         f"known: {', '.join(sorted(PRESETS))}")
    return PRESETS[key]


def preset_train_config(preset: Preset, **overrides) -> TrainConfig:
    base = dict(
        seed=preset.seed,
        learning_rate=preset.learning_rate,
        weight_decay=preset.weight_decay,
        batch_size=preset.batch_size or 256,
        epochs=preset.epochs,
        temperature=preset.temperature,
        hidden_dim=preset.hidden_dim,
        dropout=preset.dropout,
        early_stop_patience=preset.early_stop_patience,
        mode=preset.mode,
    )
    base.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig(**base)
