"""Command-line entry point.

Subcommands: pretrain, evaluate, finetune, embed, selftest. Exit codes:
0 success, 2 usage error, 3 data error, 4 numeric failure. The env var
CGCL_THREADS caps BLAS parallelism (the only parallelism used); it is
applied in the package __init__ before numpy loads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cograph",
        description="Collaborative multi-encoder graph contrastive learning")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--data", help="dataset directory")
        p.add_argument("--out", help="output directory or file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dataset-preset", dest="preset",
                       help="named hyperparameter preset (e.g. mutag, cora)")
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--target-encoder", dest="target_encoder",
                       help="encoder kind whose embeddings are evaluated")

    p = sub.add_parser("pretrain", help="collaborative pretraining")
    add_common(p)
    p.add_argument("--encoders", help="comma list of gcn|gin|gat (need >= 2)")
    p.add_argument("--mode", choices=["graph", "node"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--similarity", choices=["dot", "cosine"], default=None)
    p.add_argument("--features", choices=["default", "constant", "one_hot_degree"],
                   default=None)

    p = sub.add_parser("evaluate", help="probe a checkpoint's embeddings")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--features", choices=["default", "constant", "one_hot_degree"],
                   default=None)

    p = sub.add_parser("finetune", help="supervised finetuning from a checkpoint")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label-fraction", dest="label_fraction", type=float, default=0.1)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--finetune-lr", dest="finetune_lr", type=float, default=None)
    p.add_argument("--finetune-wd", dest="finetune_wd", type=float, default=None)
    p.add_argument("--features", choices=["default", "constant", "one_hot_degree"],
                   default=None)

    p = sub.add_parser("embed", help="export embeddings as TSV")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", choices=["default", "constant", "one_hot_degree"],
                   default=None)

    sub.add_parser("selftest", help="run the built-in verification battery")
    return parser


def _read_config_file(path) -> dict:
    from .errors import DataFormatError
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataFormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


_CONFIG_TYPES = {
    "seed": int, "learning_rate": float, "weight_decay": float, "batch_size": int,
    "epochs": int, "temperature": float, "hidden_dim": int, "dropout": float,
    "early_stop_patience": int, "num_layers": int, "similarity": str,
    "mode": str, "encoders": str, "features": str, "target_encoder": str,
}


def _resolve_config(args) -> dict:
    """Merge preset < config file < flags into one flat mapping."""
    from .errors import UsageError
    from .presets import get_preset

    resolved: dict = {}
    if args.preset:
        preset = get_preset(args.preset)
        resolved.update({
            "seed": preset.seed, "learning_rate": preset.learning_rate,
            "weight_decay": preset.weight_decay, "batch_size": preset.batch_size,
            "epochs": preset.epochs, "temperature": preset.temperature,
            "hidden_dim": preset.hidden_dim, "dropout": preset.dropout,
            "early_stop_patience": preset.early_stop_patience, "mode": preset.mode,
            "features": preset.feature_scheme,
        })
    if args.config:
        for key, raw in _read_config_file(args.config).items():
            if key not in _CONFIG_TYPES:
                raise UsageError(f"unknown config key '{key}'")
            resolved[key] = _CONFIG_TYPES[key](raw)
    flag_map = {
        "seed": "seed", "lr": "learning_rate", "weight_decay": "weight_decay",
        "batch_size": "batch_size", "epochs": "epochs", "temperature": "temperature",
        "hidden": "hidden_dim", "dropout": "dropout", "patience":
        "early_stop_patience", "layers": "num_layers", "similarity": "similarity",
        "encoders": "encoders", "features": "features",
        "target_encoder": "target_encoder",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            resolved[key] = value
    if getattr(args, "mode", None):
        resolved["mode"] = {"graph": "graph_level", "node": "node_level"}[args.mode]
    return resolved


def _config_text(resolved: dict) -> str:
    return "\n".join(f"{k}={resolved[k]}" for k in sorted(resolved)) + "\n"


def _config_digest(resolved: dict) -> str:
    return hashlib.sha256(_config_text(resolved).encode()).hexdigest()


def _load_graph_dataset(data_dir, scheme):
    from .errors import DataFormatError
    from .graphs import featurize, load_tudataset

    data_dir = Path(data_dir)
    candidates = sorted(data_dir.glob("*_A.txt"))
    if not candidates:
        raise DataFormatError(f"{data_dir}: no *_A.txt edge file found")
    name = candidates[0].name[:-len("_A.txt")]
    graphs = load_tudataset(data_dir, name)
    if scheme == "default" and graphs[0].features is None:
        raise DataFormatError(f"{data_dir}: dataset has no node features; "
                              "pass --features constant or one_hot_degree")
    return name, featurize(graphs, scheme or "default")


def cmd_pretrain(args) -> int:
    from .checkpoint import Checkpoint
    from .encoders import EncoderSpec
    from .errors import UsageError
    from .graphs import load_node_dataset
    from .trainer import TrainConfig, pretrain_graph_level, pretrain_node_level

    resolved = _resolve_config(args)
    encoders = [e.strip() for e in (resolved.get("encoders") or "").split(",")
                if e.strip()]
    if len(encoders) < 2:
        raise UsageError("collaborative pretraining needs --encoders with at least "
                         "two of gcn|gin|gat (comma separated)")
    if not args.data:
        raise UsageError("--data is required")
    if not args.out:
        raise UsageError("--out run directory is required")
    mode = resolved.get("mode", "graph_level")
    scheme = resolved.get("features", "default")

    if mode == "graph_level":
        dataset_name, graphs = _load_graph_dataset(args.data, scheme)
        input_dim = graphs[0].features.shape[1]
        pooling = "global_add"
    else:
        graph = load_node_dataset(args.data)
        dataset_name = Path(args.data).name
        input_dim = graph.features.shape[1]
        pooling = "none"

    cfg_fields = {k: v for k, v in resolved.items()
                  if k in ("seed", "learning_rate", "weight_decay", "batch_size",
                           "epochs", "temperature", "hidden_dim", "dropout",
                           "early_stop_patience", "similarity")}
    cfg = TrainConfig(mode=mode, **cfg_fields)
    num_layers = resolved.get("num_layers", 3 if mode == "graph_level" else 2)
    specs = [EncoderSpec(kind, input_dim=input_dim, hidden_dim=cfg.hidden_dim,
                         num_layers=num_layers, dropout=cfg.dropout, pooling=pooling)
             for kind in encoders]

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved["encoders"] = ",".join(encoders)
    resolved["dataset"] = dataset_name
    resolved["num_layers"] = num_layers
    digest = _config_digest(resolved)
    (out_dir / "resolved-config.txt").write_text(_config_text(resolved))

    if mode == "graph_level":
        result = pretrain_graph_level(graphs, specs, cfg)
    else:
        result = pretrain_node_level(graph, specs, cfg)

    result.log.write_csv(out_dir / "convergence.csv")
    Checkpoint.from_trainer_state(result.final_state, mode, cfg.seed, digest) \
        .save(out_dir / "checkpoint-final.ckpt")
    Checkpoint.from_trainer_state(result.final_state, mode, cfg.seed, digest,
                                  params_override=result.params,
                                  epoch=result.best_epoch) \
        .save(out_dir / "checkpoint-best.ckpt")
    sync = result.log.synchrony()
    print(f"pretrained {len(encoders)} encoders on {dataset_name}: "
          f"best epoch {result.best_epoch}, stopped after {result.stopped_epoch}, "
          f"loss-curve synchrony {sync:+.3f}; run directory {out_dir}")
    return 0


def _target_params(ckpt, target: str | None):
    from .errors import UsageError
    kinds = [p.spec.kind for p in ckpt.params]
    if target is None:
        if len(set(kinds)) != 1:
            raise UsageError(f"checkpoint holds encoders {kinds}; "
                             "pass --target-encoder")
        return ckpt.params[0]
    if target not in kinds:
        raise UsageError(f"target encoder '{target}' not in checkpoint ({kinds})")
    return ckpt.params[kinds.index(target)]


def _checkpoint_embeddings(args):
    from .checkpoint import Checkpoint
    from .errors import UsageError
    from .evaluation import embed_dataset
    from .graphs import load_node_dataset

    ckpt = Checkpoint.load(args.checkpoint)
    if not args.data:
        raise UsageError("--data is required")
    data_dir = Path(args.data)
    looks_graph = bool(sorted(data_dir.glob("*_A.txt")))
    looks_node = (data_dir / "edges.tsv").is_file()
    if ckpt.mode == "graph_level" and looks_node and not looks_graph:
        raise UsageError(f"checkpoint is graph_level but {data_dir} holds a "
                         "node-level interchange dataset")
    if ckpt.mode == "node_level" and looks_graph and not looks_node:
        raise UsageError(f"checkpoint is node_level but {data_dir} holds a "
                         "graph-level benchmark dataset")
    params = _target_params(ckpt, args.target_encoder)
    scheme = args.features or "default"
    if ckpt.mode == "graph_level":
        dataset_name, graphs = _load_graph_dataset(args.data, scheme)
        emb = embed_dataset(params, graphs)
        data = graphs
    else:
        graph = load_node_dataset(args.data)
        dataset_name = Path(args.data).name
        emb = embed_dataset(params, graph)
        data = graph
    return ckpt, params, emb, dataset_name, data


def cmd_evaluate(args) -> int:
    from .errors import UsageError
    from .evaluation import linear_probe_graph, make_node_split, node_probe, repeat_runs
    from .rng import stream

    ckpt, params, emb, dataset_name, _data = _checkpoint_embeddings(args)
    if emb.labels is None:
        raise UsageError("dataset carries no labels to evaluate against")

    if ckpt.mode == "graph_level":
        def protocol(seed: int) -> float:
            return linear_probe_graph(emb, repeats=1, seed=seed)[0]
    else:
        def protocol(seed: int) -> float:
            split = make_node_split(emb.labels, rng=stream(seed, "node_split"))
            return node_probe(emb, split, seed=seed)

    stats = repeat_runs(protocol, n=args.runs)
    record_base = {"dataset": dataset_name,
                   "encoders": ",".join(p.spec.kind for p in ckpt.params),
                   "target": params.spec.kind}
    lines = [json.dumps({**record_base, "seed": s, "accuracy": a})
             for s, a in zip(stats.seeds, stats.accuracies)]
    lines.append(json.dumps({**record_base, "seed": None, "accuracy": stats.mean,
                             "std": stats.std, "runs": args.runs}))
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"{dataset_name} [{record_base['encoders']} -> {record_base['target']}]: "
          f"accuracy {stats.mean:.4f} +/- {stats.std:.4f} over {args.runs} runs")
    return 0


def cmd_finetune(args) -> int:
    from .errors import UsageError
    from .evaluation import finetune
    from .presets import FINETUNE_LR, FINETUNE_STEPS, FINETUNE_WEIGHT_DECAY

    ckpt, params, _emb, dataset_name, data = _checkpoint_embeddings(args)
    if ckpt.mode != "graph_level":
        raise UsageError("finetuning applies to graph-level checkpoints")
    result = finetune(params, data,
                      label_fraction=args.label_fraction,
                      steps=args.steps if args.steps is not None else FINETUNE_STEPS,
                      lr=args.finetune_lr if args.finetune_lr is not None else FINETUNE_LR,
                      weight_decay=(args.finetune_wd if args.finetune_wd is not None
                                    else FINETUNE_WEIGHT_DECAY),
                      seed=args.seed if args.seed is not None else 0)
    record = {"dataset": dataset_name, "target": params.spec.kind,
              "label_fraction": args.label_fraction, "steps": result.steps,
              "accuracy": result.accuracy}
    if args.out:
        Path(args.out).write_text(json.dumps(record) + "\n")
    print(f"{dataset_name} finetune [{params.spec.kind}]: accuracy "
          f"{result.accuracy:.4f} after {result.steps} steps")
    return 0


def cmd_embed(args) -> int:
    from .embeddings import export_embeddings
    from .errors import UsageError

    if not args.out:
        raise UsageError("--out TSV path is required")
    _ckpt, params, emb, dataset_name, _data = _checkpoint_embeddings(args)
    export_embeddings(emb, args.out)
    print(f"wrote {len(emb)} x {emb.dim} embeddings for {dataset_name} "
          f"[{params.spec.kind}] to {args.out}")
    return 0


def main(argv=None) -> int:
    from .errors import DataFormatError, DomainError, NumericError, UsageError

    args = _build_parser().parse_args(argv)
    try:
        if args.command == "pretrain":
            return cmd_pretrain(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        if args.command == "finetune":
            return cmd_finetune(args)
        if args.command == "embed":
            return cmd_embed(args)
        if args.command == "selftest":
            from .selftest import run_selftest
            return 1 if run_selftest() else 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, DomainError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
