"""Collaborative multi-encoder graph contrastive learning toolkit.

Multiple GNN encoders are trained jointly: each encoder's view of a
graph or node is the positive key for every other encoder's query under
a temperature-scaled softmax loss, with no handcrafted augmentation.
"""

import os as _os
import sys as _sys

# CGCL_THREADS caps BLAS parallelism; must land before numpy first loads
if "CGCL_THREADS" in _os.environ and "numpy" not in _sys.modules:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["CGCL_THREADS"])

from .autodiff import Tape, Tensor, backward
from .checkpoint import Checkpoint
from .contrastive import (ContrastiveConfig, encoder_loss, info_nce,
                          loss_equivalence_oracle, positive_pairs, score_matrix)
from .embeddings import EmbeddingSet, export_embeddings, read_embeddings
from .encoders import EncoderParams, EncoderSpec, encode, init_params
from .evaluation import (NodeSplit, embed_dataset, finetune, linear_probe_graph,
                         make_node_split, node_probe, repeat_runs)
from .graphs import (Graph, GraphBatch, SparseMatrix, featurize, load_node_dataset,
                     load_tudataset, make_batches, normalized_adjacency, raw_adjacency)
from .optim import AdamState, adam_step
from .presets import PRESETS, get_preset, preset_train_config
from .trainer import (ConvergenceLog, TrainConfig, TrainerState, early_stop,
                      pretrain_graph_level, pretrain_node_level)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Checkpoint", "ContrastiveConfig", "ConvergenceLog",
    "EmbeddingSet", "EncoderParams", "EncoderSpec", "Graph", "GraphBatch",
    "NodeSplit", "PRESETS", "SparseMatrix", "Tape", "Tensor", "TrainConfig",
    "TrainerState", "adam_step", "backward", "early_stop", "embed_dataset",
    "encode", "encoder_loss", "export_embeddings", "featurize", "finetune",
    "get_preset", "info_nce", "init_params", "linear_probe_graph",
    "load_node_dataset", "load_tudataset", "loss_equivalence_oracle",
    "make_batches", "make_node_split", "node_probe", "normalized_adjacency",
    "positive_pairs", "preset_train_config", "pretrain_graph_level",
    "pretrain_node_level", "raw_adjacency", "read_embeddings", "repeat_runs",
    "score_matrix",
]
