"""Aspect-based sentiment classification with gated graph convolutions over
dependency trees, trained end to end on a built-in reverse-mode autodiff core."""

from .data import LABELS, DependencyTree, EmbeddingTable, Example, LoadError, build_tree, parse_corpus, syntax_scores
from .model import ForwardTrace, HyperParams, ModelState, total_loss
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward
from .trainer import Metrics, TrainConfig, evaluate, run_ablations, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "DependencyTree",
    "EmbeddingTable",
    "Example",
    "ForwardTrace",
    "HyperParams",
    "LABELS",
    "LoadError",
    "Metrics",
    "ModelState",
    "Tape",
    "Tensor",
    "TrainConfig",
    "adam_step",
    "backward",
    "build_tree",
    "evaluate",
    "parse_corpus",
    "run_ablations",
    "syntax_scores",
    "total_loss",
    "train",
]
