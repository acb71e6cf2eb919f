"""Objectives, data streams, optimiser and the training loop."""

from .data import TaskSpec, synth_sample, make_batch, OBJECTIVES, TASKS, DEFAULT_MOTIFS
from .optim import Adam, cross_entropy, lr_at
from .loop import TrainConfig, train

__all__ = ["TaskSpec", "synth_sample", "make_batch", "OBJECTIVES", "TASKS", "DEFAULT_MOTIFS",
           "Adam", "cross_entropy", "lr_at", "TrainConfig", "train"]
