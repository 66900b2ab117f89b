"""Optimization loop: schedule, mixup, SGD and the training drivers."""

from .mixup import MixupConfig, draw_mixup, mixup_batch
from .optim import SGD, clip_grad_norm
from .schedule import TrainSchedule, cosine_decay, cosine_restart_lr, cycle_position
from .trainer import (
    DIVERGENCE_FACTOR,
    LOG_COLUMNS,
    TrainingLog,
    TrainingResult,
    initial_target,
    pretrain_source,
    steps_per_epoch,
    train_transfer,
)

__all__ = [
    "DIVERGENCE_FACTOR",
    "LOG_COLUMNS",
    "MixupConfig",
    "SGD",
    "TrainSchedule",
    "TrainingLog",
    "TrainingResult",
    "clip_grad_norm",
    "cosine_decay",
    "cosine_restart_lr",
    "cycle_position",
    "draw_mixup",
    "initial_target",
    "mixup_batch",
    "pretrain_source",
    "steps_per_epoch",
    "train_transfer",
]
