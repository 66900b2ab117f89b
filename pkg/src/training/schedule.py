"""Optimizer hyperparameters and the cosine-decay-restart learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass
class TrainSchedule:
    """SGD settings plus the warm-restart cycle layout.

    Cycle ``k`` lasts ``cycle_length_epochs * cycle_mult**k`` epochs. Each
    step rescales the gradient to a global L2 norm of at most ``clip_norm``
    (0 disables clipping).
    """

    max_lr: float = 0.1
    min_lr: float = 1e-5
    cycle_length_epochs: int = 20
    cycle_mult: int = 1
    total_epochs: int = 60
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.min_lr < self.max_lr:
            raise ConfigurationError(
                "schedule needs 0 <= min_lr < max_lr, "
                f"got min_lr={self.min_lr}, max_lr={self.max_lr}"
            )
        if self.cycle_length_epochs < 1:
            raise ConfigurationError(
                f"cycle_length_epochs must be >= 1, got {self.cycle_length_epochs}"
            )
        if self.cycle_mult < 1 or int(self.cycle_mult) != self.cycle_mult:
            raise ConfigurationError(f"cycle_mult must be an integer >= 1, got {self.cycle_mult}")
        if self.total_epochs < 1:
            raise ConfigurationError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(
                f"batch_size must be >= 2 for batchnorm, got {self.batch_size}"
            )
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.clip_norm >= 0:
            raise ConfigurationError(f"clip_norm must be >= 0, got {self.clip_norm}")


def cosine_decay(position: float, period: float, max_lr: float, min_lr: float) -> float:
    """``min + 0.5 (max - min) (1 + cos(pi * position / period))``."""
    return min_lr + 0.5 * (max_lr - min_lr) * (1.0 + math.cos(math.pi * position / period))


def cycle_position(step: int, first_cycle: int, cycle_mult: int) -> tuple[int, int]:
    """Position inside the current cycle and that cycle's length, both in steps."""
    if step < 0:
        raise ConfigurationError(f"step must be >= 0, got {step}")
    length = first_cycle
    while step >= length:
        step -= length
        length *= cycle_mult
    return step, length


def cosine_restart_lr(step: int, schedule: TrainSchedule, steps_per_epoch: int = 1) -> float:
    """Learning rate at global ``step``.

    Decays from ``max_lr`` towards ``min_lr`` over each cycle and jumps back
    to ``max_lr`` on the first step of the next one.
    """
    first_cycle = schedule.cycle_length_epochs * steps_per_epoch
    position, length = cycle_position(step, first_cycle, schedule.cycle_mult)
    return cosine_decay(position, length, schedule.max_lr, schedule.min_lr)
