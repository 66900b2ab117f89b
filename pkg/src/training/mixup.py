"""Mixup on single-domain and paired batches."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..data.pairing import PairedBatch
from ..errors import ConfigurationError, DimensionError, ValidationError


@dataclass
class MixupConfig:
    enabled: bool = False
    alpha: float = 0.2

    def __post_init__(self) -> None:
        if self.enabled and not self.alpha > 0:
            raise ConfigurationError(
                f"mixup.alpha must be > 0 when mixup is enabled, got {self.alpha}"
            )


def draw_mixup(rng: np.random.Generator, batch_size: int, alpha: float) -> tuple[float, np.ndarray]:
    """``lambda ~ Beta(alpha, alpha)`` and a partner permutation."""
    return float(rng.beta(alpha, alpha)), rng.permutation(batch_size)


def mixup_batch(
    batch: PairedBatch, lam: float, permutation: Optional[np.ndarray] = None
) -> PairedBatch:
    """Blend each example with its permuted partner.

    ``x' = lam * x + (1 - lam) * x[perm]`` and likewise for the soft labels.
    A paired batch mixes both halves with the same ``lam`` and permutation so
    every target row keeps its source partner. The default permutation
    reverses the batch.

    Raises:
        ValidationError: If ``lam`` lies outside [0, 1]
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"mixup lambda must be in [0, 1], got {lam}")
    perm = np.arange(batch.size)[::-1] if permutation is None else np.asarray(permutation)
    if sorted(perm.tolist()) != list(range(batch.size)):
        raise DimensionError(f"mixup permutation must reorder all {batch.size} rows")

    def blend(values: np.ndarray) -> np.ndarray:
        return lam * values + (1.0 - lam) * values[perm]

    return replace(
        batch,
        x_target=blend(batch.x_target),
        x_source=None if batch.x_source is None else blend(batch.x_source),
        soft_labels=blend(batch.soft_labels),
        mixed=True,
    )
