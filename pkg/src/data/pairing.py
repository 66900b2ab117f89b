"""Aligned source/target mini-batches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from ..autodiff import one_hot
from ..errors import DimensionError, PairingError
from .dataset import PairedDataset
from .scenes import SceneSample, labels_of, stack_features

SeedLike = Union[int, Sequence[int]]


@dataclass
class PairedBatch:
    """Target features, their paired source features and shared labels.

    ``x_source`` is None for single-domain batches (source pretraining,
    one-hot fine-tuning without a teacher). ``soft_labels`` rows sum to 1;
    they are one-hot unless the batch was mixed.
    """

    x_target: np.ndarray = field(repr=False)
    labels: np.ndarray
    soft_labels: np.ndarray = field(repr=False)
    target_ids: np.ndarray
    x_source: Optional[np.ndarray] = field(default=None, repr=False)
    source_ids: Optional[np.ndarray] = None
    device: str = ""
    mixed: bool = False

    def __post_init__(self) -> None:
        size = self.x_target.shape[0]
        if (
            self.labels.shape != (size,)
            or self.soft_labels.shape[0] != size
            or len(self.target_ids) != size
        ):
            raise DimensionError(
                f"batch axes disagree: features {size}, labels {self.labels.shape}, "
                f"soft labels {self.soft_labels.shape}, ids {len(self.target_ids)}"
            )
        if self.x_source is not None:
            if self.x_source.shape != self.x_target.shape:
                raise PairingError(
                    f"source half {self.x_source.shape} does not align "
                    f"with target half {self.x_target.shape}"
                )
            if self.source_ids is None or len(self.source_ids) != size:
                raise PairingError("paired batch needs one source id per target sample")

    @property
    def size(self) -> int:
        return int(self.x_target.shape[0])

    @property
    def is_paired(self) -> bool:
        return self.x_source is not None

    def require_pairs(self) -> np.ndarray:
        """Source half of the batch.

        Raises:
            PairingError: If the batch carries no source half
        """
        if self.x_source is None:
            raise PairingError(f"batch of {self.size} target samples is unpaired")
        return self.x_source


def pair_batches(
    dataset: PairedDataset,
    device: str,
    batch_size: int,
    epoch_seed: SeedLike,
    drop_last: bool = False,
) -> Iterator[PairedBatch]:
    """Shuffle the device's target split and yield aligned (x_S, x_T, y) batches.

    The order is a pure function of ``epoch_seed``.

    Raises:
        PairingError: If a target sample has no source partner, naming its id
    """
    targets = dataset.targets_for(device)
    order = np.random.default_rng(epoch_seed).permutation(len(targets))
    for start in range(0, len(order), batch_size):
        chunk = [targets[i] for i in order[start : start + batch_size]]
        if drop_last and len(chunk) < batch_size:
            return
        partners = [dataset.partner(device, sample.sample_id) for sample in chunk]
        for target, source in zip(chunk, partners):
            if target.label != source.label:
                raise PairingError(
                    f"target sample {target.sample_id} (label {target.label}) is paired "
                    f"with source sample {source.sample_id} (label {source.label})"
                )
        labels = labels_of(chunk)
        yield PairedBatch(
            x_target=stack_features(chunk),
            labels=labels,
            soft_labels=one_hot(labels, dataset.num_classes),
            target_ids=np.array([s.sample_id for s in chunk], dtype=np.int64),
            x_source=stack_features(partners),
            source_ids=np.array([s.sample_id for s in partners], dtype=np.int64),
            device=device,
        )


def batches_from_samples(
    samples: Sequence[SceneSample],
    batch_size: int,
    epoch_seed: SeedLike,
    num_classes: int,
    shuffle: bool = True,
) -> Iterator[PairedBatch]:
    """Single-domain batches over ``samples``."""
    if shuffle:
        order = np.random.default_rng(epoch_seed).permutation(len(samples))
    else:
        order = np.arange(len(samples))
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        labels = labels_of(chunk)
        yield PairedBatch(
            x_target=stack_features(chunk),
            labels=labels,
            soft_labels=one_hot(labels, num_classes),
            target_ids=np.array([s.sample_id for s in chunk], dtype=np.int64),
            device=chunk[0].device_id,
        )
