"""Accuracy and intra-class discrepancy."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import SplitModel
from ..data.scenes import SceneSample, labels_of, stack_features
from ..errors import UsageError, ValidationError

DISCREPANCY_SAMPLES = 30


def accuracy_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax equals the label; ties go to the lowest class index."""
    if len(labels) == 0:
        raise UsageError("cannot compute accuracy on an empty sample set")
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def evaluate_accuracy(
    model: SplitModel, samples: Sequence[SceneSample], batch_size: int = 256
) -> float:
    """Eval-mode accuracy (latent = mean) of ``model`` on ``samples``.

    Raises:
        UsageError: If ``samples`` is empty
    """
    if not samples:
        raise UsageError("cannot compute accuracy on an empty sample set")
    logits = model.predict_logits(stack_features(samples), batch_size)
    return accuracy_from_logits(logits, labels_of(samples))


def pairwise_distances(outputs: np.ndarray) -> np.ndarray:
    """``D[i, j] = ||outputs[i] - outputs[j]||_2``; symmetric with a zero diagonal."""
    return np.linalg.norm(outputs[:, None, :] - outputs[None, :, :], axis=-1)


def intra_class_discrepancy(model: SplitModel, samples: Sequence[SceneSample]) -> np.ndarray:
    """Pairwise L2 distances between the pre-softmax outputs of same-class samples.

    Raises:
        UsageError: If ``samples`` is empty
        ValidationError: If the samples do not share one label
    """
    if not samples:
        raise UsageError("intra-class discrepancy needs at least one sample")
    labels = sorted({sample.label for sample in samples})
    if len(labels) != 1:
        raise ValidationError(f"intra-class discrepancy needs one class, got labels {labels}")
    return pairwise_distances(model.predict_logits(stack_features(samples)))


def mean_off_diagonal(matrix: np.ndarray) -> float:
    n = matrix.shape[0]
    if n < 2:
        return 0.0
    return float((matrix.sum() - np.trace(matrix)) / (n * (n - 1)))


def class_subset(
    samples: Sequence[SceneSample], label: int, count: int = DISCREPANCY_SAMPLES, seed: int = 0
) -> list[SceneSample]:
    """Seeded pick of ``count`` samples of class ``label``, ordered by sample id."""
    members = [sample for sample in samples if sample.label == label]
    if len(members) < count:
        raise ValidationError(f"class {label} has {len(members)} samples, need {count}")
    chosen = np.random.default_rng([seed, label]).choice(len(members), size=count, replace=False)
    return sorted((members[i] for i in chosen), key=lambda sample: sample.sample_id)
