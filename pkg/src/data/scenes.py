"""Synthetic acoustic-scene patches.

Each class owns a seeded band-energy template and a temporal modulation
rate; each sample modulates its class template over time, jitters the gain
and adds noise. Features land in [0, 1] like min-max scaled log-mel patches.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError

SOURCE_DEVICE = "a"

# Seed-stream tags so class, sample and device draws never share a stream
_CLASS_STREAM = 0
_SAMPLE_STREAM = 1


@dataclass
class SceneSample:
    """One surrogate log-mel patch.

    ``features`` is C x H x W (channels x bands x frames).
    """

    features: np.ndarray = field(repr=False)
    label: int
    sample_id: int
    device_id: str = SOURCE_DEVICE

    def with_features(
        self, features: np.ndarray, device_id: str | None = None, sample_id: int | None = None
    ) -> "SceneSample":
        return replace(
            self,
            features=features,
            device_id=self.device_id if device_id is None else device_id,
            sample_id=self.sample_id if sample_id is None else sample_id,
        )


@dataclass(frozen=True)
class ClassTemplate:
    """Band-energy profile and modulation rate shared by one class."""

    label: int
    band_energy: np.ndarray = field(repr=False)
    modulation_rate: float
    modulation_depth: float


def class_template(label: int, n_bands: int, seed: int) -> ClassTemplate:
    rng = np.random.default_rng([seed, _CLASS_STREAM, label])
    bands = np.arange(n_bands)
    energy = np.full(n_bands, 0.12)
    for _ in range(3):
        centre = rng.uniform(0, n_bands - 1)
        width = rng.uniform(1.5, max(2.0, n_bands / 10))
        energy += rng.uniform(0.3, 0.6) * np.exp(-((bands - centre) ** 2) / (2 * width**2))
    return ClassTemplate(
        label=label,
        band_energy=energy,
        modulation_rate=float(rng.uniform(0.5, 4.0)),
        modulation_depth=float(rng.uniform(0.2, 0.45)),
    )


def render_sample(
    template: ClassTemplate, shape: tuple[int, int, int], sample_id: int, seed: int
) -> SceneSample:
    """Draw one sample of ``template``; a pure function of ``(seed, sample_id)``."""
    channels, n_bands, n_frames = shape
    rng = np.random.default_rng([seed, _SAMPLE_STREAM, sample_id])
    frames = np.arange(n_frames) / n_frames
    rate = template.modulation_rate * rng.uniform(0.9, 1.1)
    phase = rng.uniform(0, 2 * np.pi)
    modulation = 1.0 - template.modulation_depth + template.modulation_depth * np.sin(
        2 * np.pi * rate * frames + phase
    )
    shift = int(rng.integers(-1, 2))
    energy = np.roll(template.band_energy, shift) * rng.uniform(0.85, 1.15)
    clean = energy[:, None] * modulation[None, :]
    noise = rng.normal(0.0, 0.05, size=(channels, n_bands, n_frames))
    features = np.clip(clean[None, :, :] + noise, 0.0, 1.0)
    return SceneSample(features=features, label=template.label, sample_id=sample_id)


def generate_scene_dataset(
    num_classes: int,
    n_per_class: int,
    shape: Sequence[int] = (1, 40, 64),
    seed: int = 0,
    workers: int = 1,
) -> list[SceneSample]:
    """Generate ``num_classes * n_per_class`` device-A samples.

    Sample ``i`` has ``sample_id = i`` and ``label = i % num_classes``. The
    output does not depend on ``workers``.

    Raises:
        ConfigurationError: If fewer than two classes or a bad shape is requested
    """
    if num_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {num_classes}")
    if n_per_class < 1:
        raise ConfigurationError(f"n_per_class must be >= 1, got {n_per_class}")
    shape = tuple(int(v) for v in shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ConfigurationError(f"feature shape must be C x H x W, got {shape}")

    templates = [class_template(k, shape[1], seed) for k in range(num_classes)]
    ids = range(num_classes * n_per_class)

    def render(sample_id: int) -> SceneSample:
        return render_sample(templates[sample_id % num_classes], shape, sample_id, seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(render, ids))
    return [render(i) for i in ids]


def stack_features(samples: Sequence[SceneSample]) -> np.ndarray:
    return np.stack([sample.features for sample in samples])


def labels_of(samples: Sequence[SceneSample]) -> np.ndarray:
    return np.array([sample.label for sample in samples], dtype=np.int64)
