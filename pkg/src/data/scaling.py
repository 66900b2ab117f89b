"""Min-max feature scaling fitted on the source training split."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError
from .dataset import PairedDataset
from .scenes import SceneSample


@dataclass(frozen=True)
class FeatureScaler:
    """Global min-max map to [0, 1]."""

    minimum: float
    maximum: float

    @classmethod
    def fit(cls, samples: Sequence[SceneSample]) -> "FeatureScaler":
        """Fit on ``samples``.

        Raises:
            ConfigurationError: If the samples are empty or constant
        """
        if not samples:
            raise ConfigurationError("cannot fit a scaler on an empty split")
        low = min(float(sample.features.min()) for sample in samples)
        high = max(float(sample.features.max()) for sample in samples)
        if not high > low:
            raise ConfigurationError(f"degenerate feature range: min == max == {low}")
        return cls(low, high)

    @property
    def span(self) -> float:
        return self.maximum - self.minimum

    def transform(self, features: np.ndarray) -> np.ndarray:
        return np.clip((features - self.minimum) / self.span, 0.0, 1.0)

    def inverse(self, scaled: np.ndarray) -> np.ndarray:
        return scaled * self.span + self.minimum


def _rescale(samples: Sequence[SceneSample], scaler: FeatureScaler) -> list[SceneSample]:
    return [replace(sample, features=scaler.transform(sample.features)) for sample in samples]


def scale_features(dataset: PairedDataset) -> tuple[PairedDataset, FeatureScaler]:
    """Scale every split with constants computed on the source training split only."""
    scaler = FeatureScaler.fit(dataset.source)
    scaled = PairedDataset(
        source=_rescale(dataset.source, scaler),
        source_test=_rescale(dataset.source_test, scaler),
        targets={device: _rescale(rows, scaler) for device, rows in dataset.targets.items()},
        target_tests={
            device: _rescale(rows, scaler) for device, rows in dataset.target_tests.items()
        },
        pairing=dataset.pairing,
        profiles=dataset.profiles,
        num_classes=dataset.num_classes,
        shape=dataset.shape,
    )
    return scaled, scaler
