"""Recording-device channel simulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigurationError
from .scenes import SceneSample

PROFILE_VERSION = 1

# (name, severity, tilt direction); severity rises monotonically down the list
DEFAULT_DEVICES: tuple[tuple[str, float, int], ...] = (
    ("b", 0.60, 1),
    ("c", 0.65, -1),
    ("s1", 0.70, 1),
    ("s2", 0.75, -1),
    ("s3", 0.80, 1),
    ("s4", 0.85, -1),
    ("s5", 0.90, 1),
    ("s6", 0.95, -1),
)


@dataclass
class DeviceProfile:
    """Per-band gain, additive noise and compression of one device.

    The identity profile is gain 1, noise 0, exponent 1.
    """

    name: str
    band_gain: np.ndarray = field(repr=False)
    noise_std: float = 0.0
    nonlinearity: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        self.band_gain = np.asarray(self.band_gain, dtype=np.float64)
        if self.band_gain.ndim != 1 or np.any(self.band_gain <= 0):
            raise ConfigurationError(f"device '{self.name}' band_gain must be a positive 1-D curve")
        if self.noise_std < 0:
            raise ConfigurationError(f"device '{self.name}' noise_std must be >= 0")
        if self.nonlinearity <= 0:
            raise ConfigurationError(f"device '{self.name}' nonlinearity must be > 0")

    @classmethod
    def identity(cls, n_bands: int, name: str = "identity") -> "DeviceProfile":
        return cls(name=name, band_gain=np.ones(n_bands))

    @property
    def is_identity(self) -> bool:
        flat = bool(np.all(self.band_gain == 1.0))
        return flat and self.noise_std == 0 and self.nonlinearity == 1.0


def make_device_profile(
    name: str, severity: float, n_bands: int, seed: int, direction: int = 1
) -> DeviceProfile:
    """Build a mismatch profile whose distortions all grow with ``severity``."""
    if not 0 <= severity <= 1:
        raise ConfigurationError(f"device severity must be in [0, 1], got {severity}")
    rng = np.random.default_rng([seed, PROFILE_VERSION, sum(name.encode())])
    position = np.linspace(-1.0, 1.0, n_bands)
    frequency, phase = rng.uniform(1.0, 2.5), rng.uniform(0, 2 * np.pi)
    ripple = np.sin(2 * np.pi * frequency * (position + 1) / 2 + phase)
    log_gain = severity * (1.4 * direction * position + 0.5 * ripple)
    return DeviceProfile(
        name=name,
        band_gain=np.exp(log_gain),
        noise_std=0.02 + 0.06 * severity,
        nonlinearity=1.0 - 0.5 * severity,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def default_device_profiles(
    n_bands: int, seed: int = 0, severity_scale: float = 1.0
) -> dict[str, DeviceProfile]:
    """The eight shipped target devices, keyed by name."""
    return {
        name: make_device_profile(
            name, min(1.0, severity * severity_scale), n_bands, seed, direction
        )
        for name, severity, direction in DEFAULT_DEVICES
    }


def apply_device(
    sample: SceneSample, profile: DeviceProfile, sample_id: Optional[int] = None
) -> SceneSample:
    """Record ``sample`` through ``profile``.

    ``features' = clip((gain * features) ** nonlinearity + noise, 0, 1)``
    with the gain applied along the band axis. Noise is seeded by the
    profile seed and the source sample id. Label is preserved; the device id
    is set to the profile name.
    """
    features = sample.features
    if profile.band_gain.shape[0] != features.shape[-2]:
        raise ConfigurationError(
            f"device '{profile.name}' has {profile.band_gain.shape[0]} band gains for "
            f"{features.shape[-2]} bands"
        )
    recorded = (profile.band_gain[:, None] * features) ** profile.nonlinearity
    if profile.noise_std > 0:
        rng = np.random.default_rng([profile.seed, sample.sample_id])
        recorded = recorded + rng.normal(0.0, profile.noise_std, size=features.shape)
    return sample.with_features(
        np.clip(recorded, 0.0, 1.0),
        device_id=profile.name,
        sample_id=sample.sample_id if sample_id is None else sample_id,
    )
