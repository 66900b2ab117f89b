"""Paired source/target corpora built from the synthetic generator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from ..errors import ConfigurationError, PairingError
from .devices import DEFAULT_DEVICES, DeviceProfile, apply_device, default_device_profiles
from .scenes import SceneSample, generate_scene_dataset

# Target ids are DEVICE_ID_STRIDE * (device index + 1) + source id
DEVICE_ID_STRIDE = 10_000_000
_SELECTION_STREAM = 2


@dataclass
class DataConfig:
    """Sizes and seeds of the synthetic benchmark."""

    num_classes: int = 10
    n_per_class: int = 1000
    test_per_class: int = 100
    shape: tuple[int, ...] = (1, 40, 64)
    devices: tuple[str, ...] = tuple(name for name, _, _ in DEFAULT_DEVICES)
    n_target_per_device: int = 750
    severity_scale: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        self.shape = tuple(int(v) for v in self.shape)
        self.devices = tuple(self.devices)
        known = {name for name, _, _ in DEFAULT_DEVICES}
        unknown = [name for name in self.devices if name not in known]
        if unknown:
            raise ConfigurationError(
                f"unknown devices {unknown}; known devices are {sorted(known)}"
            )
        if self.num_classes < 2:
            raise ConfigurationError(f"data.num_classes must be >= 2, got {self.num_classes}")
        if self.n_target_per_device > self.num_classes * self.n_per_class:
            raise ConfigurationError(
                f"data.n_target_per_device ({self.n_target_per_device}) exceeds the source "
                f"training split ({self.num_classes * self.n_per_class})"
            )
        if self.n_target_per_device < 2 or self.test_per_class < 1:
            raise ConfigurationError(
                "data needs >= 2 target samples per device and >= 1 test sample per class"
            )

    @classmethod
    def small(cls) -> "DataConfig":
        """CI preset: 3 classes, 200 source samples per class, two devices."""
        return cls(
            num_classes=3,
            n_per_class=200,
            test_per_class=50,
            devices=("b", "c"),
            n_target_per_device=150,
        )


@dataclass
class PairedDataset:
    """Source corpus, per-device target corpora and the pairing between them.

    ``pairing[device][target_id] == source_id``; each target sample has
    exactly one source partner with the same label. ``target_tests`` are the
    source test samples recorded through each device (unpaired at use).
    """

    source: list[SceneSample] = field(repr=False)
    source_test: list[SceneSample] = field(repr=False)
    targets: dict[str, list[SceneSample]] = field(repr=False)
    target_tests: dict[str, list[SceneSample]] = field(repr=False)
    pairing: dict[str, dict[int, int]] = field(repr=False)
    profiles: dict[str, DeviceProfile] = field(repr=False)
    num_classes: int
    shape: tuple[int, ...]

    @property
    def N_S(self) -> int:
        return len(self.source)

    def N_T(self, device: str) -> int:
        return len(self.targets_for(device))

    @property
    def devices(self) -> list[str]:
        return list(self.targets)

    @cached_property
    def _source_index(self) -> dict[int, SceneSample]:
        return {sample.sample_id: sample for sample in self.source}

    def targets_for(self, device: str) -> list[SceneSample]:
        if device not in self.targets:
            raise ConfigurationError(
                f"device '{device}' is not in the dataset (have {self.devices})"
            )
        return self.targets[device]

    def partner(self, device: str, target_id: int) -> SceneSample:
        """Source sample paired with ``target_id``.

        Raises:
            PairingError: If the target id has no partner for ``device``
        """
        source_id = self.pairing.get(device, {}).get(target_id)
        if source_id is None or source_id not in self._source_index:
            raise PairingError(
                f"target sample {target_id} has no source partner for device '{device}'"
            )
        return self._source_index[source_id]


def _select_for_device(
    source: list[SceneSample], count: int, num_classes: int, seed: int, device_index: int
) -> list[SceneSample]:
    """Class-stratified, seeded subset of the source training split."""
    rng = np.random.default_rng([seed, _SELECTION_STREAM, device_index])
    by_class: list[list[SceneSample]] = [[] for _ in range(num_classes)]
    for sample in source:
        by_class[sample.label].append(sample)
    share, extra = divmod(count, num_classes)
    quota = [share + (1 if k < extra else 0) for k in range(num_classes)]
    chosen: list[SceneSample] = []
    for k, members in enumerate(by_class):
        order = rng.permutation(len(members))[: quota[k]]
        chosen += [members[i] for i in sorted(order)]
    return sorted(chosen, key=lambda sample: sample.sample_id)


def build_paired_dataset(
    config: DataConfig, profiles: Optional[dict[str, DeviceProfile]] = None
) -> PairedDataset:
    """Generate the source corpus, record target corpora and pair them.

    A pure function of ``config`` (and ``profiles`` when given).
    """
    _, n_bands, _ = config.shape
    per_class = config.n_per_class + config.test_per_class
    corpus = generate_scene_dataset(
        config.num_classes, per_class, config.shape, config.seed, config.workers
    )
    cutoff = config.num_classes * config.n_per_class
    source, source_test = corpus[:cutoff], corpus[cutoff:]

    all_profiles = profiles or default_device_profiles(n_bands, config.seed, config.severity_scale)
    targets: dict[str, list[SceneSample]] = {}
    target_tests: dict[str, list[SceneSample]] = {}
    pairing: dict[str, dict[int, int]] = {}
    used_profiles: dict[str, DeviceProfile] = {}
    for device_index, device in enumerate(config.devices):
        if device not in all_profiles:
            raise ConfigurationError(f"no device profile named '{device}'")
        profile = all_profiles[device]
        used_profiles[device] = profile
        base = DEVICE_ID_STRIDE * (device_index + 1)
        chosen = _select_for_device(
            source, config.n_target_per_device, config.num_classes, config.seed, device_index
        )
        targets[device] = [apply_device(s, profile, base + s.sample_id) for s in chosen]
        pairing[device] = {base + s.sample_id: s.sample_id for s in chosen}
        target_tests[device] = [apply_device(s, profile, base + s.sample_id) for s in source_test]

    return PairedDataset(
        source=source,
        source_test=source_test,
        targets=targets,
        target_tests=target_tests,
        pairing=pairing,
        profiles=used_profiles,
        num_classes=config.num_classes,
        shape=config.shape,
    )
