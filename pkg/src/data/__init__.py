"""Synthetic paired-device scene data."""

from .dataset import DEVICE_ID_STRIDE, DataConfig, PairedDataset, build_paired_dataset
from .devices import (
    DEFAULT_DEVICES,
    PROFILE_VERSION,
    DeviceProfile,
    apply_device,
    default_device_profiles,
    make_device_profile,
)
from .pairing import PairedBatch, batches_from_samples, pair_batches
from .scaling import FeatureScaler, scale_features
from .scenes import SOURCE_DEVICE, SceneSample, generate_scene_dataset, labels_of, stack_features
from .storage import load_dataset, save_dataset

__all__ = [
    "DEFAULT_DEVICES",
    "DEVICE_ID_STRIDE",
    "DataConfig",
    "DeviceProfile",
    "FeatureScaler",
    "PROFILE_VERSION",
    "PairedBatch",
    "PairedDataset",
    "SOURCE_DEVICE",
    "SceneSample",
    "apply_device",
    "batches_from_samples",
    "build_paired_dataset",
    "default_device_profiles",
    "generate_scene_dataset",
    "labels_of",
    "load_dataset",
    "make_device_profile",
    "pair_batches",
    "save_dataset",
    "scale_features",
    "stack_features",
]
