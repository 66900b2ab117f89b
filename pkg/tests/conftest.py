"""Shared fixtures: tiny shapes keep the default suite fast."""

from dataclasses import replace

import numpy as np
import pytest

from src.autodiff import ModelConfig, SplitModel, one_hot
from src.config import ExperimentConfig
from src.data import DataConfig, PairedBatch, build_paired_dataset, scale_features
from src.training import MixupConfig, TrainSchedule
from src.transfer import TransferConfig

TINY_SHAPE = (1, 8, 8)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow benchmark checks"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def tiny_model_config():
    """Two conv blocks on 1x8x8 inputs, three classes."""
    return ModelConfig(
        input_shape=TINY_SHAPE, num_classes=3, conv_channels=(2, 3), head_units=0, seed=0
    )


@pytest.fixture
def tiny_model(tiny_model_config):
    return SplitModel.build(tiny_model_config)


@pytest.fixture
def frozen_source(tiny_model_config):
    return SplitModel.build(replace(tiny_model_config, seed=11)).freeze()


@pytest.fixture
def tiny_data_config():
    return DataConfig(
        num_classes=3,
        n_per_class=12,
        test_per_class=10,
        shape=TINY_SHAPE,
        devices=("b", "s6"),
        n_target_per_device=18,
    )


@pytest.fixture
def tiny_dataset(tiny_data_config):
    dataset, _ = scale_features(build_paired_dataset(tiny_data_config))
    return dataset


@pytest.fixture
def paired_batch():
    """Four random paired rows with labels 0, 1, 2, 0."""
    rng = np.random.default_rng(3)
    labels = np.array([0, 1, 2, 0])
    return PairedBatch(
        x_target=rng.random((4, *TINY_SHAPE)),
        labels=labels,
        soft_labels=one_hot(labels, 3),
        target_ids=np.array([100, 101, 102, 103]),
        x_source=rng.random((4, *TINY_SHAPE)),
        source_ids=np.array([0, 1, 2, 3]),
        device="b",
    )


@pytest.fixture
def tiny_experiment(tiny_data_config, tiny_model_config, tmp_path):
    """Two methods on two devices with two trials, one short epoch schedule."""
    return ExperimentConfig(
        data=tiny_data_config,
        model=tiny_model_config,
        transfer=TransferConfig(),
        pretrain=TrainSchedule(total_epochs=2, cycle_length_epochs=2, batch_size=8),
        schedule=TrainSchedule(total_epochs=1, cycle_length_epochs=1, batch_size=8),
        mixup=MixupConfig(enabled=False),
        methods=("tsl", "vbkt"),
        trials=2,
        output_dir=str(tmp_path / "run"),
        discrepancy_samples=5,
    )
