"""Finite-difference gradient suite over the layers, the latent and every transfer objective."""

from __future__ import annotations

import logging
from dataclasses import replace
from functools import partial
from typing import Callable, Iterable

import numpy as np

from ..autodiff import (
    GradCheckReport,
    LayerSpec,
    ModelConfig,
    SplitModel,
    Tensor,
    grad_check,
    one_hot,
    softmax_cross_entropy,
)
from ..data.pairing import PairedBatch
from ..transfer.latent import NoiseDraw
from ..transfer.losses import TransferConfig, TransferMethod, transfer_loss

logger = logging.getLogger(__name__)

MICRO_MODEL = ModelConfig(
    input_shape=(1, 6, 6), num_classes=3, conv_channels=(2,), head_units=4, latent_depth=0
)
MICRO_BATCH = 4
DEFAULT_CASES = 100
LAYER_STACK_KEY = "layers"
LAYER_STACK_SHAPE = (1, 8, 8)


def layer_stack(seed: int) -> SplitModel:
    """Every layer kind in one model, average and max pooling included."""
    specs = [
        LayerSpec.conv2d(2),
        LayerSpec.batchnorm(),
        LayerSpec.relu(),
        LayerSpec.avgpool(2),
        LayerSpec.conv2d(2),
        LayerSpec.batchnorm(),
        LayerSpec.relu(),
        LayerSpec.maxpool(2),
        LayerSpec.flatten(),
        LayerSpec.dense(4),
        LayerSpec.batchnorm(),
        LayerSpec.relu(),
        LayerSpec.dense(MICRO_MODEL.num_classes),
    ]
    return SplitModel(specs, LAYER_STACK_SHAPE, seed=seed)


def micro_batch(
    seed: int, config: ModelConfig = MICRO_MODEL, size: int = MICRO_BATCH
) -> PairedBatch:
    """Random paired batch with distinct labels where possible."""
    rng = np.random.default_rng([seed, 7])
    shape = (size, *config.input_shape)
    labels = np.arange(size) % config.num_classes
    return PairedBatch(
        x_target=rng.random(shape),
        labels=labels,
        soft_labels=one_hot(labels, config.num_classes),
        target_ids=np.arange(size, dtype=np.int64),
        x_source=rng.random(shape),
        source_ids=np.arange(size, dtype=np.int64),
        device="micro",
    )


def micro_models(seed: int, config: ModelConfig = MICRO_MODEL) -> tuple[SplitModel, SplitModel]:
    """(student in train mode, frozen teacher) with different initializations."""
    student = SplitModel.build(replace(config, seed=seed))
    teacher = SplitModel.build(replace(config, seed=seed + 1000)).freeze()
    return student, teacher


def _classifier_loss(model: SplitModel, batch: PairedBatch) -> Callable[[], Tensor]:
    def plain() -> Tensor:
        return softmax_cross_entropy(model.forward(batch.x_target).logits, batch.soft_labels).loss

    return plain


def _layer_case(seed: int) -> tuple[SplitModel, Callable[[], Tensor]]:
    model = layer_stack(seed)
    batch = micro_batch(seed, replace(MICRO_MODEL, input_shape=LAYER_STACK_SHAPE))
    return model, _classifier_loss(model, batch)


def _case(
    method: TransferMethod, seed: int, combine: bool
) -> tuple[SplitModel, Callable[[], Tensor]]:
    student, teacher = micro_models(seed)
    batch = micro_batch(seed)
    cfg = TransferConfig(method=method, combine_with_tsl=combine)
    if method is TransferMethod.NONE and not combine:
        return student, _classifier_loss(student, batch)
    noise = NoiseDraw.draw(
        (batch.size, *student.latent_site.shape), base_seed=seed, sample_ids=batch.target_ids
    )

    def objective() -> Tensor:
        return transfer_loss(student, teacher, batch, cfg, noise=noise).objective

    return student, objective


def gradient_suite(
    seeds: Iterable[int] = range(DEFAULT_CASES),
    tolerance: float = 1e-4,
    max_entries: int | None = 12,
    step: float = 1e-6,
) -> dict[str, GradCheckReport]:
    """Run ``grad_check`` for the layer stack, the plain classifier and each transfer objective.

    Keys look like ``vbkt/seed1``, ``at+tsl/seed0`` or ``layers/seed2``. The
    latent noise is pinned per case so the objective is deterministic. The
    small default ``step`` keeps perturbations clear of ReLU kinks.
    """
    cases = [(TransferMethod.NONE, False)]
    cases += [
        (method, False)
        for method in TransferMethod
        if method.uses_hidden or method is TransferMethod.VBKT
    ]
    cases += [(TransferMethod.TSL, False), (TransferMethod.VBKT, True), (TransferMethod.AT, True)]

    reports: dict[str, GradCheckReport] = {}
    for seed in seeds:
        builders: list[tuple[str, Callable[[], tuple[SplitModel, Callable[[], Tensor]]]]] = [
            (LAYER_STACK_KEY, partial(_layer_case, seed))
        ]
        for method, combine in cases:
            key = TransferConfig(method=method, combine_with_tsl=combine).key
            builders.append((key, partial(_case, method, seed, combine)))
        for key, build in builders:
            model, loss_fn = build()
            report = grad_check(
                model, loss_fn, tolerance=tolerance, step=step, max_entries=max_entries, seed=seed
            )
            reports[f"{key}/seed{seed}"] = report
            logger.debug("%s seed %d: %s", key, seed, report.summary())
    return reports
