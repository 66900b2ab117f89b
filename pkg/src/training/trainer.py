"""Source pretraining and target transfer training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..autodiff import SplitModel
from ..data.dataset import PairedDataset
from ..data.pairing import PairedBatch, batches_from_samples, pair_batches
from ..data.scenes import SceneSample
from ..errors import TrainingError, UsageError
from ..evaluation.metrics import evaluate_accuracy
from ..transfer.latent import NoiseDraw
from ..transfer.losses import (
    LossBreakdown,
    SourceOutputCache,
    TransferConfig,
    TransferMethod,
    transfer_loss,
)
from .mixup import MixupConfig, draw_mixup, mixup_batch
from .optim import SGD
from .schedule import TrainSchedule, cosine_restart_lr

logger = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "epoch", "lr", "likelihood", "kl_latent", "tsl_term", "aux_term", "total"]

# A step whose total exceeds this multiple of the first-step total aborts the run
DIVERGENCE_FACTOR = 1e3

# Seed-stream tags for batch order and mixup draws
_PRETRAIN_STREAM = 10
_TRANSFER_STREAM = 11
_MIXUP_STREAM = 12

LossFn = Callable[[PairedBatch, int, int], LossBreakdown]


class TrainingLog:
    """Per-step loss components, appended to a CSV file after every epoch."""

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path is not None else None
        self.rows: list[dict[str, float]] = []
        self._flushed = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def record(self, step: int, epoch: int, lr: float, breakdown: LossBreakdown) -> None:
        self.rows.append({"step": step, "epoch": epoch, "lr": lr, **breakdown.as_row()})

    def flush(self) -> None:
        pending = self.rows[self._flushed :]
        if self.path is None or not pending:
            return
        frame = pd.DataFrame(pending, columns=LOG_COLUMNS)
        frame.to_csv(self.path, mode="a", header=not self.path.exists(), index=False)
        self._flushed = len(self.rows)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LOG_COLUMNS)


@dataclass
class TrainingResult:
    """Trained model, per-step loss history and summary metrics."""

    model: SplitModel
    history: list[LossBreakdown] = field(repr=False)
    log: TrainingLog = field(repr=False)
    metrics: dict[str, float] = field(default_factory=dict)

    def epoch_means(self) -> pd.DataFrame:
        return self.log.frame.drop(columns=["step"]).groupby("epoch").mean()


def steps_per_epoch(n_samples: int, batch_size: int) -> int:
    """Optimizer steps in one epoch; a trailing singleton batch is skipped."""
    full, remainder = divmod(n_samples, batch_size)
    return full + (1 if remainder >= 2 else 0)


def _fit(
    model: SplitModel,
    batches: Callable[[int], Iterable[PairedBatch]],
    loss_fn: LossFn,
    n_samples: int,
    schedule: TrainSchedule,
    mixup: MixupConfig,
    log: TrainingLog,
    desc: str,
    progress: bool,
) -> list[LossBreakdown]:
    per_epoch = steps_per_epoch(n_samples, schedule.batch_size)
    optimizer = SGD(model.parameters(), schedule.momentum, schedule.weight_decay)
    history: list[LossBreakdown] = []
    reference: Optional[float] = None
    step = 0
    model.train()
    for epoch in tqdm(range(schedule.total_epochs), desc=desc, disable=not progress, leave=False):
        epoch_start = len(history)
        for index, batch in enumerate(batches(epoch)):
            if batch.size < 2:
                logger.warning(
                    "skipping singleton batch %d in epoch %d (batchnorm needs B >= 2)", index, epoch
                )
                continue
            if mixup.enabled:
                rng = np.random.default_rng([schedule.seed, _MIXUP_STREAM, epoch, index])
                lam, perm = draw_mixup(rng, batch.size, mixup.alpha)
                batch = mixup_batch(batch, lam, perm)

            lr = cosine_restart_lr(step, schedule, per_epoch)
            optimizer.zero_grad()
            breakdown = loss_fn(batch, epoch, index)
            bad = breakdown.non_finite()
            if bad:
                raise TrainingError(
                    f"training diverged at step {step} (epoch {epoch}): non-finite {', '.join(bad)}"
                )
            if reference is None:
                reference = max(abs(breakdown.total), 1.0)
            elif breakdown.total > DIVERGENCE_FACTOR * reference:
                raise TrainingError(
                    f"training diverged at step {step} (epoch {epoch}): "
                    f"total {breakdown.total:.4g} exceeds {DIVERGENCE_FACTOR:g}x "
                    f"the first-step loss {reference:.4g}"
                )
            breakdown.backward()
            grad_norm = optimizer.clip(schedule.clip_norm)
            optimizer.step(lr)

            log.record(step, epoch, lr, breakdown)
            history.append(replace(breakdown, objective=None, components={}))
            logger.debug(
                "step %d lr=%.6g likelihood=%.6f kl=%.6f aux=%.6f total=%.6f grad_norm=%.4g",
                step,
                lr,
                breakdown.likelihood,
                breakdown.kl_latent,
                breakdown.aux_term,
                breakdown.total,
                grad_norm,
            )
            step += 1
        log.flush()
        epoch_losses = [b.total for b in history[epoch_start:]]
        if epoch_losses:
            logger.info(
                "%s epoch %d/%d: mean loss %.4f over %d steps",
                desc,
                epoch + 1,
                schedule.total_epochs,
                float(np.mean(epoch_losses)),
                len(epoch_losses),
            )
    model.eval()
    return history


def pretrain_source(
    model: SplitModel,
    source: Sequence[SceneSample],
    schedule: TrainSchedule,
    mixup: Optional[MixupConfig] = None,
    test_samples: Optional[Sequence[SceneSample]] = None,
    log_path: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> TrainingResult:
    """Train ``model`` on device-A data with cross-entropy, then freeze it.

    Raises:
        TrainingError: If the loss becomes NaN/Inf or blows up, naming the step
    """
    if not source:
        raise UsageError("source pretraining needs at least one sample")
    num_classes = model.num_classes
    plain = TransferConfig(method=TransferMethod.NONE)
    log = TrainingLog(log_path)

    def batches(epoch: int) -> Iterable[PairedBatch]:
        seed = [schedule.seed, _PRETRAIN_STREAM, epoch]
        return batches_from_samples(source, schedule.batch_size, seed, num_classes)

    def loss_fn(batch: PairedBatch, epoch: int, index: int) -> LossBreakdown:
        return transfer_loss(model, None, batch, plain)

    history = _fit(
        model,
        batches,
        loss_fn,
        len(source),
        schedule,
        mixup or MixupConfig(),
        log,
        "pretrain",
        progress,
    )
    model.freeze()
    metrics = {"final_loss": history[-1].total if history else float("nan")}
    if test_samples:
        metrics["source_test_accuracy"] = evaluate_accuracy(model, test_samples)
        logger.info("source model test accuracy %.4f", metrics["source_test_accuracy"])
    return TrainingResult(model=model, history=history, log=log, metrics=metrics)


def initial_target(
    source_model: SplitModel,
    cfg: TransferConfig,
    seed: int = 0,
    latent_depth: Optional[int] = None,
) -> SplitModel:
    """Starting point of the target model.

    A trainable copy of the source checkpoint when ``cfg.starts_from_source``,
    else a freshly initialized model with the same architecture.
    """
    if cfg.starts_from_source:
        return source_model.clone(latent_depth)
    depth = source_model.latent_site.depth if latent_depth is None else latent_depth
    return SplitModel(source_model.specs, source_model.input_shape, depth, seed)


def train_transfer(
    target_model: SplitModel,
    source_model: Optional[SplitModel],
    data: PairedDataset,
    device: str,
    cfg: TransferConfig,
    schedule: TrainSchedule,
    mixup: Optional[MixupConfig] = None,
    log_path: Optional[Union[str, Path]] = None,
    progress: bool = False,
) -> TrainingResult:
    """Train the target model on ``device``'s paired split with ``cfg.method``.

    The source model is only read; its parameters are left untouched.

    Raises:
        UsageError: If the method needs a frozen source model and none is given
        TrainingError: If the loss becomes NaN/Inf or blows up, naming the step
    """
    if cfg.needs_source and (source_model is None or not source_model.frozen):
        raise UsageError(f"method '{cfg.method.value}' needs a frozen source model")
    if target_model is source_model:
        raise UsageError("target model must be a separate copy of the source model")

    cache = SourceOutputCache() if cfg.cache_source else None
    log = TrainingLog(log_path)
    latent_shape = target_model.latent_site.shape

    def batches(epoch: int) -> Iterable[PairedBatch]:
        seed = [schedule.seed, _TRANSFER_STREAM, epoch]
        return pair_batches(data, device, schedule.batch_size, seed)

    def loss_fn(batch: PairedBatch, epoch: int, index: int) -> LossBreakdown:
        noise = None
        if cfg.method is TransferMethod.VBKT:
            noise = NoiseDraw.draw(
                (batch.size,) + latent_shape, schedule.seed, epoch, index, batch.target_ids
            )
        return transfer_loss(target_model, source_model, batch, cfg, noise, cache)

    desc = f"{cfg.method.value}/{device}"
    history = _fit(
        target_model,
        batches,
        loss_fn,
        data.N_T(device),
        schedule,
        mixup or MixupConfig(),
        log,
        desc,
        progress,
    )
    metrics = {"final_loss": history[-1].total if history else float("nan")}
    if cache is not None:
        metrics["cache_hits"] = float(cache.hits)
    return TrainingResult(model=target_model, history=history, log=log, metrics=metrics)
