"""Transfer objectives: VBKT, the distillation baselines and the TSL combination.

Every method yields a ``LossBreakdown`` whose ``total`` is
``likelihood + kl_latent + aux_weight * aux_term``. ``likelihood`` is the
hard/soft-label cross-entropy, or ``tsl_weight * tsl + ce_weight * ce`` when
the method is combined with teacher-student learning.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from ..autodiff import SplitModel, Tensor, log_softmax, no_grad, softmax_cross_entropy
from ..autodiff.functional import log_softmax_array
from ..data.pairing import PairedBatch
from ..errors import BatchSizeError, ConfigurationError, DimensionError, UsageError
from .latent import (
    DEFAULT_SIGMA,
    MAX_NOISE_STD,
    LatentGaussian,
    NoiseDraw,
    latent_kl,
    sample_latent,
)

logger = logging.getLogger(__name__)

ArrayOrTensor = Union[Tensor, np.ndarray]


class TransferMethod(str, Enum):
    """Training objective for the target model."""

    NONE = "none"
    ONEHOT_FINETUNE = "onehot_finetune"
    TSL = "tsl"
    FITNET = "fitnet"
    AT = "at"
    SP = "sp"
    VBKT = "vbkt"

    @property
    def label(self) -> str:
        """Row name used in result tables."""
        return _LABELS[self]

    @property
    def uses_hidden(self) -> bool:
        return self in (
            TransferMethod.FITNET, TransferMethod.AT, TransferMethod.SP, TransferMethod.VBKT
        )

    @classmethod
    def parse(cls, value: Union[str, "TransferMethod"]) -> "TransferMethod":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(m.value for m in cls)
            raise ConfigurationError(
                f"unknown transfer method '{value}' (expected one of {names})"
            ) from None


_LABELS = {
    TransferMethod.NONE: "No transfer",
    TransferMethod.ONEHOT_FINETUNE: "One-hot",
    TransferMethod.TSL: "TSL",
    TransferMethod.FITNET: "Fitnet",
    TransferMethod.AT: "AT",
    TransferMethod.SP: "SP",
    TransferMethod.VBKT: "VBKT",
}

TEACHER_INPUTS = ("source", "target")


@dataclass
class TransferConfig:
    """Hyperparameters of one transfer objective.

    ``teacher_input`` selects which half of a paired batch the frozen source
    model sees. ``max_noise_std`` caps the std of the latent draws; the KL
    weight still follows ``sigma``. ``init_from_source`` starts the target
    model from the source checkpoint (``none`` always trains from scratch,
    ``onehot_finetune`` always starts from the checkpoint).
    """

    method: TransferMethod = TransferMethod.VBKT
    sigma: float = DEFAULT_SIGMA
    max_noise_std: float = MAX_NOISE_STD
    temperature: float = 1.0
    combine_with_tsl: bool = False
    tsl_weight: float = 0.9
    ce_weight: float = 0.1
    aux_weight: float = 1.0
    teacher_input: str = "source"
    init_from_source: bool = True
    cache_source: bool = False

    def __post_init__(self) -> None:
        self.method = TransferMethod.parse(self.method)
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError(f"transfer.sigma must be finite and > 0, got {self.sigma}")
        if not (np.isfinite(self.max_noise_std) and self.max_noise_std > 0):
            raise ConfigurationError(
                f"transfer.max_noise_std must be finite and > 0, got {self.max_noise_std}"
            )
        if not self.temperature > 0:
            raise ConfigurationError(f"transfer.temperature must be > 0, got {self.temperature}")
        if self.tsl_weight < 0 or self.ce_weight < 0:
            raise ConfigurationError("transfer.tsl_weight and transfer.ce_weight must be >= 0")
        if self.uses_tsl and abs(self.tsl_weight + self.ce_weight - 1.0) > 1e-12:
            raise ConfigurationError(
                f"transfer.tsl_weight + transfer.ce_weight must equal 1, got "
                f"{self.tsl_weight} + {self.ce_weight}"
            )
        if self.aux_weight < 0:
            raise ConfigurationError(f"transfer.aux_weight must be >= 0, got {self.aux_weight}")
        if self.teacher_input not in TEACHER_INPUTS:
            raise ConfigurationError(
                f"transfer.teacher_input must be one of {TEACHER_INPUTS}, "
                f"got '{self.teacher_input}'"
            )

    @property
    def uses_tsl(self) -> bool:
        return self.method is TransferMethod.TSL or self.combine_with_tsl

    @property
    def needs_source(self) -> bool:
        return self.uses_tsl or self.method.uses_hidden

    @property
    def starts_from_source(self) -> bool:
        if self.method is TransferMethod.NONE:
            return False
        if self.method is TransferMethod.ONEHOT_FINETUNE:
            return True
        return self.init_from_source

    @property
    def label(self) -> str:
        if self.combine_with_tsl and self.method is not TransferMethod.TSL:
            return f"{self.method.label} w/ TSL"
        return self.method.label

    @property
    def key(self) -> str:
        """Short name used in result files, e.g. ``vbkt`` or ``at+tsl``."""
        if self.combine_with_tsl and self.method is not TransferMethod.TSL:
            return f"{self.method.value}+tsl"
        return self.method.value

    def variant(self, key: str) -> "TransferConfig":
        """Copy of this config running the method named by ``key``."""
        method, _, suffix = key.strip().partition("+")
        if suffix not in ("", "tsl"):
            raise ConfigurationError(
                f"unknown method suffix '+{suffix}' in '{key}' (only '+tsl' is supported)"
            )
        return replace(self, method=TransferMethod.parse(method), combine_with_tsl=suffix == "tsl")


@dataclass
class LossBreakdown:
    """Scalar components of one step's objective plus the tensors behind them."""

    likelihood: float
    kl_latent: float
    tsl_term: float
    aux_term: float
    total: float
    ce_term: float
    aux_weight: float = 1.0
    method: str = TransferMethod.NONE.value
    objective: Optional[Tensor] = field(default=None, repr=False, compare=False)
    components: dict[str, Tensor] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def assemble(
        cls,
        method: Union[str, TransferMethod],
        ce: Tensor,
        kl: Optional[Tensor] = None,
        aux: Optional[Tensor] = None,
        tsl: Optional[Tensor] = None,
        tsl_weight: float = 0.9,
        ce_weight: float = 0.1,
        aux_weight: float = 1.0,
    ) -> "LossBreakdown":
        """Combine component tensors into the objective."""
        likelihood = ce if tsl is None else tsl * tsl_weight + ce * ce_weight
        objective = likelihood
        if kl is not None:
            objective = objective + kl
        if aux is not None:
            objective = objective + aux * aux_weight
        components = {"ce": ce}
        for name, term in (("kl", kl), ("aux", aux), ("tsl", tsl)):
            if term is not None:
                components[name] = term
        return cls(
            likelihood=likelihood.item(),
            kl_latent=kl.item() if kl is not None else 0.0,
            tsl_term=tsl.item() if tsl is not None else 0.0,
            aux_term=aux.item() if aux is not None else 0.0,
            total=objective.item(),
            ce_term=ce.item(),
            aux_weight=aux_weight,
            method=TransferMethod.parse(method).value,
            objective=objective,
            components=components,
        )

    def non_finite(self) -> list[str]:
        """Names of components that are NaN or infinite."""
        return [name for name, value in self.as_row().items() if not np.isfinite(value)]

    def as_row(self) -> dict[str, float]:
        return {
            "likelihood": self.likelihood,
            "kl_latent": self.kl_latent,
            "tsl_term": self.tsl_term,
            "aux_term": self.aux_term,
            "total": self.total,
        }

    def backward(self) -> None:
        if self.objective is None:
            raise UsageError("loss breakdown carries no objective tensor")
        self.objective.backward()


# ----------------------------------------------------------------------
# Component losses
# ----------------------------------------------------------------------


def _teacher_array(value: ArrayOrTensor) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)


def _require_same_shape(name: str, student: Tensor, teacher: np.ndarray) -> None:
    if student.shape != teacher.shape:
        raise DimensionError(
            f"{name}: student shape {student.shape} differs from teacher shape {teacher.shape}"
        )


def tsl_loss(
    student_logits: Tensor, teacher_logits: ArrayOrTensor, temperature: float = 1.0
) -> Tensor:
    """``T^2 (1/B) sum_b KL(softmax(teacher/T) || softmax(student/T))``.

    Raises:
        ConfigurationError: If ``temperature <= 0``
        DimensionError: If the logit shapes differ
    """
    if not temperature > 0:
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    teacher = _teacher_array(teacher_logits)
    _require_same_shape("tsl_loss", student_logits, teacher)
    scale = 1.0 / temperature
    teacher_log_probs = log_softmax_array(teacher * scale)
    teacher_probs = np.exp(teacher_log_probs)
    entropy_term = float((teacher_log_probs * teacher_probs).sum())
    student_log_probs = log_softmax(student_logits * scale)
    cross = (student_log_probs * teacher_probs).sum()
    batch = student_logits.shape[0]
    return (Tensor(entropy_term) - cross) * (temperature**2 / batch)


def fitnet_loss(student_hidden: Tensor, teacher_hidden: ArrayOrTensor) -> Tensor:
    """Batch-mean squared L2 distance between hidden embeddings."""
    teacher = _teacher_array(teacher_hidden)
    _require_same_shape("fitnet_loss", student_hidden, teacher)
    diff = student_hidden - Tensor(teacher)
    return (diff * diff).sum() * (1.0 / student_hidden.shape[0])


def _attention_rows(fmap: Tensor) -> Tensor:
    """Per-example attention map ``sum_c fmap[c]^2``, flattened.

    A two-axis input is treated as a single-channel map.
    """
    squared = fmap * fmap
    if fmap.ndim >= 3:
        squared = squared.sum(axis=1)
    return squared.reshape(fmap.shape[0], -1)


def _normalize_rows(rows: Tensor, degenerate: np.ndarray) -> Tensor:
    """Divide each row by its L2 norm; degenerate rows get unit denominators."""
    floor = Tensor(degenerate.astype(np.float64)[:, None])
    squared_norm = (rows * rows).sum(axis=1, keepdims=True) + floor
    return rows / squared_norm.sqrt()


def at_loss(student_fmap: Tensor, teacher_fmap: ArrayOrTensor) -> Tensor:
    """Batch-mean squared distance between L2-normalized attention maps.

    Examples whose student or teacher map is all zero contribute zero and
    are reported with a warning.
    """
    teacher = Tensor(_teacher_array(teacher_fmap))
    _require_same_shape("at_loss", student_fmap, teacher.data)
    batch = student_fmap.shape[0]
    student_rows = _attention_rows(student_fmap)
    teacher_rows = _attention_rows(teacher)
    degenerate = ~(student_rows.data.any(axis=1) & teacher_rows.data.any(axis=1))
    if degenerate.any():
        logger.warning(
            "attention map is all zero for %d of %d examples; they contribute no AT loss",
            int(degenerate.sum()),
            batch,
        )
    target_rows = _normalize_rows(teacher_rows, degenerate).detach()
    diff = _normalize_rows(student_rows, degenerate) - target_rows
    per_example = (diff * diff).sum(axis=1)
    keep = Tensor((~degenerate).astype(np.float64))
    return (per_example * keep).sum() * (1.0 / batch)


def sp_loss(student_hidden: Tensor, teacher_hidden: ArrayOrTensor) -> Tensor:
    """Similarity-preserving loss ``(1/B^2) ||G_s - G_t||_F^2``.

    ``G = H H^T`` with each row L2-normalized; hiddens are flattened per example.

    Raises:
        BatchSizeError: If the batch has fewer than two examples
    """
    teacher = _teacher_array(teacher_hidden)
    _require_same_shape("sp_loss", student_hidden, teacher)
    batch = student_hidden.shape[0]
    if batch < 2:
        raise BatchSizeError(f"sp_loss needs B >= 2, got B={batch}")

    def gram(hidden: Tensor) -> Tensor:
        flat = hidden.reshape(batch, -1)
        g = flat @ flat.T
        return _normalize_rows(g, ~g.data.any(axis=1))

    diff = gram(student_hidden) - gram(Tensor(teacher)).detach()
    return (diff * diff).sum() * (1.0 / batch**2)


# ----------------------------------------------------------------------
# Source-model outputs
# ----------------------------------------------------------------------


@dataclass
class TeacherOutputs:
    """Frozen source model's latent means and logits for one batch."""

    mean: np.ndarray = field(repr=False)
    logits: np.ndarray = field(repr=False)


class SourceOutputCache:
    """Source-model outputs keyed by source sample id.

    Only valid while the source model is frozen; mixed batches bypass it.
    """

    def __init__(self) -> None:
        self._store: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)

    def lookup(
        self, source_model: SplitModel, features: np.ndarray, sample_ids: np.ndarray
    ) -> TeacherOutputs:
        missing = [i for i, sample_id in enumerate(sample_ids) if int(sample_id) not in self._store]
        self.misses += len(missing)
        self.hits += len(sample_ids) - len(missing)
        if missing:
            fresh = _run_teacher(source_model, features[missing])
            for row, index in enumerate(missing):
                self._store[int(sample_ids[index])] = (fresh.mean[row], fresh.logits[row])
        means, logits = zip(*(self._store[int(sample_id)] for sample_id in sample_ids))
        return TeacherOutputs(mean=np.stack(means), logits=np.stack(logits))


def _run_teacher(source_model: SplitModel, features: np.ndarray) -> TeacherOutputs:
    with no_grad():
        output = source_model.forward(features)
    return TeacherOutputs(mean=output.mean.data, logits=output.logits.data)


def _require_frozen(source_model: Optional[SplitModel], cfg: TransferConfig) -> SplitModel:
    if source_model is None:
        raise UsageError(f"method '{cfg.method.value}' needs a frozen source model")
    if source_model.training:
        raise UsageError("source model must be frozen in eval mode during transfer")
    return source_model


def teacher_outputs(
    source_model: SplitModel,
    batch: PairedBatch,
    cfg: TransferConfig,
    cache: Optional[SourceOutputCache] = None,
) -> TeacherOutputs:
    """Run the frozen source model on the configured half of ``batch``."""
    if cfg.teacher_input == "target":
        return _run_teacher(source_model, batch.x_target)
    x_source = batch.require_pairs()
    if cache is not None and not batch.mixed and batch.source_ids is not None:
        return cache.lookup(source_model, x_source, batch.source_ids)
    return _run_teacher(source_model, x_source)


# ----------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------


def combine_with_tsl(
    task_breakdown: LossBreakdown, tsl_term: Union[Tensor, float], cfg: TransferConfig
) -> LossBreakdown:
    """Replace the likelihood with ``tsl_weight * tsl + ce_weight * ce``.

    The KL and auxiliary components are carried over unchanged.
    """
    parts = task_breakdown.components
    if "ce" not in parts:
        raise UsageError("breakdown has no cross-entropy component to combine")
    tsl = tsl_term if isinstance(tsl_term, Tensor) else Tensor(float(tsl_term))
    return LossBreakdown.assemble(
        task_breakdown.method,
        ce=parts["ce"],
        kl=parts.get("kl"),
        aux=parts.get("aux"),
        tsl=tsl,
        tsl_weight=cfg.tsl_weight,
        ce_weight=cfg.ce_weight,
        aux_weight=task_breakdown.aux_weight,
    )


def _default_noise(target_model: SplitModel, batch: PairedBatch) -> NoiseDraw:
    shape = (batch.size,) + target_model.latent_site.shape
    return NoiseDraw.draw(shape, base_seed=0, sample_ids=batch.target_ids)


def vbkt_loss(
    target_model: SplitModel,
    source_model: SplitModel,
    batch: PairedBatch,
    cfg: TransferConfig,
    noise: Optional[NoiseDraw] = None,
    cache: Optional[SourceOutputCache] = None,
) -> LossBreakdown:
    """Cross-entropy through a sampled latent plus the latent KL to the source means.

    ``mu_T`` comes from the target model on ``x_T``, ``mu_S`` from the
    frozen source model on ``x_S``; gradients reach the target model only.

    Raises:
        UsageError: If the source model is not frozen in eval mode
        PairingError: If ``batch`` is unpaired
    """
    source_model = _require_frozen(source_model, cfg)
    batch.require_pairs()
    teacher = teacher_outputs(source_model, batch, cfg, cache)
    noise = noise if noise is not None else _default_noise(target_model, batch)

    mu_t = target_model.encode(batch.x_target)
    z = sample_latent(LatentGaussian(mu_t, cfg.sigma, cfg.max_noise_std), noise)
    logits = target_model.decode(z)
    ce = softmax_cross_entropy(logits, batch.soft_labels).loss
    kl = latent_kl(mu_t, teacher.mean, cfg.sigma)
    breakdown = LossBreakdown.assemble(TransferMethod.VBKT, ce=ce, kl=kl)
    logger.debug("vbkt step: ce=%.6f kl=%.6f", breakdown.ce_term, breakdown.kl_latent)
    if cfg.combine_with_tsl:
        return combine_with_tsl(breakdown, tsl_loss(logits, teacher.logits, cfg.temperature), cfg)
    return breakdown


_AUX_LOSSES = {
    TransferMethod.FITNET: fitnet_loss,
    TransferMethod.AT: at_loss,
    TransferMethod.SP: sp_loss,
}


def transfer_loss(
    target_model: SplitModel,
    source_model: Optional[SplitModel],
    batch: PairedBatch,
    cfg: TransferConfig,
    noise: Optional[NoiseDraw] = None,
    cache: Optional[SourceOutputCache] = None,
) -> LossBreakdown:
    """Objective of ``cfg.method`` for one batch.

    Raises:
        UsageError: If the method needs a source model and none (or an unfrozen one) is given
    """
    if cfg.method is TransferMethod.VBKT:
        return vbkt_loss(target_model, _require_frozen(source_model, cfg), batch, cfg, noise, cache)

    teacher: Optional[TeacherOutputs] = None
    if cfg.needs_source:
        teacher = teacher_outputs(_require_frozen(source_model, cfg), batch, cfg, cache)
    output = target_model.forward(batch.x_target)
    ce = softmax_cross_entropy(output.logits, batch.soft_labels).loss

    aux = None
    aux_fn = _AUX_LOSSES.get(cfg.method)
    if aux_fn is not None:
        assert teacher is not None
        aux = aux_fn(output.mean, teacher.mean)
    breakdown = LossBreakdown.assemble(cfg.method, ce=ce, aux=aux, aux_weight=cfg.aux_weight)
    if cfg.uses_tsl:
        assert teacher is not None
        tsl = tsl_loss(output.logits, teacher.logits, cfg.temperature)
        return combine_with_tsl(breakdown, tsl, cfg)
    return breakdown
