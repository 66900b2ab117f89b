"""Gaussian latent site and knowledge-transfer objectives."""

from .latent import (
    DEFAULT_SIGMA,
    MAX_NOISE_STD,
    LatentGaussian,
    NoiseDraw,
    estimate_sigma,
    inference_pass,
    kl_weight,
    latent_kl,
    sample_latent,
)
from .losses import (
    LossBreakdown,
    SourceOutputCache,
    TeacherOutputs,
    TransferConfig,
    TransferMethod,
    at_loss,
    combine_with_tsl,
    fitnet_loss,
    sp_loss,
    teacher_outputs,
    transfer_loss,
    tsl_loss,
    vbkt_loss,
)

__all__ = [
    "DEFAULT_SIGMA",
    "LatentGaussian",
    "LossBreakdown",
    "MAX_NOISE_STD",
    "NoiseDraw",
    "SourceOutputCache",
    "TeacherOutputs",
    "TransferConfig",
    "TransferMethod",
    "at_loss",
    "combine_with_tsl",
    "estimate_sigma",
    "fitnet_loss",
    "inference_pass",
    "kl_weight",
    "latent_kl",
    "sample_latent",
    "sp_loss",
    "teacher_outputs",
    "transfer_loss",
    "tsl_loss",
    "vbkt_loss",
]
