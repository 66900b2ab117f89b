"""Reverse-mode autodiff over float64 tensors and the layers built on it."""

from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (
    RunningStats,
    avgpool2d,
    batchnorm_forward,
    conv2d_forward,
    dense_forward,
    flatten,
    log_softmax,
    maxpool2d,
    one_hot,
    relu,
    softmax_array,
    softmax_cross_entropy,
)
from .gradcheck import GradCheckReport, grad_check
from .layers import Layer, LayerKind, LayerSpec
from .model import LatentSite, ModelConfig, ModelOutput, SplitModel, latent_sites
from .tensor import Tensor, is_grad_enabled, no_grad, set_debug

__all__ = [
    "GradCheckReport",
    "LatentSite",
    "Layer",
    "LayerKind",
    "LayerSpec",
    "ModelConfig",
    "ModelOutput",
    "RunningStats",
    "SplitModel",
    "Tensor",
    "avgpool2d",
    "batchnorm_forward",
    "conv2d_forward",
    "dense_forward",
    "flatten",
    "grad_check",
    "is_grad_enabled",
    "latent_sites",
    "load_checkpoint",
    "log_softmax",
    "maxpool2d",
    "no_grad",
    "one_hot",
    "relu",
    "save_checkpoint",
    "set_debug",
    "softmax_array",
    "softmax_cross_entropy",
]
