"""Differentiable layer ops over float64 tensors.

Convolution and pooling use an im2col window gather written as explicit
loops over kernel offsets, so every reduction runs in a fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import BatchSizeError, ConfigurationError, DimensionError, ValidationError
from .tensor import Tensor, as_tensor

LABEL_SUM_TOLERANCE = 1e-6


# ----------------------------------------------------------------------
# Dense
# ----------------------------------------------------------------------


def dense_forward(inputs: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``inputs @ weights + bias`` for a ``B x I`` batch.

    Raises:
        DimensionError: If the input, weight and bias axes do not line up
    """
    if inputs.ndim != 2:
        raise DimensionError(f"dense input must be B x I, got shape {inputs.shape}")
    if weights.ndim != 2 or inputs.shape[1] != weights.shape[0]:
        raise DimensionError(
            f"dense input axis 1 ({inputs.shape[1]}) must equal weights axis 0 "
            f"(weights shape {weights.shape})"
        )
    if bias.shape != (weights.shape[1],):
        raise DimensionError(
            f"dense bias shape {bias.shape} must equal weights axis 1 ({weights.shape[1]},)"
        )
    x, w = inputs.data, weights.data

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return g @ w.T, x.T @ g, g.sum(axis=0)

    return Tensor.from_op(x @ w + bias.data, (inputs, weights, bias), backward, "dense")


# ----------------------------------------------------------------------
# Window gather helpers
# ----------------------------------------------------------------------


def output_extent(size: int, kernel: int, stride: int, padding: int, axis: str) -> int:
    """Output length along one spatial axis, ``(size + 2p - k) / stride + 1``."""
    padded = size + 2 * padding
    if kernel > padded:
        raise ConfigurationError(
            f"kernel {kernel} exceeds padded input extent {padded} on axis {axis}"
        )
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if (padded - kernel) % stride != 0:
        raise ConfigurationError(
            f"non-integral output size on axis {axis}: ({size} + 2*{padding} - {kernel}) "
            f"is not divisible by stride {stride}"
        )
    return (padded - kernel) // stride + 1


def _gather_windows(
    x: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int
) -> np.ndarray:
    """Return windows shaped ``B x C x kh x kw x oh x ow``."""
    batch, channels = x.shape[:2]
    cols = np.empty((batch, channels, kh, kw, oh, ow), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols


def _scatter_windows(
    cols: np.ndarray, shape: tuple[int, ...], stride: int, oh: int, ow: int
) -> np.ndarray:
    """Adjoint of ``_gather_windows``: add every window back into place."""
    kh, kw = cols.shape[2], cols.shape[3]
    out = np.zeros(shape, dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            rows = slice(i, i + stride * oh, stride)
            columns = slice(j, j + stride * ow, stride)
            out[:, :, rows, columns] += cols[:, :, i, j]
    return out


# ----------------------------------------------------------------------
# Convolution
# ----------------------------------------------------------------------


def conv2d_forward(
    inputs: Tensor, kernels: Tensor, bias: Tensor, stride: int = 1, padding: int = 0
) -> Tensor:
    """Cross-correlate ``B x C x H x W`` inputs with ``F x C x kH x kW`` kernels.

    Raises:
        DimensionError: On rank or channel mismatch
        ConfigurationError: If the kernel does not fit or the output size is non-integral
    """
    if inputs.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(
            f"conv2d needs B x C x H x W inputs and F x C x kH x kW kernels, "
            f"got {inputs.shape} and {kernels.shape}"
        )
    batch, channels, height, width = inputs.shape
    filters, kernel_channels, kh, kw = kernels.shape
    if kernel_channels != channels:
        raise DimensionError(
            f"conv2d input axis 1 has {channels} channels but kernels axis 1 has {kernel_channels}"
        )
    if bias.shape != (filters,):
        raise DimensionError(f"conv2d bias shape {bias.shape} must be ({filters},)")
    oh = output_extent(height, kh, stride, padding, "H")
    ow = output_extent(width, kw, stride, padding, "W")

    padded = np.pad(inputs.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _gather_windows(padded, kh, kw, stride, oh, ow)
    cols = cols.reshape(batch, channels * kh * kw, oh * ow)
    w = kernels.data.reshape(filters, -1)
    out = np.matmul(w, cols) + bias.data[None, :, None]

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        g = g.reshape(batch, filters, oh * ow)
        grad_w = np.einsum("bfn,bkn->fk", g, cols).reshape(kernels.shape)
        grad_bias = g.sum(axis=(0, 2))
        grad_cols = np.matmul(w.T, g).reshape(batch, channels, kh, kw, oh, ow)
        grad_padded = _scatter_windows(grad_cols, padded.shape, stride, oh, ow)
        grad_x = grad_padded[:, :, padding : padding + height, padding : padding + width]
        return grad_x, grad_w, grad_bias

    return Tensor.from_op(
        out.reshape(batch, filters, oh, ow), (inputs, kernels, bias), backward, "conv2d"
    )


# ----------------------------------------------------------------------
# Batch normalization
# ----------------------------------------------------------------------


@dataclass
class RunningStats:
    """Per-channel running mean and variance used in eval mode."""

    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    @classmethod
    def identity(
        cls, channels: int, momentum: float = 0.1, epsilon: float = 1e-5
    ) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels), momentum, epsilon)

    def update(self, batch_mean: np.ndarray, batch_var_unbiased: np.ndarray) -> None:
        self.mean = (1.0 - self.momentum) * self.mean + self.momentum * batch_mean
        self.var = (1.0 - self.momentum) * self.var + self.momentum * batch_var_unbiased


def batchnorm_forward(
    inputs: Tensor, gamma: Tensor, beta: Tensor, running_stats: RunningStats, training: bool
) -> Tensor:
    """Normalize per channel (axis 1) of a ``B x C x ...`` batch.

    Train mode uses biased batch statistics and folds the unbiased variance
    into ``running_stats``; eval mode uses the running statistics.

    Raises:
        BatchSizeError: If training with fewer than two examples
        DimensionError: If gamma/beta do not match the channel axis
    """
    if inputs.ndim < 2:
        raise DimensionError(f"batchnorm needs B x C x ..., got shape {inputs.shape}")
    channels = inputs.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(
            f"batchnorm gamma/beta must be ({channels},), got {gamma.shape} and {beta.shape}"
        )
    batch = inputs.shape[0]
    if training and batch < 2:
        raise BatchSizeError(f"batchnorm in train mode needs B >= 2, got B={batch}")

    axes = tuple(i for i in range(inputs.ndim) if i != 1)
    bshape = [1] * inputs.ndim
    bshape[1] = channels
    x = inputs.data
    eps = running_stats.epsilon

    if training:
        count = x.size // channels
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_stats.update(mean, var * count / (count - 1))
    else:
        count = 0
        mean, var = running_stats.mean, running_stats.var

    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    g_w = gamma.data.reshape(bshape)
    out = g_w * x_hat + beta.data.reshape(bshape)

    def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        grad_gamma = (g * x_hat).sum(axis=axes)
        grad_beta = g.sum(axis=axes)
        d_xhat = g * g_w
        if training:
            sum_d = d_xhat.sum(axis=axes).reshape(bshape)
            sum_dx = (d_xhat * x_hat).sum(axis=axes).reshape(bshape)
            grad_x = (inv_std.reshape(bshape) / count) * (count * d_xhat - sum_d - x_hat * sum_dx)
        else:
            grad_x = d_xhat * inv_std.reshape(bshape)
        return grad_x, grad_gamma, grad_beta

    return Tensor.from_op(out, (inputs, gamma, beta), backward, "batchnorm")


# ----------------------------------------------------------------------
# Activations, pooling, reshaping
# ----------------------------------------------------------------------


def relu(inputs: Tensor) -> Tensor:
    """Elementwise ``max(0, x)``; the subgradient at 0 is 0."""
    inputs = as_tensor(inputs)
    mask = inputs.data > 0
    return Tensor.from_op(inputs.data * mask, (inputs,), lambda g: (g * mask,), "relu")


def _pool_windows(inputs: Tensor, size: int, stride: int) -> tuple[np.ndarray, int, int]:
    if inputs.ndim != 4:
        raise DimensionError(f"pooling needs B x C x H x W, got shape {inputs.shape}")
    oh = output_extent(inputs.shape[2], size, stride, 0, "H")
    ow = output_extent(inputs.shape[3], size, stride, 0, "W")
    return _gather_windows(inputs.data, size, size, stride, oh, ow), oh, ow


def maxpool2d(inputs: Tensor, size: int = 2, stride: int | None = None) -> Tensor:
    """Max over ``size x size`` windows; ties route the gradient to the first maximum."""
    stride = stride or size
    windows, oh, ow = _pool_windows(inputs, size, stride)
    batch, channels = inputs.shape[:2]
    flat = windows.reshape(batch, channels, size * size, oh, ow)
    winner = flat.argmax(axis=2)
    out = np.take_along_axis(flat, winner[:, :, None], axis=2)[:, :, 0]
    shape = inputs.shape

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad_flat = np.zeros_like(flat)
        np.put_along_axis(grad_flat, winner[:, :, None], g[:, :, None], axis=2)
        grad_windows = grad_flat.reshape(batch, channels, size, size, oh, ow)
        return (_scatter_windows(grad_windows, shape, stride, oh, ow),)

    return Tensor.from_op(out, (inputs,), backward, "maxpool")


def avgpool2d(inputs: Tensor, size: int = 2, stride: int | None = None) -> Tensor:
    """Mean over ``size x size`` windows."""
    stride = stride or size
    windows, oh, ow = _pool_windows(inputs, size, stride)
    batch, channels = inputs.shape[:2]
    out = windows.mean(axis=(2, 3))
    shape = inputs.shape
    scale = 1.0 / (size * size)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad_windows = np.broadcast_to(
            (g * scale)[:, :, None, None], (batch, channels, size, size, oh, ow)
        )
        return (_scatter_windows(grad_windows, shape, stride, oh, ow),)

    return Tensor.from_op(out, (inputs,), backward, "avgpool")


def flatten(inputs: Tensor) -> Tensor:
    return inputs.flatten_batch()


# ----------------------------------------------------------------------
# Softmax family
# ----------------------------------------------------------------------


def log_softmax_array(logits: np.ndarray) -> np.ndarray:
    """Max-shifted log-softmax over the last axis."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_array(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax_array(logits))


def log_softmax(logits: Tensor) -> Tensor:
    """Differentiable log-softmax over the last axis."""
    out = log_softmax_array(logits.data)
    probs = np.exp(out)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return Tensor.from_op(out, (logits,), backward, "log_softmax")


@dataclass
class CrossEntropyResult:
    """Mean cross-entropy plus the softmax probabilities it was computed from."""

    loss: Tensor
    probabilities: np.ndarray = field(repr=False)


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> CrossEntropyResult:
    """``-(1/B) sum_b sum_k labels[b,k] log softmax(logits)[b,k]``.

    Args:
        logits: ``B x K`` scores
        labels: ``B x K`` one-hot or soft labels, each row summing to 1

    Raises:
        DimensionError: If labels and logits differ in shape
        ValidationError: If a label row is not normalized
    """
    labels = np.asarray(labels, dtype=np.float64)
    if logits.ndim != 2 or labels.shape != logits.shape:
        raise DimensionError(
            f"cross-entropy needs matching B x K logits and labels, got {logits.shape} "
            f"and {labels.shape}"
        )
    row_sums = labels.sum(axis=1)
    bad = np.flatnonzero(np.abs(row_sums - 1.0) > LABEL_SUM_TOLERANCE)
    if bad.size:
        raise ValidationError(
            f"label row {int(bad[0])} sums to {row_sums[bad[0]]:.9f}, expected 1"
        )
    log_probs = log_softmax(logits)
    batch = logits.shape[0]
    loss = -(log_probs * labels).sum() * (1.0 / batch)
    return CrossEntropyResult(loss=loss, probabilities=np.exp(log_probs.data))


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.shape[0], num_classes), dtype=np.float64)
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded
