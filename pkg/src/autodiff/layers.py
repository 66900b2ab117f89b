"""Layer specifications and the parameterized layers built from them."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from ..errors import ConfigurationError
from . import functional as F
from .tensor import Tensor


class LayerKind(Enum):
    """Supported layer kinds with their checkpoint tag and trainability."""

    DENSE = ("dense", 1, True)
    CONV2D = ("conv2d", 2, True)
    BATCHNORM = ("batchnorm", 3, True)
    RELU = ("relu", 4, False)
    MAXPOOL = ("maxpool", 5, False)
    AVGPOOL = ("avgpool", 6, False)
    FLATTEN = ("flatten", 7, False)

    def __init__(self, label: str, tag: int, has_parameters: bool):
        self.label = label
        self.tag = tag
        self.has_parameters = has_parameters

    @classmethod
    def from_label(cls, label: str) -> "LayerKind":
        for kind in cls:
            if kind.label == label:
                return kind
        raise ConfigurationError(f"unknown layer kind '{label}'")

    @classmethod
    def from_tag(cls, tag: int) -> "LayerKind":
        for kind in cls:
            if kind.tag == tag:
                return kind
        raise ConfigurationError(f"unknown layer tag {tag}")


@dataclass(frozen=True)
class LayerSpec:
    """Kind plus kind-specific hyperparameters.

    ``units`` is the output width of dense layers and the filter count of
    conv layers; ``kernel_size`` doubles as the pool window.
    """

    kind: LayerKind
    units: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    epsilon: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def dense(cls, units: int) -> "LayerSpec":
        return cls(LayerKind.DENSE, units=units)

    @classmethod
    def conv2d(
        cls, filters: int, kernel_size: int = 3, stride: int = 1, padding: int = 1
    ) -> "LayerSpec":
        return cls(
            LayerKind.CONV2D,
            units=filters,
            kernel_size=kernel_size,
            stride=stride,
            padding=padding,
        )

    @classmethod
    def batchnorm(cls, epsilon: float = 1e-5, momentum: float = 0.1) -> "LayerSpec":
        return cls(LayerKind.BATCHNORM, epsilon=epsilon, momentum=momentum)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(LayerKind.RELU)

    @classmethod
    def maxpool(cls, size: int = 2) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL, kernel_size=size, stride=size)

    @classmethod
    def avgpool(cls, size: int = 2) -> "LayerSpec":
        return cls(LayerKind.AVGPOOL, kernel_size=size, stride=size)

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(LayerKind.FLATTEN)

    def output_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Validate the hyperparameters against a per-example input shape.

        Args:
            input_shape: Shape without the batch axis

        Returns:
            Per-example output shape

        Raises:
            ConfigurationError: If the hyperparameters do not fit the input
        """
        kind = self.kind
        if kind is LayerKind.DENSE:
            if len(input_shape) != 1:
                raise ConfigurationError(f"dense layer needs a flat input, got {input_shape}")
            if self.units < 1:
                raise ConfigurationError(f"dense units must be >= 1, got {self.units}")
            return (self.units,)
        if kind is LayerKind.CONV2D:
            if len(input_shape) != 3:
                raise ConfigurationError(f"conv2d needs C x H x W input, got {input_shape}")
            if self.units < 1 or self.kernel_size < 1:
                raise ConfigurationError(
                    "conv2d needs filters >= 1 and kernel >= 1, "
                    f"got {self.units}, {self.kernel_size}"
                )
            _, height, width = input_shape
            return (
                self.units,
                F.output_extent(height, self.kernel_size, self.stride, self.padding, "H"),
                F.output_extent(width, self.kernel_size, self.stride, self.padding, "W"),
            )
        if kind is LayerKind.BATCHNORM:
            if self.epsilon <= 0 or not 0 < self.momentum <= 1:
                raise ConfigurationError(
                    f"batchnorm needs epsilon > 0 and momentum in (0, 1], "
                    f"got {self.epsilon}, {self.momentum}"
                )
            return input_shape
        if kind in (LayerKind.MAXPOOL, LayerKind.AVGPOOL):
            if len(input_shape) != 3:
                raise ConfigurationError(f"{kind.label} needs C x H x W input, got {input_shape}")
            channels, height, width = input_shape
            return (
                channels,
                F.output_extent(height, self.kernel_size, self.stride, 0, "H"),
                F.output_extent(width, self.kernel_size, self.stride, 0, "W"),
            )
        if kind is LayerKind.FLATTEN:
            return (int(np.prod(input_shape)),)
        return input_shape


class Layer:
    """A layer instance: spec, named parameters and (for batchnorm) running stats."""

    def __init__(self, spec: LayerSpec, input_shape: tuple[int, ...], rng: np.random.Generator):
        self.spec = spec
        self.input_shape = tuple(input_shape)
        self.output_shape = spec.output_shape(self.input_shape)
        self.params: dict[str, Tensor] = {}
        self.running: Optional[F.RunningStats] = None
        self._initialize(rng)

    def _initialize(self, rng: np.random.Generator) -> None:
        kind = self.spec.kind
        if kind is LayerKind.DENSE:
            fan_in = self.input_shape[0]
            limit = np.sqrt(6.0 / fan_in)
            self.params["weight"] = Tensor(
                rng.uniform(-limit, limit, size=(fan_in, self.spec.units)), requires_grad=True
            )
            self.params["bias"] = Tensor(np.zeros(self.spec.units), requires_grad=True)
        elif kind is LayerKind.CONV2D:
            channels = self.input_shape[0]
            k = self.spec.kernel_size
            limit = np.sqrt(6.0 / (channels * k * k))
            self.params["weight"] = Tensor(
                rng.uniform(-limit, limit, size=(self.spec.units, channels, k, k)),
                requires_grad=True,
            )
            self.params["bias"] = Tensor(np.zeros(self.spec.units), requires_grad=True)
        elif kind is LayerKind.BATCHNORM:
            channels = self.input_shape[0]
            self.params["gamma"] = Tensor(np.ones(channels), requires_grad=True)
            self.params["beta"] = Tensor(np.zeros(channels), requires_grad=True)
            self.running = F.RunningStats.identity(channels, self.spec.momentum, self.spec.epsilon)

    def forward(self, x: Tensor, training: bool) -> Tensor:
        kind = self.spec.kind
        if kind is LayerKind.DENSE:
            return F.dense_forward(x, self.params["weight"], self.params["bias"])
        if kind is LayerKind.CONV2D:
            return F.conv2d_forward(
                x, self.params["weight"], self.params["bias"], self.spec.stride, self.spec.padding
            )
        if kind is LayerKind.BATCHNORM:
            assert self.running is not None
            return F.batchnorm_forward(
                x, self.params["gamma"], self.params["beta"], self.running, training
            )
        if kind is LayerKind.RELU:
            return F.relu(x)
        if kind is LayerKind.MAXPOOL:
            return F.maxpool2d(x, self.spec.kernel_size, self.spec.stride)
        if kind is LayerKind.AVGPOOL:
            return F.avgpool2d(x, self.spec.kernel_size, self.spec.stride)
        return F.flatten(x)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every array a checkpoint must carry, parameters first."""
        arrays = {name: tensor.data for name, tensor in self.params.items()}
        if self.running is not None:
            arrays["running_mean"] = self.running.mean
            arrays["running_var"] = self.running.var
        return arrays

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            tensor.data = np.array(arrays[name], dtype=np.float64)
        if self.running is not None:
            self.running.mean = np.array(arrays["running_mean"], dtype=np.float64)
            self.running.var = np.array(arrays["running_var"], dtype=np.float64)

    def __repr__(self) -> str:
        return f"Layer({self.spec.kind.label}, {self.input_shape} -> {self.output_shape})"
