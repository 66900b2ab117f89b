"""Sequential CNN classifier split around a Gaussian latent site."""

from __future__ import annotations

import hashlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from ..errors import ConfigurationError, DimensionError
from .layers import Layer, LayerKind, LayerSpec
from .tensor import Tensor, no_grad

LatentFn = Callable[[Tensor], Tensor]


@dataclass
class ModelConfig:
    """Architecture of the scaled-down classifier.

    ``conv_channels`` gives one [conv -> BN -> ReLU -> maxpool] block per
    entry. ``head_units > 0`` inserts a dense -> BN -> ReLU block before the
    output layer, and with the default ``latent_depth = -1`` the latent sits
    on that block's batchnorm. ``latent_depth`` indexes the valid latent
    sites (one per batchnorm, counted from the input); negative values count
    from the end.
    """

    input_shape: tuple[int, ...] = (1, 40, 64)
    num_classes: int = 10
    conv_channels: tuple[int, ...] = (8, 16, 32)
    kernel_size: int = 3
    pool_size: int = 2
    head_units: int = 64
    latent_depth: int = -1
    seed: int = 0

    def __post_init__(self) -> None:
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.conv_channels = tuple(int(v) for v in self.conv_channels)
        if len(self.input_shape) != 3:
            raise ConfigurationError(f"model.input_shape must be C x H x W, got {self.input_shape}")
        if self.num_classes < 2:
            raise ConfigurationError(f"model.num_classes must be >= 2, got {self.num_classes}")
        if not self.conv_channels and self.head_units <= 0:
            raise ConfigurationError("model needs at least one conv block or a dense head")

    def architecture(self) -> list[LayerSpec]:
        specs: list[LayerSpec] = []
        for channels in self.conv_channels:
            specs += [
                LayerSpec.conv2d(
                    channels, self.kernel_size, stride=1, padding=self.kernel_size // 2
                ),
                LayerSpec.batchnorm(),
                LayerSpec.relu(),
                LayerSpec.maxpool(self.pool_size),
            ]
        specs.append(LayerSpec.flatten())
        if self.head_units > 0:
            specs += [LayerSpec.dense(self.head_units), LayerSpec.batchnorm(), LayerSpec.relu()]
        specs.append(LayerSpec.dense(self.num_classes))
        return specs


@dataclass
class ModelOutput:
    """Latent mean, the latent actually fed forward, and the logits."""

    mean: Tensor
    latent: Tensor
    logits: Tensor


@dataclass(frozen=True)
class LatentSite:
    """Where the latent sits: split position in the layer list plus its shape."""

    depth: int
    split: int
    shape: tuple[int, ...] = field(default=())

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape))


def latent_sites(specs: Sequence[LayerSpec]) -> list[int]:
    """Split positions directly after each batchnorm (so before its ReLU)."""
    return [i + 1 for i, spec in enumerate(specs) if spec.kind is LayerKind.BATCHNORM]


class SplitModel:
    """Classifier decomposed into pre-latent weights, latent site and post-latent weights.

    Args:
        specs: Full ordered layer list
        input_shape: Per-example input shape
        latent_depth: Index into ``latent_sites(specs)``; negative counts from the end
        seed: Base seed; layer ``i`` is initialized from ``default_rng([seed, i])``
    """

    def __init__(
        self,
        specs: Sequence[LayerSpec],
        input_shape: tuple[int, ...],
        latent_depth: int = -1,
        seed: int = 0,
    ):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.layers: list[Layer] = []
        shape = self.input_shape
        for index, spec in enumerate(self.specs):
            layer = Layer(spec, shape, np.random.default_rng([seed, index]))
            self.layers.append(layer)
            shape = layer.output_shape
        if len(shape) != 1:
            raise ConfigurationError(
                f"model must end in a flat output, got per-example shape {shape}"
            )
        self.num_classes = shape[0]

        sites = latent_sites(self.specs)
        if not sites:
            raise ConfigurationError("model has no batchnorm layer to host the latent site")
        if not -len(sites) <= latent_depth < len(sites):
            raise ConfigurationError(
                f"latent depth {latent_depth} is not a valid site; model has {len(sites)} "
                f"(post-BN, pre-ReLU) sites"
            )
        depth = latent_depth % len(sites)
        split = sites[depth]
        self.latent_site = LatentSite(
            depth=depth, split=split, shape=self.layers[split - 1].output_shape
        )
        self.training = True
        self.frozen = False

    @classmethod
    def build(cls, config: ModelConfig, latent_depth: Optional[int] = None) -> "SplitModel":
        depth = config.latent_depth if latent_depth is None else latent_depth
        return cls(config.architecture(), config.input_shape, depth, config.seed)

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    @property
    def pre_latent(self) -> list[Layer]:
        return self.layers[: self.latent_site.split]

    @property
    def post_latent(self) -> list[Layer]:
        return self.layers[self.latent_site.split :]

    @property
    def latent_layer_index(self) -> int:
        return self.latent_site.depth

    @property
    def latent_dim(self) -> int:
        return self.latent_site.dim

    def parameters(self) -> list[tuple[str, Tensor]]:
        named = []
        for index, layer in enumerate(self.layers):
            for name, tensor in layer.params.items():
                named.append((f"{index}.{layer.spec.kind.label}.{name}", tensor))
        return named

    def zero_grad(self) -> None:
        for _, tensor in self.parameters():
            tensor.zero_grad()

    # ------------------------------------------------------------------
    # Modes
    # ------------------------------------------------------------------

    def train(self) -> "SplitModel":
        self.training = True
        return self

    def eval(self) -> "SplitModel":
        self.training = False
        return self

    @contextmanager
    def evaluating(self) -> Iterator["SplitModel"]:
        """Temporarily switch to eval mode."""
        previous = self.training
        self.training = False
        try:
            yield self
        finally:
            self.training = previous

    def freeze(self) -> "SplitModel":
        """Eval mode with every parameter detached from gradient tracking."""
        for _, tensor in self.parameters():
            tensor.requires_grad = False
            tensor.zero_grad()
        self.frozen = True
        return self.eval()

    # ------------------------------------------------------------------
    # Forward passes
    # ------------------------------------------------------------------

    def _as_input(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[1:] != self.input_shape:
            raise DimensionError(
                f"model expects per-example input {self.input_shape}, got {x.shape[1:]}"
            )
        return x

    def encode(self, x: Union[Tensor, np.ndarray]) -> Tensor:
        """Pre-latent stage: returns the latent mean."""
        out = self._as_input(x)
        for layer in self.pre_latent:
            out = layer.forward(out, self.training)
        return out

    def decode(self, z: Tensor) -> Tensor:
        """Post-latent stage: latent to logits."""
        if z.shape[1:] != self.latent_site.shape:
            raise DimensionError(
                f"latent input must have per-example shape {self.latent_site.shape}, "
                f"got {z.shape[1:]}"
            )
        out = z
        for layer in self.post_latent:
            out = layer.forward(out, self.training)
        return out

    def forward(
        self, x: Union[Tensor, np.ndarray], latent_fn: Optional[LatentFn] = None
    ) -> ModelOutput:
        """Full pass; ``latent_fn`` maps the latent mean to the latent fed forward."""
        mean = self.encode(x)
        latent = latent_fn(mean) if latent_fn is not None else mean
        return ModelOutput(mean=mean, latent=latent, logits=self.decode(latent))

    def predict_logits(self, features: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Eval-mode logits (latent = mean) without graph recording."""
        outputs = []
        with no_grad(), self.evaluating():
            for start in range(0, len(features), batch_size):
                outputs.append(self.forward(features[start : start + batch_size]).logits.data)
        return np.concatenate(outputs, axis=0)

    # ------------------------------------------------------------------
    # Copies and identity
    # ------------------------------------------------------------------

    def state_arrays(self) -> list[dict[str, np.ndarray]]:
        return [layer.state_arrays() for layer in self.layers]

    def load_state_arrays(self, states: Sequence[dict[str, np.ndarray]]) -> None:
        if len(states) != len(self.layers):
            raise ConfigurationError(
                f"state has {len(states)} layers, model has {len(self.layers)}"
            )
        for layer, arrays in zip(self.layers, states):
            layer.load_arrays(arrays)

    def clone(self, latent_depth: Optional[int] = None) -> "SplitModel":
        """Deep copy, trainable and in train mode; optionally at another latent site."""
        depth = self.latent_site.depth if latent_depth is None else latent_depth
        copy = SplitModel(self.specs, self.input_shape, depth, self.seed)
        copy.load_state_arrays(self.state_arrays())
        return copy

    def fingerprint(self) -> str:
        """SHA-256 over every parameter and running statistic."""
        digest = hashlib.sha256()
        for index, arrays in enumerate(self.state_arrays()):
            for name, array in arrays.items():
                digest.update(f"{index}.{name}".encode())
                digest.update(np.ascontiguousarray(array, dtype="<f8").tobytes())
        return digest.hexdigest()

    def __repr__(self) -> str:
        return (
            f"SplitModel(layers={len(self.layers)}, latent_depth={self.latent_site.depth}, "
            f"latent_shape={self.latent_site.shape}, classes={self.num_classes})"
        )
