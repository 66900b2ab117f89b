"""Gaussian latent site: reparameterized sampling, mean pass and closed-form KL.

Posterior and prior over each latent vector are isotropic Gaussians sharing
one fixed standard deviation; the network's hidden output is the mean. The
sampling noise is capped at ``max_noise_std``, so a very wide ``sigma`` only
weakens the KL pull and leaves the likelihood term trainable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..autodiff import SplitModel, Tensor, no_grad
from ..errors import ConfigurationError, DimensionError

DEFAULT_SIGMA = 0.2
MAX_NOISE_STD = 1.0


@dataclass
class LatentGaussian:
    """Per-example latent distribution ``N(mean, sigma^2 I)``.

    ``sigma = 0`` is accepted for degenerate sampling checks; the KL needs
    ``sigma > 0``. Draws use ``noise_std = min(sigma, max_noise_std)``.
    """

    mean: Tensor
    sigma: float = DEFAULT_SIGMA
    max_noise_std: float = MAX_NOISE_STD

    def __post_init__(self) -> None:
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigurationError(f"latent sigma must be finite and >= 0, got {self.sigma}")
        if not self.max_noise_std > 0:
            raise ConfigurationError(f"max_noise_std must be > 0, got {self.max_noise_std}")

    @property
    def dim(self) -> int:
        """Embedding dimension M (product of the non-batch axes)."""
        return int(np.prod(self.mean.shape[1:]))

    @property
    def variance(self) -> float:
        return self.sigma**2

    @property
    def noise_std(self) -> float:
        return min(self.sigma, self.max_noise_std)


@dataclass(frozen=True)
class NoiseDraw:
    """Standard-normal draws plus the seeds they came from.

    Row ``i`` is drawn from ``default_rng([base_seed, epoch, batch, sample_ids[i]])``.
    """

    epsilon: np.ndarray = field(repr=False)
    base_seed: int
    epoch: int
    batch: int
    sample_ids: tuple[int, ...]

    @classmethod
    def draw(
        cls,
        shape: Sequence[int],
        base_seed: int,
        epoch: int = 0,
        batch: int = 0,
        sample_ids: Optional[Sequence[int]] = None,
    ) -> "NoiseDraw":
        shape = tuple(int(s) for s in shape)
        ids = tuple(range(shape[0])) if sample_ids is None else tuple(int(i) for i in sample_ids)
        if len(ids) != shape[0]:
            raise DimensionError(f"{len(ids)} sample ids for a batch axis of {shape[0]}")
        rows = [
            np.random.default_rng([base_seed, epoch, batch, sample_id]).standard_normal(shape[1:])
            for sample_id in ids
        ]
        epsilon = np.stack(rows) if rows else np.zeros(shape)
        return cls(epsilon=epsilon, base_seed=base_seed, epoch=epoch, batch=batch, sample_ids=ids)

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "NoiseDraw":
        shape = tuple(int(s) for s in shape)
        ids = tuple(range(shape[0]))
        return cls(np.zeros(shape), base_seed=-1, epoch=0, batch=0, sample_ids=ids)

    def regenerate(self) -> "NoiseDraw":
        """Redraw from the recorded seeds."""
        return NoiseDraw.draw(
            self.epsilon.shape, self.base_seed, self.epoch, self.batch, self.sample_ids
        )


def sample_latent(latent: LatentGaussian, noise: NoiseDraw) -> Tensor:
    """Reparameterized draw ``z = mean + noise_std * epsilon``; gradient reaches the mean."""
    if noise.epsilon.shape != latent.mean.shape:
        raise DimensionError(
            f"noise shape {noise.epsilon.shape} does not match "
            f"latent mean shape {latent.mean.shape}"
        )
    if latent.noise_std == 0:
        return latent.mean
    return latent.mean + Tensor(latent.noise_std * noise.epsilon)


def inference_pass(latent: LatentGaussian) -> Tensor:
    """Deterministic inference: the latent is its mean."""
    return latent.mean


def kl_weight(sigma: float) -> float:
    """Weight ``1 / (2 sigma^2)`` on the squared mean distance."""
    if not sigma > 0:
        raise ConfigurationError(f"latent sigma must be > 0 for the KL term, got {sigma}")
    return 1.0 / (2.0 * sigma**2)


def latent_kl(mu_t: Tensor, mu_s: Tensor | np.ndarray, sigma: float) -> Tensor:
    """Batch-mean KL between ``N(mu_t, sigma^2 I)`` and ``N(mu_s, sigma^2 I)``.

    Equals ``(1 / (2 sigma^2)) (1/B) sum_b ||mu_t[b] - mu_s[b]||^2``. The
    source means act as the prior and are detached.

    Raises:
        ConfigurationError: If ``sigma <= 0``
        DimensionError: If the mean shapes differ
    """
    weight = kl_weight(sigma)
    prior = mu_s.data if isinstance(mu_s, Tensor) else np.asarray(mu_s, dtype=np.float64)
    if prior.shape != mu_t.shape:
        raise DimensionError(f"latent means differ in shape: {mu_t.shape} vs {prior.shape}")
    diff = mu_t - Tensor(prior)
    return (diff * diff).sum() * (weight / mu_t.shape[0])


def estimate_sigma(model: SplitModel, features: np.ndarray, batch_size: int = 256) -> float:
    """Mean per-example standard deviation of a model's latent means.

    A data-driven starting point for the fixed ``sigma``; not applied automatically.
    """
    spreads = []
    with no_grad(), model.evaluating():
        for start in range(0, len(features), batch_size):
            mean = model.encode(features[start : start + batch_size]).data
            spreads.append(mean.reshape(mean.shape[0], -1).std(axis=1))
    return float(np.concatenate(spreads).mean())
