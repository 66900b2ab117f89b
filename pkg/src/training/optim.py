"""Stochastic gradient descent with momentum, L2 weight decay and gradient-norm clipping."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import Tensor


def clip_grad_norm(parameters: Sequence[tuple[str, Tensor]], max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping. ``max_norm <= 0`` leaves the gradients alone.
    """
    grads = [tensor.grad for _, tensor in parameters if tensor.grad is not None]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for _, tensor in parameters:
            if tensor.grad is not None:
                tensor.grad = tensor.grad * scale
    return total


class SGD:
    """Heavy-ball SGD over named parameters.

    ``v <- momentum * v + (grad + weight_decay * p)``, then ``p <- p - lr * v``.
    Parameters without a gradient this step are left untouched.
    """

    def __init__(
        self,
        parameters: Sequence[tuple[str, Tensor]],
        momentum: float = 0.9,
        weight_decay: float = 1e-4,
    ):
        self.parameters = [(name, tensor) for name, tensor in parameters if tensor.requires_grad]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {
            name: np.zeros_like(t.data) for name, t in self.parameters
        }

    def zero_grad(self) -> None:
        for _, tensor in self.parameters:
            tensor.zero_grad()

    def clip(self, max_norm: float) -> float:
        return clip_grad_norm(self.parameters, max_norm)

    def step(self, lr: float) -> None:
        for name, tensor in self.parameters:
            if tensor.grad is None:
                continue
            update = tensor.grad + self.weight_decay * tensor.data
            self.velocity[name] = self.momentum * self.velocity[name] + update
            tensor.data = tensor.data - lr * self.velocity[name]
