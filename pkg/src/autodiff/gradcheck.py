"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

import numpy as np

from .model import SplitModel
from .tensor import Tensor, no_grad

ParameterSource = Union[SplitModel, Mapping[str, Tensor], Iterable[tuple[str, Tensor]]]


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error against finite differences."""

    errors: dict[str, float]
    tolerance: float
    checked_entries: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(error < self.tolerance for error in self.errors.values())

    @property
    def worst(self) -> tuple[str, float]:
        if not self.errors:
            return ("", 0.0)
        name = max(self.errors, key=lambda key: self.errors[key])
        return name, self.errors[name]

    def summary(self) -> str:
        name, error = self.worst
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: {len(self.errors)} parameters, "
            f"worst {name} = {error:.3e} (tol {self.tolerance:g})"
        )


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, scale_floor: float = 1e-3
) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries absolute."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), scale_floor)
    return np.abs(analytic - numeric) / scale


def _named_parameters(source: ParameterSource) -> list[tuple[str, Tensor]]:
    if isinstance(source, SplitModel):
        return source.parameters()
    if isinstance(source, Mapping):
        return list(source.items())
    return list(source)


def grad_check(
    parameters: ParameterSource,
    loss_fn: Callable[[], Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    max_entries: Optional[int] = None,
    seed: int = 0,
    gradient_fault: float = 0.0,
    scale_floor: float = 1e-3,
) -> GradCheckReport:
    """Compare backprop gradients with central differences.

    Args:
        parameters: Model or named tensors to check; each must require grad
        loss_fn: Recomputes the scalar loss from the current parameter values;
            any noise it uses must be fixed
        tolerance: Pass threshold on the maximum relative error
        step: Finite-difference step ``h``
        max_entries: Check at most this many entries per parameter (sampled with ``seed``)
        seed: Seed for the entry sample
        gradient_fault: Offset added to every analytic gradient, to confirm the check can fail
        scale_floor: Denominator floor for relative errors

    Returns:
        GradCheckReport; ``passed`` is True iff every error is below ``tolerance``
    """
    named = _named_parameters(parameters)
    for _, tensor in named:
        tensor.zero_grad()
    loss_fn().backward()
    analytic = {
        name: (np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy())
        + gradient_fault
        for name, tensor in named
    }

    rng = np.random.default_rng(seed)
    errors: dict[str, float] = {}
    counts: dict[str, int] = {}
    with no_grad():
        for name, tensor in named:
            tensor.data = np.ascontiguousarray(tensor.data)
            flat = tensor.data.reshape(-1)
            indices = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
            numeric = np.empty(indices.size)
            for slot, index in enumerate(indices):
                original = flat[index]
                flat[index] = original + step
                upper = loss_fn().item()
                flat[index] = original - step
                lower = loss_fn().item()
                flat[index] = original
                numeric[slot] = (upper - lower) / (2.0 * step)
            picked = analytic[name].reshape(-1)[indices]
            errors[name] = float(relative_error(picked, numeric, scale_floor).max(initial=0.0))
            counts[name] = int(indices.size)

    for _, tensor in named:
        tensor.zero_grad()
    return GradCheckReport(errors=errors, tolerance=tolerance, checked_entries=counts)
