"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op records its parents and a closure mapping the output gradient to one
gradient per parent. ``Tensor.backward`` orders the recorded graph with
networkx and applies the closures in reverse topological order.
"""

from __future__ import annotations

import os
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence, Union

import networkx as nx
import numpy as np

from ..errors import DimensionError, NonFiniteError, UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", float, int, np.ndarray]


class _AutogradState(threading.local):
    """Per-thread switches; model instances never share them."""

    def __init__(self) -> None:
        self.grad_enabled = True
        self.debug = os.environ.get("VBKT_DEBUG", "") not in ("", "0")


_state = _AutogradState()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (current thread only)."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


def set_debug(enabled: bool) -> None:
    """Toggle finite-output checks on every forward op for the current thread."""
    _state.debug = enabled


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(value: Operand) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    Args:
        data: Array-like values, stored row-major as float64
        requires_grad: Whether gradients should be accumulated into ``grad``
    """

    def __init__(self, data: object, requires_grad: bool = False):
        self.data: np.ndarray = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap an op result, recording the graph edge when any parent needs grad."""
        out = cls(data)
        out.op = op
        if _state.debug and not np.all(np.isfinite(out.data)):
            if all(np.all(np.isfinite(parent.data)) for parent in parents):
                raise NonFiniteError(f"op '{op}' produced NaN/Inf from finite inputs")
        if _state.grad_enabled and any(parent.requires_grad for parent in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same values, cut from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    # Backpropagation
    # ------------------------------------------------------------------

    def _accumulate(self, grad: np.ndarray) -> None:
        if grad.shape != self.data.shape:
            raise DimensionError(
                f"gradient shape {grad.shape} does not match tensor shape {self.shape} "
                f"(op '{self.op}')"
            )
        if self.grad is None:
            self.grad = np.array(grad, dtype=np.float64)
        else:
            self.grad = self.grad + grad

    def _graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_node(self)
        stack = [self]
        while stack:
            node = stack.pop()
            for parent in node._parents:
                if not parent.requires_grad:
                    continue
                if parent not in graph:
                    stack.append(parent)
                graph.add_edge(parent, node)
        return graph

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        Raises:
            UsageError: If called on a non-scalar or on a tensor outside any graph
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward() called on a tensor that does not require grad")

        order = list(nx.topological_sort(self._graph()))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            parent_grads = node._backward(node.grad)
            for parent, grad in zip(node._parents, parent_grads):
                if grad is not None and parent.requires_grad:
                    parent._accumulate(grad)

    # ------------------------------------------------------------------
    # Elementwise arithmetic
    # ------------------------------------------------------------------

    def __add__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.from_op(
            self.data + other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(g, b_shape)),
            "add",
        )

    def __radd__(self, other: Operand) -> "Tensor":
        return as_tensor(other) + self

    def __sub__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.from_op(
            self.data - other.data,
            (self, other),
            lambda g: (unbroadcast(g, a_shape), unbroadcast(-g, b_shape)),
            "sub",
        )

    def __rsub__(self, other: Operand) -> "Tensor":
        return as_tensor(other) - self

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __mul__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor.from_op(
            a * b,
            (self, other),
            lambda g: (unbroadcast(g * b, a.shape), unbroadcast(g * a, b.shape)),
            "mul",
        )

    def __rmul__(self, other: Operand) -> "Tensor":
        return as_tensor(other) * self

    def __truediv__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor.from_op(
            a / b,
            (self, other),
            lambda g: (unbroadcast(g / b, a.shape), unbroadcast(-g * a / (b * b), b.shape)),
            "div",
        )

    def __rtruediv__(self, other: Operand) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        if isinstance(exponent, Tensor):
            raise UsageError("only scalar exponents are supported")
        a = self.data
        return Tensor.from_op(
            a**exponent,
            (self,),
            lambda g: (g * exponent * a ** (exponent - 1),),
            f"pow{exponent}",
        )

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * out,), "exp")

    def log(self) -> "Tensor":
        a = self.data
        return Tensor.from_op(np.log(a), (self,), lambda g: (g / a,), "log")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor.from_op(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    # ------------------------------------------------------------------
    # Reductions and shape ops
    # ------------------------------------------------------------------

    def sum(
        self, axis: Optional[Union[int, tuple[int, ...]]] = None, keepdims: bool = False
    ) -> "Tensor":
        shape = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward, "sum")

    def mean(
        self, axis: Optional[Union[int, tuple[int, ...]]] = None, keepdims: bool = False
    ) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return Tensor.from_op(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(original),), "reshape"
        )

    def flatten_batch(self) -> "Tensor":
        """Collapse every non-batch axis into one."""
        return self.reshape(self.shape[0], -1)

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise DimensionError(f"transpose needs a 2-D tensor, got shape {self.shape}")
        return Tensor.from_op(self.data.T, (self,), lambda g: (g.T,), "transpose")

    def __matmul__(self, other: Operand) -> "Tensor":
        other = as_tensor(other)
        if self.ndim != 2 or other.ndim != 2:
            raise DimensionError(
                f"matmul needs 2-D operands, got {self.shape} @ {other.shape}"
            )
        if self.shape[1] != other.shape[0]:
            raise DimensionError(
                f"matmul inner axes differ: left axis 1 has {self.shape[1]}, "
                f"right axis 0 has {other.shape[0]}"
            )
        a, b = self.data, other.data
        return Tensor.from_op(a @ b, (self, other), lambda g: (g @ b.T, a.T @ g), "matmul")
