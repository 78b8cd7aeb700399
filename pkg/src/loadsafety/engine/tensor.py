"""Tensor and parameter containers for the layer math in :mod:`loadsafety.engine.ops`.

A Tensor is a dense row-major numpy array plus an optional gradient buffer
of the same shape.  float32 is the working precision; float64 is the
verification precision used by the gradient checker and the exact-order
convolution path.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

DEFAULT_DTYPE = np.float32
CHECK_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operands of a layer operation do not fit together."""


class GradientError(ValueError):
    """Raised when a gradient buffer required by an update is missing."""


def _coerce(data, dtype) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    arr = np.asarray(data)
    if arr.dtype in (np.float32, np.float64):
        return arr
    return arr.astype(DEFAULT_DTYPE)


class Tensor:
    """Dense n-dimensional array with an optional grad buffer."""

    __slots__ = ("data", "grad")

    def __init__(self, data, dtype=None):
        self.data = _coerce(data, dtype)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def astype(self, dtype) -> "Tensor":
        out = Tensor(self.data.astype(dtype))
        if self.grad is not None:
            out.grad = self.grad.astype(dtype)
        return out

    def copy(self) -> "Tensor":
        out = Tensor(self.data.copy())
        if self.grad is not None:
            out.grad = self.grad.copy()
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def add_grad(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.data.shape:
            raise ShapeError(
                f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def assert_finite(self, what: str = "tensor") -> None:
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"{what} contains non-finite values")

    def __array__(self, dtype=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'unset'})"


def as_array(x) -> np.ndarray:
    """Accept a Tensor or anything array-like and hand back the ndarray."""
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x)


class ParameterSet:
    """Named parameters plus named persistent buffers (e.g. batchnorm running stats).

    Iteration order is always sorted by name, so serialization and the
    optimizer see parameters in a stable order regardless of insertion.
    Velocity buffers used by SGD-with-momentum live in their own dict and
    are not part of the checkpointed state.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.velocities: dict[str, np.ndarray] = {}

    def add_param(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate parameter name {name!r}")
        self.params[name] = tensor
        return tensor

    def add_buffer(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        self.buffers[name] = array
        return array

    def names(self) -> list[str]:
        return sorted(self.params)

    def buffer_names(self) -> list[str]:
        return sorted(self.buffers)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in sorted(self.params):
            yield name, self.params[name]

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def require_grads(self) -> None:
        for name in sorted(self.params):
            if self.params[name].grad is None:
                raise GradientError(f"parameter {name!r} has no gradient")

    def num_values(self) -> int:
        return sum(p.size for p in self.params.values())

    def __len__(self) -> int:
        return len(self.params)

    def __contains__(self, name: str) -> bool:
        return name in self.params
