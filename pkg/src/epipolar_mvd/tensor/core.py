"""Dense float64 tensor primitives with hand-derived backward passes.

A tensor is a C-contiguous ``numpy.ndarray`` of dtype float64. Every primitive
here is a pure function; backward functions take exactly what the forward
function consumed and return vector-Jacobian products.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import numpy.typing as npt

from ..errors import ShapeError

if TYPE_CHECKING:
    from .rng import DeterministicRng

Tensor = npt.NDArray[np.float64]
BoolTensor = npt.NDArray[np.bool_]


def as_tensor(values) -> Tensor:
    """Convert ``values`` to a contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def require_shape(x: np.ndarray, shape: tuple, name: str) -> None:
    """Raise ``ShapeError`` unless ``x.shape`` matches ``shape``; ``None`` is a wildcard."""
    if x.ndim != len(shape) or any(s is not None and d != s for d, s in zip(x.shape, shape)):
        raise ShapeError(f"{name}: expected shape {shape}, got {x.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of two 2-D tensors, accumulated in float64.

    Args:
        a: Tensor [m, k]
        b: Tensor [k, n]

    Returns:
        Tensor [m, n]

    Raises:
        ShapeError: If either input is not 2-D or the inner dimensions differ
    """
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_lastdim(x: Tensor, mask: BoolTensor | None = None) -> tuple[Tensor, BoolTensor]:
    """
    Numerically stable softmax over the last dimension.

    Masked-out entries get weight exactly 0. A row with no unmasked entry is
    returned as uniform weights over the whole row and flagged, so the caller
    can substitute its own fallback.

    Args:
        x: Logits of any shape
        mask: Optional boolean array of the same shape; True marks usable entries

    Returns:
        Tuple of (weights, fully_masked) where ``fully_masked`` has shape ``x.shape[:-1]``
    """
    x = as_tensor(x)
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    elif mask.shape != x.shape:
        raise ShapeError(f"softmax mask shape {mask.shape} does not match logits {x.shape}")

    fully_masked = ~mask.any(axis=-1)
    row_max = np.max(np.where(mask, x, -np.inf), axis=-1, keepdims=True)
    row_max = np.where(fully_masked[..., None], 0.0, row_max)
    shifted = np.where(mask, x - row_max, -np.inf)
    exp = np.exp(shifted)
    total = exp.sum(axis=-1, keepdims=True)
    weights = exp / np.where(total > 0.0, total, 1.0)
    if fully_masked.any():
        weights[fully_masked] = 1.0 / x.shape[-1]
    return weights, fully_masked


def softmax_backward(
    weights: Tensor, grad_weights: Tensor, fully_masked: BoolTensor | None = None
) -> Tensor:
    """
    Vector-Jacobian product of ``softmax_lastdim``.

    Rows flagged as fully masked are constant in the logits and get zero gradient.
    """
    inner = np.sum(grad_weights * weights, axis=-1, keepdims=True)
    grad_logits = weights * (grad_weights - inner)
    if fully_masked is not None and fully_masked.any():
        grad_logits[fully_masked] = 0.0
    return grad_logits


@dataclass
class LinearParams:
    """Affine map over the last dimension: ``y = x @ weight.T + bias``."""

    weight: Tensor  # [out_dim, in_dim]
    bias: Tensor  # [out_dim]

    def __post_init__(self):
        self.weight = as_tensor(self.weight)
        self.bias = as_tensor(self.bias)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"LinearParams: weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @classmethod
    def zeros(cls, out_dim: int, in_dim: int) -> "LinearParams":
        """All-zero parameters."""
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))

    def zeros_like(self) -> "LinearParams":
        return LinearParams(np.zeros_like(self.weight), np.zeros_like(self.bias))

    def copy(self) -> "LinearParams":
        return LinearParams(self.weight.copy(), self.bias.copy())

    def __add__(self, other: "LinearParams") -> "LinearParams":
        return LinearParams(self.weight + other.weight, self.bias + other.bias)


def glorot_uniform(rng: "DeterministicRng", out_dim: int, in_dim: int) -> LinearParams:
    """Weights uniform in ``[-limit, limit)`` with ``limit = sqrt(6 / (in + out))``; zero bias."""
    limit = math.sqrt(6.0 / (in_dim + out_dim))
    return LinearParams(rng.uniform((out_dim, in_dim), -limit, limit), np.zeros(out_dim))


def linear(x: Tensor, params: LinearParams) -> Tensor:
    """Apply ``params`` over the last dimension of ``x``."""
    if x.shape[-1] != params.in_dim:
        raise ShapeError(
            f"linear: input {x.shape} does not match weight {params.weight.shape}"
        )
    return x @ params.weight.T + params.bias


def linear_backward(
    x: Tensor, params: LinearParams, grad_out: Tensor
) -> tuple[Tensor, LinearParams]:
    """
    Backward pass of ``linear``.

    Returns:
        Tuple of (grad_x, parameter gradients as ``LinearParams``)
    """
    rows = int(np.prod(x.shape[:-1], dtype=np.int64))
    flat_x = x.reshape(rows, params.in_dim)
    flat_g = grad_out.reshape(rows, params.out_dim)
    grad_weight = flat_g.T @ flat_x
    grad_bias = flat_g.sum(axis=0)
    grad_x = grad_out @ params.weight
    return grad_x, LinearParams(grad_weight, grad_bias)
