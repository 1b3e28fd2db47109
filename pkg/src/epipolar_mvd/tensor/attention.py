"""Scaled dot-product attention and its manual backward pass."""

from dataclasses import dataclass

import numpy as np

from ..errors import MissingContextError, ShapeError
from .core import BoolTensor, Tensor, as_tensor, softmax_backward, softmax_lastdim


@dataclass
class AttentionContext:
    """Everything ``attention_backward`` needs from a forward call."""

    q: Tensor
    k: Tensor
    v: Tensor
    weights: Tensor
    fully_masked: BoolTensor
    scale: float


@dataclass
class AttentionGrads:
    """Gradients of an attention call with respect to its inputs."""

    q: Tensor
    k: Tensor
    v: Tensor


def _check_shapes(q: Tensor, k: Tensor, v: Tensor, mask: BoolTensor | None) -> None:
    if q.ndim < 2 or k.ndim != q.ndim or v.ndim != q.ndim:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} must share rank >= 2")
    if q.shape[-1] == 0:
        raise ShapeError("attention: key dimension d must be > 0")
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} are incompatible")
    if q.shape[:-2] != k.shape[:-2] or k.shape[:-2] != v.shape[:-2]:
        raise ShapeError(f"attention: batch dims differ in q {q.shape}, k {k.shape}, v {v.shape}")
    expected = q.shape[:-1] + (k.shape[-2],)
    if mask is not None and mask.shape != expected:
        raise ShapeError(f"attention: mask {mask.shape} does not match logits {expected}")


def attention_forward(
    q: Tensor, k: Tensor, v: Tensor, mask: BoolTensor | None = None
) -> tuple[Tensor, AttentionContext]:
    """
    Single-head scaled dot-product attention over the last two dimensions.

    Leading dimensions are treated as a batch, so one call handles every pixel
    of a feature map at once.

    Args:
        q: Queries [..., Lq, d]
        k: Keys [..., Lk, d]
        v: Values [..., Lk, dv]
        mask: Optional boolean [..., Lq, Lk]; False entries get weight exactly 0

    Returns:
        Tuple of (output [..., Lq, dv], context for ``attention_backward``)
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    _check_shapes(q, k, v, mask)
    scale = 1.0 / np.sqrt(q.shape[-1])
    logits = (q @ np.swapaxes(k, -1, -2)) * scale
    weights, fully_masked = softmax_lastdim(logits, mask)
    out = weights @ v
    return out, AttentionContext(q, k, v, weights, fully_masked, scale)


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, mask: BoolTensor | None = None
) -> tuple[Tensor, Tensor]:
    """
    ``softmax(q kᵀ / sqrt(d) + mask) v``.

    Returns:
        Tuple of (output [..., Lq, dv], weights [..., Lq, Lk])
    """
    out, context = attention_forward(q, k, v, mask)
    return out, context.weights


def attention_backward(context: AttentionContext | None, grad_out: Tensor) -> AttentionGrads:
    """
    Vector-Jacobian products of ``attention_forward`` for q, k and v.

    Raises:
        MissingContextError: If no forward context is supplied
    """
    if context is None:
        raise MissingContextError("attention_backward called without a forward context")
    weights = context.weights
    grad_v = np.swapaxes(weights, -1, -2) @ grad_out
    grad_weights = grad_out @ np.swapaxes(context.v, -1, -2)
    grad_logits = softmax_backward(weights, grad_weights, context.fully_masked) * context.scale
    grad_q = grad_logits @ context.k
    grad_k = np.swapaxes(grad_logits, -1, -2) @ context.q
    return AttentionGrads(q=grad_q, k=grad_k, v=grad_v)
