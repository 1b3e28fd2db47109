"""Dense float64 tensors, attention primitives, gradient checking and ``.etz`` files."""

from .attention import (
    AttentionContext,
    AttentionGrads,
    attention_backward,
    attention_forward,
    scaled_dot_attention,
)
from .core import (
    BoolTensor,
    LinearParams,
    Tensor,
    as_tensor,
    glorot_uniform,
    linear,
    linear_backward,
    matmul,
    require_shape,
    softmax_backward,
    softmax_lastdim,
)
from .gradcheck import finite_diff_check, numeric_gradient, relative_error
from .io import decode_tensor, encode_tensor, tensor_read, tensor_write
from .rng import DeterministicRng

__all__ = [
    "Tensor",
    "BoolTensor",
    "as_tensor",
    "require_shape",
    "matmul",
    "softmax_lastdim",
    "softmax_backward",
    "LinearParams",
    "glorot_uniform",
    "linear",
    "linear_backward",
    "AttentionContext",
    "AttentionGrads",
    "attention_forward",
    "attention_backward",
    "scaled_dot_attention",
    "finite_diff_check",
    "numeric_gradient",
    "relative_error",
    "encode_tensor",
    "decode_tensor",
    "tensor_write",
    "tensor_read",
    "DeterministicRng",
]
