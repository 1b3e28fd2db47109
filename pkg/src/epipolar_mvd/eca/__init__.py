"""Epipolar-constrained attention block."""

from .block import (
    EcaContext,
    EcaGrads,
    GeometryCache,
    cross_attention_backward,
    cross_attention_forward,
    eca_backward,
    eca_backward_views,
    eca_forward,
    eca_forward_views,
    eca_forward_with_context,
    fuse_ray_to_pixel,
    fusion_backward,
    fusion_forward,
    near_views_cross_attention,
    ray_attention_backward,
    ray_attention_forward,
    ray_self_attention,
)
from .params import EcaBlockParams, EcaConfig, init_params, load_params, save_params

__all__ = [
    "EcaBlockParams",
    "EcaConfig",
    "EcaContext",
    "EcaGrads",
    "GeometryCache",
    "cross_attention_backward",
    "cross_attention_forward",
    "eca_backward",
    "eca_backward_views",
    "eca_forward",
    "eca_forward_views",
    "eca_forward_with_context",
    "fuse_ray_to_pixel",
    "fusion_backward",
    "fusion_forward",
    "init_params",
    "load_params",
    "near_views_cross_attention",
    "ray_attention_backward",
    "ray_attention_forward",
    "ray_self_attention",
    "save_params",
]
