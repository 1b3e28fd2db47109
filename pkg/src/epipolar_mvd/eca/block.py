"""Epipolar-constrained attention: forward pass, staged oracles and manual backward.

For one target view the block

1. gathers the target's epipolar sample volume ``[K, P, S, C]``,
2. adds the ray encodings of every sample,
3. lets each target sample attend to the ``(K-1) * S`` reference samples of its
   own pixel (near-views cross-attention),
4. lets the S samples of each ray attend to each other (ray self-attention),
5. fuses the S samples into one feature per pixel with learned softmax weights,
6. adds the zero-initialised output projection of the result to the target map.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..encoding import harmonic_encode
from ..errors import MissingContextError, ShapeError
from ..geometry import ViewLayout
from ..sampling import (
    EpipolarSampleMap,
    SampleGeometry,
    build_sample_geometry,
    gather_sample_features,
    scatter_sample_grads,
)
from ..tensor import (
    AttentionContext,
    BoolTensor,
    Tensor,
    attention_backward,
    attention_forward,
    linear,
    linear_backward,
    softmax_backward,
    softmax_lastdim,
)
from ..utils.logger import get_logger
from .params import EcaBlockParams, EcaConfig

logger = get_logger(__name__)


class GeometryCache:
    """Sample geometry keyed by (layout, target, grid size, block config)."""

    def __init__(self):
        self._entries: dict[tuple, SampleGeometry] = {}

    def get(
        self, layout: ViewLayout, target_index: int, height: int, width: int, config: EcaConfig
    ) -> SampleGeometry:
        key = (
            layout.fingerprint,
            target_index,
            height,
            width,
            config.k,
            config.samples,
            config.near,
            config.far,
            config.use_ray_relative,
        )
        if key not in self._entries:
            self._entries[key] = _build_geometry(layout, target_index, height, width, config)
        return self._entries[key]

    def __len__(self) -> int:
        return len(self._entries)


def _build_geometry(
    layout: ViewLayout, target_index: int, height: int, width: int, config: EcaConfig
) -> SampleGeometry:
    return build_sample_geometry(
        layout,
        target_index,
        height,
        width,
        config.k,
        config.samples,
        near=config.near,
        far=config.far,
        ray_relative=config.use_ray_relative,
    )


@dataclass
class CrossAttentionContext:
    target: Tensor  # [P, S, C]
    keys_in: Tensor | None  # [P, (K-1) S, C]; None when K == 1
    attention: AttentionContext | None
    fully_masked: BoolTensor | None  # [P, S]
    mixed: Tensor | None  # attention result after the passthrough substitution


@dataclass
class RayAttentionContext:
    inputs: Tensor  # [P, S, C]
    attention: AttentionContext
    attended: Tensor


@dataclass
class FusionContext:
    inputs: Tensor  # [P, S, C]
    weights: Tensor  # [P, S]


def cross_attention_forward(
    samples: Tensor, valid: BoolTensor, params: EcaBlockParams
) -> tuple[Tensor, CrossAttentionContext]:
    """
    Near-views cross-attention on a sample volume.

    Args:
        samples: Volume features [K, P, S, C]; slot 0 is the target view
        valid: Sample validity [K, P, S]
        params: Block parameters

    Returns:
        Tuple of (updated target samples [P, S, C], context for backward)
    """
    if samples.ndim != 4 or valid.shape != samples.shape[:3]:
        raise ShapeError(
            f"cross-attention: samples {samples.shape} and valid {valid.shape} disagree"
        )
    k, p, s, c = samples.shape
    target = samples[0]
    if k == 1:
        return target.copy(), CrossAttentionContext(target, None, None, None, None)

    keys_in = samples[1:].transpose(1, 0, 2, 3).reshape(p, (k - 1) * s, c)
    key_valid = valid[1:].transpose(1, 0, 2).reshape(p, (k - 1) * s)
    mask = np.broadcast_to(key_valid[:, None, :], (p, s, (k - 1) * s))

    q = linear(target, params.cross_q)
    keys = linear(keys_in, params.cross_k)
    values = linear(keys_in, params.cross_v)
    attended, attention = attention_forward(q, keys, values, mask)
    fully_masked = attention.fully_masked
    if fully_masked.any():
        logger.debug(f"{int(fully_masked.sum())} target samples have no valid reference sample")
        attended = np.where(fully_masked[..., None], linear(target, params.cross_v), attended)

    out = target + linear(attended, params.cross_out)
    return out, CrossAttentionContext(target, keys_in, attention, fully_masked, attended)


def cross_attention_backward(
    context: CrossAttentionContext,
    grad_out: Tensor,
    params: EcaBlockParams,
    grads: EcaBlockParams,
) -> Tensor:
    """
    Backward of ``cross_attention_forward``.

    Fills ``grads.cross_*`` and returns the gradient of the sample volume [K, P, S, C].
    """
    target = context.target
    if context.keys_in is None:
        return grad_out[None].copy()
    assert context.attention is not None and context.fully_masked is not None
    assert context.mixed is not None

    p, s, c = target.shape
    k = context.keys_in.shape[1] // s + 1

    grad_mixed, grads.cross_out = linear_backward(context.mixed, params.cross_out, grad_out)
    fully = context.fully_masked[..., None]
    grad_attended = np.where(fully, 0.0, grad_mixed)
    grad_own = np.where(fully, grad_mixed, 0.0)

    attention_grads = attention_backward(context.attention, grad_attended)
    grad_target = grad_out.copy()
    grad_x, grads.cross_q = linear_backward(target, params.cross_q, attention_grads.q)
    grad_target += grad_x
    grad_keys, grads.cross_k = linear_backward(context.keys_in, params.cross_k, attention_grads.k)
    grad_x, grad_v_keys = linear_backward(context.keys_in, params.cross_v, attention_grads.v)
    grad_keys += grad_x
    grad_x, grad_v_own = linear_backward(target, params.cross_v, grad_own)
    grad_target += grad_x
    grads.cross_v = grad_v_keys + grad_v_own

    grad_samples = np.empty((k, p, s, c))
    grad_samples[0] = grad_target
    grad_samples[1:] = grad_keys.reshape(p, k - 1, s, c).transpose(1, 0, 2, 3)
    return grad_samples


def ray_attention_forward(
    v_tilde: Tensor, params: EcaBlockParams
) -> tuple[Tensor, RayAttentionContext]:
    """Self-attention across the S samples of each ray, added residually."""
    if v_tilde.ndim != 3:
        raise ShapeError(f"ray self-attention: expected [P, S, C], got {v_tilde.shape}")
    q = linear(v_tilde, params.ray_q)
    keys = linear(v_tilde, params.ray_k)
    values = linear(v_tilde, params.ray_v)
    attended, attention = attention_forward(q, keys, values)
    out = v_tilde + linear(attended, params.ray_out)
    return out, RayAttentionContext(v_tilde, attention, attended)


def ray_attention_backward(
    context: RayAttentionContext,
    grad_out: Tensor,
    params: EcaBlockParams,
    grads: EcaBlockParams,
) -> Tensor:
    grad_attended, grads.ray_out = linear_backward(context.attended, params.ray_out, grad_out)
    attention_grads = attention_backward(context.attention, grad_attended)
    grad_in = grad_out.copy()
    grad_x, grads.ray_q = linear_backward(context.inputs, params.ray_q, attention_grads.q)
    grad_in += grad_x
    grad_x, grads.ray_k = linear_backward(context.inputs, params.ray_k, attention_grads.k)
    grad_in += grad_x
    grad_x, grads.ray_v = linear_backward(context.inputs, params.ray_v, attention_grads.v)
    grad_in += grad_x
    return grad_in


def fusion_forward(v_bar: Tensor, params: EcaBlockParams) -> tuple[Tensor, FusionContext]:
    """Softmax-weighted sum over the S samples of each ray."""
    if v_bar.ndim != 3:
        raise ShapeError(f"fusion: expected [P, S, C], got {v_bar.shape}")
    logits = linear(v_bar, params.fusion)[..., 0]
    weights, _ = softmax_lastdim(logits)
    fused = np.einsum("ps,psc->pc", weights, v_bar)
    return fused, FusionContext(v_bar, weights)


def fusion_backward(
    context: FusionContext,
    grad_out: Tensor,
    params: EcaBlockParams,
    grads: EcaBlockParams,
) -> Tensor:
    grad_in = context.weights[..., None] * grad_out[:, None, :]
    grad_weights = np.einsum("psc,pc->ps", context.inputs, grad_out)
    grad_logits = softmax_backward(context.weights, grad_weights)
    grad_x, grads.fusion = linear_backward(context.inputs, params.fusion, grad_logits[..., None])
    return grad_in + grad_x


def near_views_cross_attention(volume: EpipolarSampleMap, params: EcaBlockParams) -> Tensor:
    """Target samples ``[P, S, C]`` after attending to the reference samples of their ray."""
    out, _ = cross_attention_forward(volume.features, volume.valid, params)
    return out


def ray_self_attention(v_tilde: Tensor, params: EcaBlockParams) -> Tensor:
    out, _ = ray_attention_forward(v_tilde, params)
    return out


def fuse_ray_to_pixel(v_bar: Tensor, params: EcaBlockParams) -> Tensor:
    fused, _ = fusion_forward(v_bar, params)
    return fused


@dataclass
class EcaContext:
    """Saved forward state of one ``eca_forward_with_context`` call."""

    params: EcaBlockParams
    config: EcaConfig
    geometry: SampleGeometry
    view_count: int
    map_shape: tuple[int, int, int]
    encoded: Tensor | None  # harmonic ray encodings [K, P, S, 2*L*6]
    cross: CrossAttentionContext
    ray: RayAttentionContext
    fusion: FusionContext
    fused: Tensor  # [P, C]


@dataclass
class EcaGrads:
    """Gradients of one block call."""

    params: EcaBlockParams
    maps: list[Tensor]


def _check_inputs(feature_maps: Sequence[Tensor], layout: ViewLayout, config: EcaConfig) -> None:
    if len(feature_maps) != len(layout):
        raise ShapeError(f"{len(feature_maps)} feature maps for a {len(layout)}-view layout")
    shapes = {tuple(m.shape) for m in feature_maps}
    if len(shapes) != 1:
        raise ShapeError(f"Feature maps differ in shape: {sorted(shapes)}")
    shape = next(iter(shapes))
    if len(shape) != 3 or shape[2] != config.channels:
        raise ShapeError(f"Feature maps {shape} do not have {config.channels} channels")


def eca_forward_with_context(
    feature_maps: Sequence[Tensor],
    layout: ViewLayout,
    target_index: int,
    config: EcaConfig,
    params: EcaBlockParams,
    cache: GeometryCache | None = None,
) -> tuple[Tensor, EcaContext]:
    """
    Run the block for one target view.

    Args:
        feature_maps: One [H, W, C] map per layout view
        layout: Cameras of the maps
        target_index: View whose map is updated
        config: Block configuration
        params: Block parameters
        cache: Optional geometry cache shared across calls

    Returns:
        Tuple of (updated target map [H, W, C], context for ``eca_backward``)
    """
    _check_inputs(feature_maps, layout, config)
    height, width, channels = feature_maps[0].shape
    if cache is not None:
        geometry = cache.get(layout, target_index, height, width, config)
    else:
        geometry = _build_geometry(layout, target_index, height, width, config)

    samples = gather_sample_features(geometry, feature_maps)
    encoded = None
    if config.use_plucker:
        encoded = harmonic_encode(geometry.plucker, config.harmonic)
        injection = linear(encoded, params.ray_encoding)
        samples = samples + np.where(geometry.valid[..., None], injection, 0.0)

    v_tilde, cross = cross_attention_forward(samples, geometry.valid, params)
    v_bar, ray = ray_attention_forward(v_tilde, params)
    fused, fusion = fusion_forward(v_bar, params)
    update = linear(fused, params.output).reshape(height, width, channels)
    out = feature_maps[target_index] + update

    context = EcaContext(
        params=params,
        config=config,
        geometry=geometry,
        view_count=len(feature_maps),
        map_shape=(height, width, channels),
        encoded=encoded,
        cross=cross,
        ray=ray,
        fusion=fusion,
        fused=fused,
    )
    return out, context


def eca_forward(
    feature_maps: Sequence[Tensor],
    layout: ViewLayout,
    target_index: int,
    config: EcaConfig,
    params: EcaBlockParams,
    cache: GeometryCache | None = None,
) -> Tensor:
    """Updated target map ``[H, W, C]``; see ``eca_forward_with_context``."""
    out, _ = eca_forward_with_context(feature_maps, layout, target_index, config, params, cache)
    return out


def eca_backward(context: EcaContext | None, grad_out: Tensor) -> EcaGrads:
    """
    Gradients of one block call for every parameter and every input map.

    Reference maps receive gradient through the bilinear gather; the target map
    additionally through the residual connection.

    Raises:
        MissingContextError: If no forward context is supplied
    """
    if context is None:
        raise MissingContextError("eca_backward called without a forward context")
    if grad_out.shape != context.map_shape:
        raise ShapeError(f"eca_backward: grad {grad_out.shape} vs output {context.map_shape}")
    params = context.params
    grads = params.zeros_like()
    geometry = context.geometry
    height, width, channels = context.map_shape

    grad_fused, grads.output = linear_backward(
        context.fused, params.output, grad_out.reshape(height * width, channels)
    )
    grad_v_bar = fusion_backward(context.fusion, grad_fused, params, grads)
    grad_v_tilde = ray_attention_backward(context.ray, grad_v_bar, params, grads)
    grad_samples = cross_attention_backward(context.cross, grad_v_tilde, params, grads)

    if context.encoded is not None:
        masked = np.where(geometry.valid[..., None], grad_samples, 0.0)
        _, grads.ray_encoding = linear_backward(context.encoded, params.ray_encoding, masked)

    map_grads = scatter_sample_grads(geometry, grad_samples, context.view_count)
    map_grads[geometry.target_index] = map_grads[geometry.target_index] + grad_out
    return EcaGrads(grads, map_grads)


def eca_forward_views(
    feature_maps: Sequence[Tensor],
    layout: ViewLayout,
    config: EcaConfig,
    params: EcaBlockParams,
    cache: GeometryCache | None = None,
) -> tuple[list[Tensor], list[EcaContext]]:
    """Run the block with every view as the target in turn, all reading the same inputs."""
    outputs = []
    contexts = []
    for target_index in range(len(layout)):
        out, context = eca_forward_with_context(
            feature_maps, layout, target_index, config, params, cache
        )
        outputs.append(out)
        contexts.append(context)
    return outputs, contexts


def eca_backward_views(contexts: Sequence[EcaContext], grad_outs: Sequence[Tensor]) -> EcaGrads:
    """Backward of ``eca_forward_views``: gradients summed over all target views."""
    if len(contexts) != len(grad_outs):
        raise ShapeError(f"{len(grad_outs)} gradients for {len(contexts)} block calls")
    total: EcaGrads | None = None
    for context, grad_out in zip(contexts, grad_outs):
        grads = eca_backward(context, grad_out)
        if total is None:
            total = grads
        else:
            total = EcaGrads(
                total.params + grads.params,
                [a + b for a, b in zip(total.maps, grads.maps)],
            )
    if total is None:
        raise MissingContextError("eca_backward_views called without any forward context")
    return total
