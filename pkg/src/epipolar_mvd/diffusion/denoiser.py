"""A two-level toy noise predictor with ECA blocks at the mid and up levels.

Per view the frozen base computes::

    h0 = tanh(in_proj(z_t) + time[t] + cond)          # H x W
    m  = tanh(mid_proj(avgpool2(h0)))                  # H/2 x W/2
    m' = ECA_mid(m over all views)
    u  = tanh(up_proj(upsample2(m') + h0))             # H x W
    u' = ECA_up(u over all views)
    eps_hat = skip[t] * z_t + out_proj(u')

``skip[t]`` is the least-squares gain from ``z_t`` to its noise when the clean
latents have standard deviation ``sigma_data``, so the base starts from a
sensible noise estimate and the network only learns the residual.

Only the two ECA blocks are trainable; at initialisation both are identities,
so every view is denoised independently of the others.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import numpy as np

from ..config import DiffusionConfig
from ..eca import (
    EcaBlockParams,
    EcaConfig,
    EcaContext,
    GeometryCache,
    eca_backward_views,
    eca_forward_views,
    init_params,
    load_params,
    save_params,
)
from ..encoding import HarmonicConfig, harmonic_encode
from ..errors import ShapeError
from ..geometry import ViewLayout, relative_transform
from ..tensor import (
    DeterministicRng,
    LinearParams,
    Tensor,
    glorot_uniform,
    linear,
    linear_backward,
)
from ..utils.logger import get_logger
from .schedule import linear_beta_schedule

logger = get_logger(__name__)

POSE_HARMONIC = HarmonicConfig(num_frequencies=2, base_frequency=1.0)
POSE_DIM = 12  # flattened relative R (9) and T (3)
TRAINABLE_BLOCKS = ("eca_mid", "eca_up")


@dataclass(frozen=True)
class ConditionEmbedding:
    """One conditioning vector per view ``[N, hidden]``."""

    vectors: Tensor
    input_index: int

    def __len__(self) -> int:
        return self.vectors.shape[0]


class NoisePredictor(Protocol):
    """Anything that can predict per-view noise for ``mvs_loss`` and ``sample_multiview``."""

    latent_shape: tuple[int, int, int]

    def condition(
        self, layout: ViewLayout, input_index: int, input_latent: Tensor
    ) -> ConditionEmbedding: ...

    def forward(
        self, z_t: Tensor, t: int, cond: ConditionEmbedding, layout: ViewLayout
    ) -> tuple[Tensor, Any]: ...


def time_embedding_table(timesteps: int, channels: int) -> Tensor:
    """Sinusoidal table ``[T + 1, channels]``; row ``t`` embeds timestep ``t``."""
    steps = np.arange(timesteps + 1)[:, None]
    half = (channels + 1) // 2
    rates = 1.0 / (10.0 ** (np.arange(half) / max(half, 1)))
    angles = steps * rates[None, :] * (math.pi / max(timesteps, 1))
    table = np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
    return table[:, :channels]


def skip_gain_table(config: DiffusionConfig) -> Tensor:
    """
    ``[T + 1]`` gains ``sqrt(1 - ab_t) / (ab_t * sigma_data**2 + 1 - ab_t)``; row 0 is unused.

    ``ab_t`` is alpha_bar of the configured linear schedule.
    """
    schedule = linear_beta_schedule(config.timesteps, config.beta_start, config.beta_end)
    alpha_bars = schedule.alpha_bars
    noise_var = 1.0 - alpha_bars
    gains = np.sqrt(noise_var) / (alpha_bars * config.sigma_data**2 + noise_var)
    return np.concatenate([[0.0], gains])


def avgpool2(x: Tensor) -> Tensor:
    """2x2 mean pooling of ``[N, H, W, C]``."""
    n, h, w, c = x.shape
    return x.reshape(n, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of ``[N, H, W, C]``."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(grad: Tensor) -> Tensor:
    n, h, w, c = grad.shape
    return grad.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


@dataclass
class DenoiserContext:
    """Forward state needed by ``ToyDenoiser.backward``."""

    hidden: Tensor  # h0
    upsampled: Tensor  # upsample2(m')
    up_features: Tensor  # u
    up_output: Tensor  # u'
    mid_contexts: list[EcaContext]
    up_contexts: list[EcaContext]


@dataclass
class DenoiserGrads:
    eca_mid: EcaBlockParams
    eca_up: EcaBlockParams


@dataclass
class ToyDenoiser:
    """Frozen two-level base network plus two trainable ECA blocks."""

    config: DiffusionConfig
    eca_config: EcaConfig
    in_proj: LinearParams
    mid_proj: LinearParams
    up_proj: LinearParams
    out_proj: LinearParams
    cond_proj: LinearParams
    time_table: Tensor
    skip_table: Tensor
    eca_mid: EcaBlockParams
    eca_up: EcaBlockParams
    seed: int = 0
    cache: GeometryCache = field(default_factory=GeometryCache, repr=False, compare=False)

    @classmethod
    def create(
        cls, config: DiffusionConfig, eca_config: EcaConfig, seed: int = 0
    ) -> "ToyDenoiser":
        """
        Build a denoiser whose frozen base is drawn from ``seed``.

        The base draws come from stream 0 and the ECA blocks from stream 1, so the
        base of a given seed is the same whatever the ECA settings.
        """
        if eca_config.channels != config.hidden_channels:
            raise ShapeError(
                f"ECA width {eca_config.channels} != hidden width {config.hidden_channels}"
            )
        base_rng = DeterministicRng(seed, stream=0)
        hidden = config.hidden_channels
        latent = config.latent_channels
        cond_dim = POSE_HARMONIC.output_dim(POSE_DIM) + latent
        eca_rng = DeterministicRng(seed, stream=1)
        return cls(
            config=config,
            eca_config=eca_config,
            in_proj=glorot_uniform(base_rng, hidden, latent),
            mid_proj=glorot_uniform(base_rng, hidden, hidden),
            up_proj=glorot_uniform(base_rng, hidden, hidden),
            out_proj=glorot_uniform(base_rng, latent, hidden),
            cond_proj=glorot_uniform(base_rng, hidden, cond_dim),
            time_table=time_embedding_table(config.timesteps, hidden),
            skip_table=skip_gain_table(config),
            eca_mid=init_params(eca_rng, eca_config),
            eca_up=init_params(eca_rng, eca_config),
            seed=seed,
        )

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        size = self.config.latent_size
        return size, size, self.config.latent_channels

    def frozen_tensors(self) -> dict[str, Tensor]:
        """Every base tensor by name; these never change during training."""
        tensors = {"time_table": self.time_table, "skip_table": self.skip_table}
        for name in ("in_proj", "mid_proj", "up_proj", "out_proj", "cond_proj"):
            layer = getattr(self, name)
            tensors[f"{name}.weight"] = layer.weight
            tensors[f"{name}.bias"] = layer.bias
        return tensors

    def trainable(self) -> dict[str, EcaBlockParams]:
        return {name: getattr(self, name) for name in TRAINABLE_BLOCKS}

    def condition(
        self, layout: ViewLayout, input_index: int, input_latent: Tensor
    ) -> ConditionEmbedding:
        """
        Per-view conditioning from the input view and each view's relative pose.

        View ``i`` gets ``cond_proj([harmonic(R_rel, T_rel), mean(input_latent)])``
        where ``(R_rel, T_rel)`` maps input-camera coordinates to camera ``i``.
        """
        input_pose = layout[input_index].pose
        pooled = input_latent.reshape(-1, input_latent.shape[-1]).mean(axis=0)
        features = []
        for view in layout:
            rel = relative_transform(input_pose, view.pose)
            pose_vector = np.concatenate([rel.rotation.reshape(-1), rel.translation])
            features.append(np.concatenate([harmonic_encode(pose_vector, POSE_HARMONIC), pooled]))
        return ConditionEmbedding(linear(np.stack(features), self.cond_proj), input_index)

    def _check(self, z_t: Tensor, cond: ConditionEmbedding, layout: ViewLayout) -> None:
        if z_t.ndim != 4 or z_t.shape[1:] != self.latent_shape:
            raise ShapeError(f"Latents {z_t.shape} do not match [N, {self.latent_shape}]")
        if z_t.shape[0] != len(layout) or len(cond) != len(layout):
            raise ShapeError(
                f"{z_t.shape[0]} latents and {len(cond)} conditions for {len(layout)} views"
            )

    def forward(
        self, z_t: Tensor, t: int, cond: ConditionEmbedding, layout: ViewLayout
    ) -> tuple[Tensor, DenoiserContext]:
        """Predict the noise in ``z_t [N, H, W, C_latent]`` at timestep ``t``."""
        self._check(z_t, cond, layout)
        pre = linear(z_t, self.in_proj) + self.time_table[t] + cond.vectors[:, None, None, :]
        hidden = np.tanh(pre)
        mid = np.tanh(linear(avgpool2(hidden), self.mid_proj))
        mid_out, mid_contexts = eca_forward_views(
            list(mid), layout, self.eca_config, self.eca_mid, self.cache
        )
        upsampled = upsample2(np.stack(mid_out))
        up_features = np.tanh(linear(upsampled + hidden, self.up_proj))
        up_out, up_contexts = eca_forward_views(
            list(up_features), layout, self.eca_config, self.eca_up, self.cache
        )
        up_output = np.stack(up_out)
        prediction = self.skip_table[t] * z_t + linear(up_output, self.out_proj)
        context = DenoiserContext(
            hidden, upsampled, up_features, up_output, mid_contexts, up_contexts
        )
        return prediction, context

    def backward(self, context: DenoiserContext, grad_out: Tensor) -> DenoiserGrads:
        """Gradients of the ECA parameters only; the base is frozen."""
        grad_up_output, _ = linear_backward(context.up_output, self.out_proj, grad_out)
        up_grads = eca_backward_views(context.up_contexts, list(grad_up_output))
        grad_up = np.stack(up_grads.maps)
        grad_pre = grad_up * (1.0 - context.up_features**2)
        grad_sum, _ = linear_backward(context.upsampled + context.hidden, self.up_proj, grad_pre)
        grad_mid = upsample2_backward(grad_sum)
        mid_grads = eca_backward_views(context.mid_contexts, list(grad_mid))
        return DenoiserGrads(eca_mid=mid_grads.params, eca_up=up_grads.params)


def toy_denoiser_forward(
    denoiser: ToyDenoiser,
    z_t: Tensor,
    t: int,
    cond: ConditionEmbedding,
    layout: ViewLayout,
) -> Tensor:
    """Noise prediction ``[N, H, W, C_latent]``."""
    prediction, _ = denoiser.forward(z_t, t, cond, layout)
    return prediction


def save_denoiser(denoiser: ToyDenoiser, directory: Path | str) -> None:
    """
    Write a checkpoint: the ECA blocks as ``.etz`` tensors plus ``denoiser.json``.

    The frozen base is fully determined by its seed and configuration and is
    rebuilt on load.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, params in denoiser.trainable().items():
        save_params(params, denoiser.eca_config, directory / name)
    manifest = {
        "seed": denoiser.seed,
        "diffusion": {
            "timesteps": denoiser.config.timesteps,
            "beta_start": denoiser.config.beta_start,
            "beta_end": denoiser.config.beta_end,
            "latent_channels": denoiser.config.latent_channels,
            "hidden_channels": denoiser.config.hidden_channels,
            "latent_size": denoiser.config.latent_size,
            "views": denoiser.config.views,
            "latent_scale": denoiser.config.latent_scale,
            "sigma_data": denoiser.config.sigma_data,
        },
        "eca": denoiser.eca_config.to_dict(),
    }
    (directory / "denoiser.json").write_text(json.dumps(manifest, indent=2))
    logger.info(f"Saved denoiser checkpoint to {directory}")


def load_denoiser(directory: Path | str) -> ToyDenoiser:
    """Rebuild a denoiser saved by ``save_denoiser``."""
    directory = Path(directory)
    manifest = json.loads((directory / "denoiser.json").read_text())
    config = DiffusionConfig(**manifest["diffusion"])
    eca_config = EcaConfig.from_dict(manifest["eca"])
    denoiser = ToyDenoiser.create(config, eca_config, seed=int(manifest["seed"]))
    for name in TRAINABLE_BLOCKS:
        params, _ = load_params(directory / name)
        params.validate(eca_config)
        setattr(denoiser, name, params)
    return denoiser
