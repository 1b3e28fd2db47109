"""Finite-difference verification of the ECA backward pass and the training gradient."""

from dataclasses import dataclass

import numpy as np

from ..config import DiffusionConfig
from ..diffusion import ToyDenoiser, linear_beta_schedule, mvs_loss, mvs_loss_backward
from ..eca import EcaConfig, GeometryCache, eca_backward, eca_forward_with_context, init_params
from ..encoding import HarmonicConfig
from ..errors import ConfigurationError
from ..geometry import generate_layout, subset_layout
from ..tensor import DeterministicRng, finite_diff_check
from ..utils.logger import get_logger
from ..utils.metrics import MetricsCollector

logger = get_logger(__name__)

ECA_THRESHOLD = 1e-4
TRAIN_THRESHOLD = 1e-3
CORRUPTION = 1e-2


@dataclass(frozen=True)
class GradcheckSize:
    views: int
    map_size: int
    channels: int
    k: int
    samples: int


SIZES = {
    "micro": GradcheckSize(views=3, map_size=2, channels=2, k=2, samples=3),
    "small": GradcheckSize(views=4, map_size=4, channels=4, k=3, samples=4),
}


def _close_views(count: int):
    return subset_layout(generate_layout((30.0,), 16), list(range(count)))


def _eca_checks(
    size: GradcheckSize, rng: DeterministicRng, corrupt: bool
) -> list[tuple[str, float]]:
    layout = _close_views(size.views)
    config = EcaConfig(
        k=size.k, samples=size.samples, channels=size.channels, harmonic=HarmonicConfig(2)
    )
    params = init_params(rng, config, zero_output=False)
    shape = (size.map_size, size.map_size, size.channels)
    maps = [rng.normal(shape) for _ in range(size.views)]
    weights = rng.normal(shape)
    target = 0
    cache = GeometryCache()

    def loss() -> float:
        out, _ = eca_forward_with_context(maps, layout, target, config, params, cache)
        return float(np.sum(out * weights))

    _, context = eca_forward_with_context(maps, layout, target, config, params)
    grads = eca_backward(context, weights)

    results = []
    for name, tensor in params.tensors():
        layer_name, field_name = name.split(".")
        analytic = getattr(getattr(grads.params, layer_name), field_name)
        if corrupt:
            analytic = analytic + CORRUPTION
        results.append((f"eca.{name}", finite_diff_check(lambda _: loss(), tensor, analytic)))
    for view, feature_map in enumerate(maps):
        error = finite_diff_check(lambda _: loss(), feature_map, grads.maps[view])
        results.append((f"eca.map_{view}", error))
    return results


def _train_checks(rng: DeterministicRng, corrupt: bool) -> list[tuple[str, float]]:
    """End-to-end loss gradient on two views, 4x4 latents, 4 channels and T = 10."""
    config = DiffusionConfig(
        timesteps=10, latent_channels=4, hidden_channels=4, latent_size=4, views=2
    )
    eca_config = EcaConfig(k=2, samples=3, channels=4, harmonic=HarmonicConfig(2))
    schedule = linear_beta_schedule(config.timesteps, config.beta_start, config.beta_end)
    layout = _close_views(2)
    denoiser = ToyDenoiser.create(config, eca_config, seed=int(rng.integers(0, 2**31)))
    denoiser.eca_mid = init_params(rng, eca_config, zero_output=False)
    denoiser.eca_up = init_params(rng, eca_config, zero_output=False)
    z0 = rng.normal((2, 4, 4, 4))
    noise = rng.normal(z0.shape)
    t = 6

    def loss() -> float:
        value, _ = mvs_loss(denoiser, z0, schedule, layout, 0, rng, t=t, noise=noise)
        return value

    _, context = mvs_loss(denoiser, z0, schedule, layout, 0, rng, t=t, noise=noise)
    grads = mvs_loss_backward(denoiser, context)

    results = []
    for block, params in denoiser.trainable().items():
        block_grads = getattr(grads, block)
        for name, tensor in params.tensors():
            layer_name, field_name = name.split(".")
            analytic = getattr(getattr(block_grads, layer_name), field_name)
            if corrupt:
                analytic = analytic + CORRUPTION
            error = finite_diff_check(lambda _: loss(), tensor, analytic)
            results.append((f"train.{block}.{name}", error))
    return results


def run_gradcheck(
    size: str = "micro",
    seed: int = 0,
    corrupt: bool = False,
    metrics: MetricsCollector | None = None,
) -> MetricsCollector:
    """
    Check every ECA parameter and input-map gradient, then the end-to-end training
    gradient, against central differences. One metrics stage per tensor.

    ``corrupt`` adds a constant to every analytic gradient, which must make the run fail.

    Raises:
        ConfigurationError: If ``size`` is not ``micro`` or ``small``
    """
    if size not in SIZES:
        raise ConfigurationError(f"Unknown gradcheck size {size!r}; choose from {sorted(SIZES)}")
    metrics = metrics or MetricsCollector()
    groups = (
        ("eca", ECA_THRESHOLD, _eca_checks(SIZES[size], DeterministicRng(seed, 1), corrupt)),
        ("train", TRAIN_THRESHOLD, _train_checks(DeterministicRng(seed, 2), corrupt)),
    )
    for group, threshold, results in groups:
        for name, error in results:
            stage = metrics.start_stage(name, group)
            metrics.end_stage(stage, bool(error <= threshold), None, error, threshold)
        worst = max((m.residual or 0.0) for m in metrics.metrics if m.group == group)
        logger.info(f"Gradcheck {group} ({size}): max relative error {worst:.3g}")
    return metrics
