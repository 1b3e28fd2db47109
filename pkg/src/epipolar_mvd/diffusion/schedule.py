"""DDPM noise schedule, forward diffusion and the reverse posterior step.

Timesteps are 1-based: ``betas[t - 1]`` is beta_t and ``alpha_bar(0) == 1``.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, SampleRangeError
from ..tensor import DeterministicRng, Tensor, as_tensor


@dataclass(frozen=True)
class NoiseSchedule:
    """Variances ``beta_1..beta_T`` and the products derived from them."""

    betas: Tensor

    def __post_init__(self):
        betas = as_tensor(self.betas).reshape(-1)
        if betas.size == 0:
            raise ConfigurationError("A schedule needs at least one step")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ConfigurationError("Every beta must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)

    @property
    def timesteps(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> Tensor:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> Tensor:
        """``alpha_bar_t`` for ``t = 1..T``."""
        return np.cumprod(self.alphas)

    @property
    def posterior_variance(self) -> Tensor:
        """``beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)`` for ``t = 1..T``."""
        alpha_bars = self.alpha_bars
        previous = np.concatenate([[1.0], alpha_bars[:-1]])
        return self.betas * (1.0 - previous) / (1.0 - alpha_bars)

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.timesteps:
            raise SampleRangeError(f"Timestep {t} outside 1..{self.timesteps}")

    def beta(self, t: int) -> float:
        self.check_step(t)
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        """``alpha_bar_t``, with ``alpha_bar_0 = 1``."""
        if t == 0:
            return 1.0
        self.check_step(t)
        return float(self.alpha_bars[t - 1])

    def to_dict(self) -> dict:
        return {
            "timesteps": self.timesteps,
            "beta_start": float(self.betas[0]),
            "beta_end": float(self.betas[-1]),
        }


def linear_beta_schedule(timesteps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """
    Betas evenly spaced from ``beta_start`` to ``beta_end`` inclusive.

    Raises:
        ConfigurationError: If ``timesteps < 1`` or not ``0 < beta_start <= beta_end < 1``
    """
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigurationError(
            f"Need 0 < beta_start <= beta_end < 1, got {beta_start}..{beta_end}"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, timesteps))


def forward_diffuse_step(
    z_prev: Tensor, t: int, schedule: NoiseSchedule, rng: DeterministicRng
) -> Tensor:
    """One Markov step ``z_t = sqrt(1 - beta_t) z_{t-1} + sqrt(beta_t) eps``."""
    beta = schedule.beta(t)
    noise = rng.normal(np.shape(z_prev))
    return np.sqrt(1.0 - beta) * z_prev + np.sqrt(beta) * noise


def forward_diffuse_closed(z0: Tensor, t: int, schedule: NoiseSchedule, noise: Tensor) -> Tensor:
    """``z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps`` for a given ``eps``."""
    schedule.check_step(t)
    alpha_bar = schedule.alpha_bar(t)
    return np.sqrt(alpha_bar) * z0 + np.sqrt(1.0 - alpha_bar) * noise


def posterior_step(
    z_t: Tensor,
    t: int,
    predicted_noise: Tensor,
    schedule: NoiseSchedule,
    noise: Tensor | None = None,
) -> Tensor:
    """
    Ancestral step from ``z_t`` to ``z_{t-1}`` given a noise prediction.

    ``noise`` scales with the posterior standard deviation; pass ``None`` for
    the posterior mean. No noise is added on the final step (``t == 1``).
    """
    beta = schedule.beta(t)
    alpha_bar = schedule.alpha_bar(t)
    mean = (z_t - beta / np.sqrt(1.0 - alpha_bar) * predicted_noise) / np.sqrt(1.0 - beta)
    if noise is None or t == 1:
        return mean
    return mean + np.sqrt(schedule.posterior_variance[t - 1]) * noise


def sample_timestep(schedule: NoiseSchedule, rng: DeterministicRng) -> int:
    """Uniform draw from ``1..T``."""
    return int(rng.integers(1, schedule.timesteps + 1))
