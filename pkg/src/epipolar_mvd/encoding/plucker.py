"""Plücker line coordinates and their harmonic embedding."""

import math
from dataclasses import dataclass

import numpy as np

from ..config import EncodingConfig
from ..errors import ConfigurationError
from ..geometry import Ray
from ..tensor import Tensor, as_tensor
from ..utils.logger import get_logger

logger = get_logger(__name__)

PLUCKER_DIM = 6


@dataclass(frozen=True)
class PluckerRay:
    """Line ``(m, d)`` with moment ``m = o x d`` and unit direction ``d``."""

    moment: Tensor
    direction: Tensor
    renormalized: bool = False

    @property
    def vector(self) -> Tensor:
        return np.concatenate([self.moment, self.direction])


@dataclass(frozen=True)
class HarmonicConfig:
    """Octave frequencies ``base_frequency * 2**l`` for ``l < num_frequencies``."""

    num_frequencies: int = 4
    base_frequency: float = math.pi

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise ConfigurationError(f"num_frequencies must be >= 0, got {self.num_frequencies}")

    @classmethod
    def from_config(cls, config: EncodingConfig) -> "HarmonicConfig":
        return cls(config.num_frequencies, config.base_frequency)

    @property
    def frequencies(self) -> Tensor:
        return self.base_frequency * 2.0 ** np.arange(self.num_frequencies)

    def output_dim(self, input_dim: int = PLUCKER_DIM) -> int:
        return 2 * self.num_frequencies * input_dim


def plucker_coordinates(ray: Ray) -> PluckerRay:
    """
    Plücker coordinates of ``ray``.

    A non-unit direction is normalised first and the result is flagged ``renormalized``.
    """
    direction = ray.direction
    renormalized = not ray.is_unit
    if renormalized:
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise ConfigurationError("Ray direction is the zero vector")
        logger.debug(f"Renormalizing ray direction of length {norm}")
        direction = direction / norm
    return PluckerRay(np.cross(ray.origin, direction), direction, renormalized)


def plucker_batch(origins: Tensor, directions: Tensor) -> Tensor:
    """Plücker 6-vectors ``[..., 6]`` for rays given as ``[..., 3]`` arrays."""
    origins = as_tensor(origins)
    directions = as_tensor(directions)
    directions = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    return np.concatenate([np.cross(origins, directions), directions], axis=-1)


def harmonic_encode(x: Tensor, config: HarmonicConfig) -> Tensor:
    """
    Sinusoidal embedding of the last dimension.

    For input ``[..., n]`` the output is ``[..., 2 L n]``: first the sine block,
    then the cosine block. Within a block entries are ordered frequency-major,
    component-minor, i.e. ``sin(f_0 x_0), ..., sin(f_0 x_{n-1}), sin(f_1 x_0), ...``.
    """
    x = as_tensor(x)
    scaled = x[..., None, :] * config.frequencies[:, None]
    scaled = scaled.reshape(x.shape[:-1] + (config.num_frequencies * x.shape[-1],))
    return np.concatenate([np.sin(scaled), np.cos(scaled)], axis=-1)
