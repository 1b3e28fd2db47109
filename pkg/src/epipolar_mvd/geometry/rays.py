"""Rays and ray bundles in world coordinates."""

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..tensor import Tensor, as_tensor

UNIT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Ray:
    """Half-line ``origin + t * direction``; ``direction`` is unit length when produced here."""

    origin: Tensor
    direction: Tensor

    def __post_init__(self):
        object.__setattr__(self, "origin", as_tensor(self.origin).reshape(3))
        object.__setattr__(self, "direction", as_tensor(self.direction).reshape(3))

    @property
    def is_unit(self) -> bool:
        return abs(np.linalg.norm(self.direction) - 1.0) <= UNIT_TOLERANCE

    def point_at(self, t: float) -> Tensor:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class RayBundle:
    """Array form of ``P`` rays: ``origins`` and ``directions`` are ``[P, 3]``."""

    origins: Tensor
    directions: Tensor

    def __post_init__(self):
        origins = as_tensor(self.origins)
        directions = as_tensor(self.directions)
        if origins.ndim != 2 or origins.shape[1] != 3 or origins.shape != directions.shape:
            raise ShapeError(
                f"RayBundle: origins {origins.shape} and directions {directions.shape} "
                "must both be [P, 3]"
            )
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "directions", directions)

    @classmethod
    def from_rays(cls, rays: Sequence[Ray]) -> "RayBundle":
        if not rays:
            return cls(np.zeros((0, 3)), np.zeros((0, 3)))
        return cls(np.stack([r.origin for r in rays]), np.stack([r.direction for r in rays]))

    def __len__(self) -> int:
        return self.origins.shape[0]

    def __getitem__(self, index: int) -> Ray:
        return Ray(self.origins[index], self.directions[index])

    def __iter__(self) -> Iterator[Ray]:
        return (self[i] for i in range(len(self)))

    def points_at(self, depths: Tensor) -> Tensor:
        """Points ``[P, S, 3]`` at distances ``depths`` (``[S]`` or ``[P, S]``) along each ray."""
        depths = as_tensor(depths)
        if depths.ndim == 1:
            depths = np.broadcast_to(depths, (len(self), depths.shape[0]))
        return self.origins[:, None, :] + depths[..., None] * self.directions[:, None, :]
