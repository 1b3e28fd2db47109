"""Plücker ray encodings and ray-relative canonical frames."""

from .canonical import (
    CanonicalFrame,
    canonical_frames,
    canonical_transform,
    canonicalize_neighbor_rays,
)
from .injection import inject_ray_encoding, inject_ray_encoding_backward, neighbor_ray_plucker
from .plucker import (
    PLUCKER_DIM,
    HarmonicConfig,
    PluckerRay,
    harmonic_encode,
    plucker_batch,
    plucker_coordinates,
)

__all__ = [
    "PLUCKER_DIM",
    "CanonicalFrame",
    "HarmonicConfig",
    "PluckerRay",
    "canonical_frames",
    "canonical_transform",
    "canonicalize_neighbor_rays",
    "harmonic_encode",
    "inject_ray_encoding",
    "inject_ray_encoding_backward",
    "neighbor_ray_plucker",
    "plucker_batch",
    "plucker_coordinates",
]
