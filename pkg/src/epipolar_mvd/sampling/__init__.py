"""Epipolar sampling of reference-view features along target rays."""

from ..geometry import Ray, RayBundle
from .bilinear import bilinear_gather, bilinear_sample, bilinear_scatter, bilinear_taps, in_bounds
from .volume import (
    EpipolarSampleMap,
    SampleGeometry,
    build_sample_geometry,
    build_sample_volume,
    default_near_far,
    gather_sample_features,
    load_sample_map,
    patch_centers,
    rays_from_feature_map,
    reproject_samples,
    sample_depths,
    save_sample_map,
    scatter_sample_grads,
)

__all__ = [
    "EpipolarSampleMap",
    "Ray",
    "RayBundle",
    "SampleGeometry",
    "bilinear_gather",
    "bilinear_sample",
    "bilinear_scatter",
    "bilinear_taps",
    "build_sample_geometry",
    "build_sample_volume",
    "default_near_far",
    "gather_sample_features",
    "in_bounds",
    "load_sample_map",
    "patch_centers",
    "rays_from_feature_map",
    "reproject_samples",
    "sample_depths",
    "save_sample_map",
    "scatter_sample_grads",
]
