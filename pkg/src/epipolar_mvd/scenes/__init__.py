"""Synthetic scenes, raycast renders and the correspondence oracle."""

from .dataset import (
    MultiviewRenderSet,
    load_render_set,
    make_dataset,
    save_render_set,
    write_ppm,
)
from .oracle import CorrespondenceReport, oracle_correspondence_check
from .scene import SyntheticScene, raycast_render

__all__ = [
    "CorrespondenceReport",
    "MultiviewRenderSet",
    "SyntheticScene",
    "load_render_set",
    "make_dataset",
    "oracle_correspondence_check",
    "raycast_render",
    "save_render_set",
    "write_ppm",
]
