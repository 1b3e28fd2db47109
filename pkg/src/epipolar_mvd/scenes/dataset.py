"""Multiview render sets and their on-disk form."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ShapeError
from ..geometry import ViewLayout, read_layout_json, write_layout_json
from ..tensor import Tensor, tensor_read, tensor_write
from ..utils.logger import get_logger
from .scene import SyntheticScene, raycast_render

logger = get_logger(__name__)


@dataclass(frozen=True)
class MultiviewRenderSet:
    """One RGB image and one depth map per view of ``layout``."""

    layout: ViewLayout
    rgb: Tensor  # [N, H, W, 3]
    depth: Tensor  # [N, H, W]

    def __post_init__(self):
        if self.rgb.shape[:3] != self.depth.shape or self.rgb.shape[0] != len(self.layout):
            raise ShapeError(
                f"rgb {self.rgb.shape} and depth {self.depth.shape} "
                f"do not fit a {len(self.layout)}-view layout"
            )

    def __len__(self) -> int:
        return len(self.layout)

    @property
    def height(self) -> int:
        return int(self.depth.shape[1])

    @property
    def width(self) -> int:
        return int(self.depth.shape[2])

    def foreground(self, view: int) -> Tensor:
        return self.depth[view] > 0.0


def make_dataset(
    scene: SyntheticScene,
    layout: ViewLayout,
    height: int,
    width: int,
    shading: bool = False,
) -> MultiviewRenderSet:
    """Render ``scene`` from every view of ``layout``."""
    rgb = np.zeros((len(layout), height, width, 3))
    depth = np.zeros((len(layout), height, width))
    for view in layout:
        rgb[view.index], depth[view.index] = raycast_render(
            scene, view.intrinsics, view.pose, height, width, shading=shading
        )
    logger.debug(f"Rendered {len(layout)} {scene.kind} views at {height}x{width}")
    return MultiviewRenderSet(layout, rgb, depth)


def write_ppm(rgb: Tensor, path: Path | str) -> None:
    """Binary PPM (P6, 8-bit) of an ``[H, W, 3]`` image in ``[0, 1]``."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"write_ppm expects [H, W, 3], got {rgb.shape}")
    height, width, _ = rgb.shape
    pixels = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())


def save_render_set(renders: MultiviewRenderSet, directory: Path | str, ppm: bool = False) -> None:
    """
    Write ``rgb.etz`` ``[N, H, W, 3]``, ``depth.etz`` ``[N, H, W]`` and ``cameras.json``,
    plus one ``view_XXX.ppm`` per view when ``ppm`` is set.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensor_write(renders.rgb, directory / "rgb.etz")
    tensor_write(renders.depth, directory / "depth.etz")
    write_layout_json(renders.layout, directory / "cameras.json")
    if ppm:
        for index in range(len(renders)):
            write_ppm(renders.rgb[index], directory / f"view_{index:03d}.ppm")
    logger.info(f"Saved {len(renders)} renders to {directory}")


def load_render_set(directory: Path | str) -> MultiviewRenderSet:
    directory = Path(directory)
    return MultiviewRenderSet(
        read_layout_json(directory / "cameras.json"),
        tensor_read(directory / "rgb.etz"),
        tensor_read(directory / "depth.etz"),
    )
