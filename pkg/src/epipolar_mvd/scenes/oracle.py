"""Ground-truth check of epipolar sampling against rendered depth."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError
from ..sampling import bilinear_gather, build_sample_geometry
from ..utils.logger import get_logger
from .dataset import MultiviewRenderSet

logger = get_logger(__name__)


@dataclass(frozen=True)
class CorrespondenceReport:
    """
    Colour agreement between target pixels and their epipolar samples.

    Errors are per-sample maximum absolute channel differences. ``compared`` counts
    the (pixel, reference view) pairs that were scored; ``occluded`` those dropped
    because the reference view sees something nearer or nothing at all.
    """

    target_index: int
    k: int
    samples: int
    foreground_pixels: int
    compared: int
    occluded: int
    out_of_view: int
    hit_rate: float
    mean_color_err: float
    max_color_err: float
    empty: bool

    def to_dict(self) -> dict:
        return asdict(self)


def oracle_correspondence_check(
    renders: MultiviewRenderSet,
    target_index: int,
    k: int,
    samples: int,
    near: float | None = None,
    far: float | None = None,
    tolerance: float | None = None,
) -> CorrespondenceReport:
    """
    For every foreground target pixel pick the depth bin nearest its true depth and
    compare the reference-view colour sampled there with the pixel's own colour.

    With ``k == 1`` the target itself is the reference. The occlusion tolerance
    defaults to one depth-bin width.
    """
    if len(renders) == 0:
        raise ConfigurationError("Cannot run the correspondence check on an empty render set")
    height, width = renders.height, renders.width
    geometry = build_sample_geometry(
        renders.layout, target_index, height, width, k, samples, near, far
    )
    bin_width = (geometry.far - geometry.near) / samples
    tolerance = bin_width if tolerance is None else tolerance

    target_depth = renders.depth[target_index].reshape(-1)
    target_rgb = renders.rgb[target_index].reshape(-1, 3)
    pixels = np.nonzero(target_depth > 0.0)[0]
    slots = list(range(1, geometry.k)) if geometry.k > 1 else [0]

    if pixels.size == 0:
        logger.warning(f"View {target_index} has no foreground pixels")
        return CorrespondenceReport(
            target_index, geometry.k, samples, 0, 0, 0, 0, 0.0, 0.0, 0.0, empty=True
        )

    bins = np.argmin(np.abs(geometry.depths[pixels] - target_depth[pixels, None]), axis=1)
    center = renders.layout[target_index].center
    points = center + (geometry.depths[pixels, bins])[:, None] * geometry.ray_directions[pixels]

    errors = []
    occluded = 0
    out_of_view = 0
    for slot in slots:
        view_index = geometry.view_indices[slot]
        valid = geometry.valid[slot, pixels, bins]
        out_of_view += int((~valid).sum())
        indices = geometry.tap_indices[slot, pixels, bins][valid]
        weights = geometry.tap_weights[slot, pixels, bins][valid]

        ref_depth_flat = renders.depth[view_index].reshape(-1, 1)
        tap_depths = ref_depth_flat[indices, 0]
        sees_surface = np.all((tap_depths > 0.0) | (weights == 0.0), axis=1)
        ref_depth = bilinear_gather(ref_depth_flat, indices, weights)[:, 0]
        distance = np.linalg.norm(points[valid] - renders.layout[view_index].center, axis=1)
        visible = sees_surface & (ref_depth >= distance - tolerance)
        occluded += int((~visible).sum())

        ref_rgb = renders.rgb[view_index].reshape(-1, 3)
        colors = bilinear_gather(ref_rgb, indices[visible], weights[visible])
        expected = target_rgb[pixels[valid][visible]]
        errors.append(np.max(np.abs(colors - expected), axis=1))

    all_errors = np.concatenate(errors)
    pairs = pixels.size * len(slots)
    report = CorrespondenceReport(
        target_index=target_index,
        k=geometry.k,
        samples=samples,
        foreground_pixels=int(pixels.size),
        compared=int(all_errors.size),
        occluded=occluded,
        out_of_view=out_of_view,
        hit_rate=all_errors.size / pairs,
        mean_color_err=float(all_errors.mean()) if all_errors.size else 0.0,
        max_color_err=float(all_errors.max()) if all_errors.size else 0.0,
        empty=all_errors.size == 0,
    )
    logger.debug(
        f"Correspondence view {target_index} K={k} S={samples}: "
        f"mean {report.mean_color_err:.4g}, hit rate {report.hit_rate:.3f}"
    )
    return report
