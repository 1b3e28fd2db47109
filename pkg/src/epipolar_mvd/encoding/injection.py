"""Adding ray encodings to sampled features."""

import numpy as np

from ..errors import ShapeError
from ..geometry import CameraPose
from ..tensor import LinearParams, Tensor, as_tensor, linear, linear_backward
from .canonical import canonical_frames
from .plucker import PLUCKER_DIM, HarmonicConfig, harmonic_encode, plucker_batch


def neighbor_ray_plucker(
    target_pose: CameraPose,
    target_directions: Tensor,
    reference_centers: Tensor,
    points: Tensor,
    ray_relative: bool = True,
) -> Tensor:
    """
    Plücker coordinates of the rays from each reference camera through each sample point.

    Args:
        target_pose: Pose of the target camera
        target_directions: Target ray directions [P, 3]
        reference_centers: Camera centres of the K selected views [K, 3]
        points: Sample points along the target rays [P, S, 3]
        ray_relative: Express rays in each target ray's canonical frame first

    Returns:
        Tensor [K, P, S, 6]
    """
    reference_centers = as_tensor(reference_centers)
    directions = points[None, :, :, :] - reference_centers[:, None, None, :]
    directions = directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    origins = np.broadcast_to(reference_centers[:, None, None, :], directions.shape)
    if not ray_relative:
        return plucker_batch(origins, directions)

    rotations, _ = canonical_frames(target_pose, target_directions)
    offsets = reference_centers - target_pose.center
    local_origins = np.einsum("ki,pij->kpj", offsets, rotations)
    local_origins = np.broadcast_to(local_origins[:, :, None, :], directions.shape)
    local_directions = np.einsum("kpsi,pij->kpsj", directions, rotations)
    return plucker_batch(local_origins, local_directions)


def inject_ray_encoding(
    features: Tensor, plucker: Tensor, config: HarmonicConfig, proj: LinearParams
) -> Tensor:
    """
    ``features + proj(harmonic_encode(plucker))``.

    Args:
        features: Tensor [..., C]
        plucker: Tensor [..., 6] with the same leading shape
        config: Harmonic embedding settings
        proj: Linear map from ``2 * L * 6`` to ``C``
    """
    if plucker.shape[-1] != PLUCKER_DIM or plucker.shape[:-1] != features.shape[:-1]:
        raise ShapeError(
            f"inject_ray_encoding: plucker {plucker.shape} does not match features {features.shape}"
        )
    if proj.in_dim != config.output_dim() or proj.out_dim != features.shape[-1]:
        raise ShapeError(
            f"inject_ray_encoding: projection {proj.weight.shape} cannot map "
            f"{config.output_dim()} encodings to {features.shape[-1]} channels"
        )
    return features + linear(harmonic_encode(plucker, config), proj)


def inject_ray_encoding_backward(
    plucker: Tensor, config: HarmonicConfig, proj: LinearParams, grad_out: Tensor
) -> tuple[Tensor, LinearParams]:
    """Returns (grad wrt features, grad wrt ``proj``)."""
    _, grad_proj = linear_backward(harmonic_encode(plucker, config), proj, grad_out)
    return grad_out, grad_proj
