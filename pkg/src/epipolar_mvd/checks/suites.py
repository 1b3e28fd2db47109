"""Invariant suites behind ``epipolar-mvd check``.

Every check returns a residual and passes when it is finite and no larger than
the check's threshold. Setting ``fault`` to a check name corrupts the quantity
that check verifies, so the failure path can be exercised end to end.
"""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from ..config import DiffusionConfig
from ..diffusion import (
    OracleNoisePredictor,
    ToyDenoiser,
    forward_diffuse_closed,
    forward_diffuse_step,
    linear_beta_schedule,
    sample_multiview,
)
from ..eca import (
    EcaConfig,
    cross_attention_forward,
    eca_forward,
    fusion_forward,
    init_params,
    ray_attention_forward,
)
from ..encoding import HarmonicConfig, canonical_frames, canonical_transform, plucker_batch
from ..errors import ConfigurationError
from ..geometry import (
    CameraIntrinsics,
    CameraPose,
    fundamental_matrix,
    generate_layout,
    make_lookat_pose,
    pixel_directions,
    project_points,
    subset_layout,
)
from ..scenes import SyntheticScene, make_dataset, oracle_correspondence_check
from ..tensor import DeterministicRng, Tensor
from ..utils.logger import get_logger
from ..utils.metrics import MetricsCollector
from .oracles import cross_attention_loop, fusion_loop, ray_attention_loop

logger = get_logger(__name__)

SUITES = ("geometry", "encoding", "attention", "diffusion", "oracle")
FAULT_OFFSET = 1e-2

CheckFn = Callable[[DeterministicRng, bool], tuple[float, dict]]


@dataclass(frozen=True)
class Check:
    name: str
    suite: str
    threshold: float
    run: CheckFn


def _corrupt(value: Tensor, corrupt: bool) -> Tensor:
    return value + FAULT_OFFSET if corrupt else value


def _points_in_ball(rng: DeterministicRng, count: int, radius: float) -> Tensor:
    directions = rng.normal((count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * rng.uniform(count) ** (1.0 / 3.0)
    return directions * radii[:, None]


def _random_pose(rng: DeterministicRng) -> CameraPose:
    position = rng.normal(3)
    distance = float(rng.uniform(1, 1.2, 3.0)[0])
    position *= distance / np.linalg.norm(position)
    return make_lookat_pose(position, target=0.2 * rng.normal(3))


# geometry


def check_epipolar_constraint(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Max ``|p2ᵀ F p1|`` over 10^4 projected points on random pairs of the 96-view layout."""
    layout = generate_layout()
    pairs, per_pair = 200, 50
    worst = 0.0
    for _ in range(pairs):
        i, j = rng.choice(len(layout), 2)
        cam1, cam2 = layout[i].camera, layout[j].camera
        f = fundamental_matrix(cam1, cam2)
        points = _points_in_ball(rng, per_pair, 0.9)
        p1, _, _ = project_points(*cam1, points)
        p2, _, _ = project_points(*cam2, points)
        worst = max(worst, float(np.max(np.abs(_corrupt(f.residual(p1, p2), corrupt)))))
    return worst, {"pairs": pairs, "draws": pairs * per_pair}


def check_layout_fidelity(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Default layout: 96 views on 6 rings, every optical axis through the origin."""
    layout = generate_layout()
    rings = sorted({view.elevation_deg for view in layout})
    worst = 0.0
    for view in layout:
        forward = _corrupt(view.pose.rotation[2], corrupt)
        toward_origin = -view.center / np.linalg.norm(view.center)
        worst = max(worst, float(np.abs(forward - toward_origin).max()))
    if len(layout) != 96 or rings != [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0]:
        worst = float("inf")
    return worst, {"views": len(layout), "rings": rings}


def check_fundamental_rank(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """``sigma_3 / sigma_1`` of F and ``|F e1|``, ``|Fᵀ e2|`` over random view pairs."""
    layout = generate_layout()
    worst = 0.0
    for _ in range(100):
        i, j = rng.choice(len(layout), 2)
        f = fundamental_matrix(layout[i].camera, layout[j].camera)
        e1, e2 = f.epipoles()
        matrix = _corrupt(f.matrix, corrupt)
        ratio = np.linalg.svd(matrix, compute_uv=False)
        worst = max(
            worst,
            float(ratio[-1] / ratio[0]),
            float(np.abs(matrix @ e1).max()),
            float(np.abs(matrix.T @ e2).max()),
        )
    return worst, {"pairs": 100}


# encoding


def check_canonical_frames(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Each frame maps its defining ray to the origin and ``+z``; 10^4 random rays."""
    worst = 0.0
    rays = 0
    for _ in range(10):
        pose = _random_pose(rng)
        directions = rng.normal((1000, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        rotations, _ = canonical_frames(pose, directions)
        mapped = np.einsum("pi,pij->pj", directions, rotations)
        origin = canonical_transform(pose, directions[0]).apply_points(pose.center)
        mapped = _corrupt(mapped, corrupt)
        along_z = float(np.abs(mapped - [0.0, 0.0, 1.0]).max())
        worst = max(worst, along_z, float(np.abs(origin).max()))
        rays += len(directions)
    return worst, {"rays": rays}


def check_canonical_fallback(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """A ray along the camera's own y-axis still gets a valid frame."""
    pose = CameraPose.identity()
    frame = canonical_transform(pose, np.array([0.0, 1.0, 0.0]))
    mapped = _corrupt(frame.apply_directions(np.array([0.0, 1.0, 0.0])), corrupt)
    orthonormal = np.abs(frame.rotation.T @ frame.rotation - np.eye(3)).max()
    residual = max(float(np.abs(mapped - [0.0, 0.0, 1.0]).max()), float(orthonormal))
    if not frame.used_fallback:
        residual = float("inf")
    return residual, {"fallback_used": frame.used_fallback}


def check_plucker_invariants(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """``m . d = 0`` and invariance to sliding the origin along the ray."""
    origins = rng.normal((10000, 3))
    directions = rng.normal((10000, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    slides = rng.uniform(10000, -3.0, 3.0)
    base = _corrupt(plucker_batch(origins, directions), corrupt)
    slid = plucker_batch(origins + slides[:, None] * directions, directions)
    orthogonality = np.abs(np.sum(base[:, :3] * base[:, 3:], axis=1)).max()
    slide = np.abs(base - slid).max()
    return max(float(orthogonality), float(slide)), {
        "orthogonality": float(orthogonality),
        "slide": float(slide),
    }


# attention


def _micro_volume(rng: DeterministicRng, k: int, p: int, s: int, c: int):
    samples = rng.normal((k, p, s, c))
    valid = rng.uniform((k, p, s)) > 0.3
    valid[0] = True
    return samples, valid


def check_attention_oracles(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Vectorised cross, ray and fusion stages against scalar loops on 100 micro instances."""
    worst = 0.0
    for trial in range(100):
        k = 1 + trial % 4
        c = 2 + trial % 3
        config = EcaConfig(k=k, samples=3, channels=c, harmonic=HarmonicConfig(1))
        params = init_params(rng, config, zero_output=False)
        samples, valid = _micro_volume(rng, k, 3, 3, c)
        if trial % 10 == 0 and k > 1:
            valid[1:, 0] = False
        v_tilde, _ = cross_attention_forward(samples, valid, params)
        v_bar, _ = ray_attention_forward(v_tilde, params)
        fused, _ = fusion_forward(v_bar, params)
        cross_ref = cross_attention_loop(samples, valid, params)
        worst = max(
            worst,
            float(np.abs(_corrupt(v_tilde, corrupt) - cross_ref).max()),
            float(np.abs(v_bar - ray_attention_loop(v_tilde, params)).max()),
            float(np.abs(fused - fusion_loop(v_bar, params)).max()),
        )
    return worst, {"instances": 100}


def check_identity_at_init(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """A freshly initialised block returns its target map bit for bit."""
    layout = subset_layout(generate_layout((30.0,), 16), [0, 1, 2, 15])
    config = EcaConfig(k=3, samples=4, channels=4)
    params = init_params(rng, config)
    maps = [rng.normal((4, 4, 4)) for _ in range(len(layout))]
    worst = 0.0
    for target in range(len(layout)):
        out = _corrupt(eca_forward(maps, layout, target, config, params), corrupt)
        worst = max(worst, float(np.abs(out - maps[target]).max()))
    return worst, {"views": len(layout)}


# diffusion


def check_schedule_monotone(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Count of steps where alpha_bar fails to decrease, for the default schedule."""
    schedule = linear_beta_schedule(100, 1e-4, 2e-2)
    alpha_bars = schedule.alpha_bars
    if corrupt:
        alpha_bars[-1] = alpha_bars[-2]
    violations = int(np.sum(np.diff(alpha_bars) >= 0.0))
    inside = bool(np.all((alpha_bars > 0.0) & (alpha_bars < 1.0)))
    return float(violations + (0 if inside else 1)), {"alpha_bar_T": float(alpha_bars[-1])}


def check_closed_form_diffusion(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Iterated single steps vs the closed form, in units of 3 Monte-Carlo sigmas."""
    schedule = linear_beta_schedule(100, 1e-4, 2e-2)
    trials, t, z0 = 10_000, 50, 0.7
    z = np.full(trials, z0)
    for step in range(1, t + 1):
        z = forward_diffuse_step(z, step, schedule, rng)
    if corrupt:
        z = z + 0.1
    closed = forward_diffuse_closed(np.full(trials, z0), t, schedule, rng.normal(trials))
    expected_mean = np.sqrt(schedule.alpha_bar(t)) * z0
    expected_var = 1.0 - schedule.alpha_bar(t)
    sigma_mean = np.sqrt(expected_var / trials)
    sigma_var = expected_var * np.sqrt(2.0 / (trials - 1))
    scores = [
        abs(z.mean() - expected_mean) / (3 * sigma_mean),
        abs(z.var(ddof=1) - expected_var) / (3 * sigma_var),
        abs(closed.mean() - expected_mean) / (3 * sigma_mean),
        abs(closed.var(ddof=1) - expected_var) / (3 * sigma_var),
    ]
    return float(max(scores)), {"trials": trials, "t": t}


def check_oracle_inversion(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """The sampler driven by an exact noise oracle lands on the clean latents."""
    schedule = linear_beta_schedule(100, 1e-4, 2e-2)
    layout = generate_layout((30.0,), 16)
    z0 = rng.normal((16, 4, 4, 4))
    oracle = OracleNoisePredictor(z0, schedule)
    cond = oracle.condition(layout, 0, z0[0])
    result = sample_multiview(oracle, schedule, layout, cond, rng, posterior_noise=False)
    return float(np.abs(_corrupt(result, corrupt) - z0).max()), {"views": 16}


def check_view_independence(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """At initialisation, perturbing one view's latent leaves every other view's output alone."""
    config = DiffusionConfig(timesteps=10, latent_channels=4, hidden_channels=4, latent_size=4)
    eca = EcaConfig(k=2, samples=4, channels=4)
    layout = subset_layout(generate_layout((30.0,), 16), [0, 1, 2])
    denoiser = ToyDenoiser.create(config, eca, seed=int(rng.integers(0, 2**31)))
    z = rng.normal((3, 4, 4, 4))
    cond = denoiser.condition(layout, 0, z[0])
    before, _ = denoiser.forward(z, 5, cond, layout)
    z[1] += rng.normal((4, 4, 4))
    after, _ = denoiser.forward(z, 5, cond, layout)
    after = _corrupt(after, corrupt)
    residual = float(max(np.abs(after[0] - before[0]).max(), np.abs(after[2] - before[2]).max()))
    return residual, {"perturbed_view": 1}


# oracle


def _oracle_renders(radius: float = 0.5, size: int = 32):
    layout = generate_layout(intrinsics=CameraIntrinsics.from_fov_deg(size, size))
    return make_dataset(SyntheticScene.sphere(radius=radius), layout, size, size)


def check_self_lookup(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """With K = 1 every sample reads back its own pixel."""
    report = oracle_correspondence_check(_oracle_renders(), 0, 1, 16)
    error = report.mean_color_err + (FAULT_OFFSET if corrupt else 0.0)
    return (float("inf") if report.empty else error), report.to_dict()


def check_correspondence(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Mean colour error of the depth-nearest epipolar sample at K = 4, S = 16."""
    report = oracle_correspondence_check(_oracle_renders(), 0, 4, 16)
    error = report.mean_color_err + (1.0 if corrupt else 0.0)
    return (float("inf") if report.empty else error), report.to_dict()


def check_depth_refinement(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Colour error at S = 256 minus the error at S = 16 (must not be positive)."""
    renders = _oracle_renders()
    coarse = oracle_correspondence_check(renders, 0, 4, 16)
    fine = oracle_correspondence_check(renders, 0, 4, 256)
    difference = fine.mean_color_err - coarse.mean_color_err + (1.0 if corrupt else 0.0)
    return difference, {"s16": coarse.mean_color_err, "s256": fine.mean_color_err}


def check_depth_reprojection(rng: DeterministicRng, corrupt: bool) -> tuple[float, dict]:
    """Surface points recovered from one depth map are hit first by the other cameras' rays."""
    renders = _oracle_renders()
    scene = SyntheticScene.sphere()
    target = renders.layout[0]
    worst = 0.0
    compared = 0
    rows, cols = np.nonzero(renders.depth[0] > 0.0)
    for row, col in list(zip(rows, cols))[::7]:
        pixel = np.array([col + 0.5, row + 0.5])
        direction = pixel_directions(target.intrinsics, target.pose, pixel)
        point = target.center + renders.depth[0, row, col] * direction
        for view in renders.layout.views[1:8]:
            offset = point - view.center
            distance = np.linalg.norm(offset)
            normal = point / scene.radius
            if np.dot(normal, -offset) <= 0.0:
                continue
            hit_depth, _ = scene.first_hit(view.center[None], (offset / distance)[None])
            worst = max(worst, abs(float(hit_depth[0]) - distance))
            compared += 1
    return worst + (FAULT_OFFSET if corrupt else 0.0), {"compared": compared}


CHECKS: tuple[Check, ...] = (
    Check("epipolar_constraint", "geometry", 1e-9, check_epipolar_constraint),
    Check("layout_fidelity", "geometry", 1e-9, check_layout_fidelity),
    Check("fundamental_rank", "geometry", 1e-9, check_fundamental_rank),
    Check("canonical_frames", "encoding", 1e-9, check_canonical_frames),
    Check("canonical_fallback", "encoding", 1e-9, check_canonical_fallback),
    Check("plucker_invariants", "encoding", 1e-12, check_plucker_invariants),
    Check("attention_oracles", "attention", 1e-12, check_attention_oracles),
    Check("identity_at_init", "attention", 0.0, check_identity_at_init),
    Check("schedule_monotone", "diffusion", 0.0, check_schedule_monotone),
    Check("closed_form_diffusion", "diffusion", 1.0, check_closed_form_diffusion),
    Check("oracle_inversion", "diffusion", 1e-6, check_oracle_inversion),
    Check("view_independence", "diffusion", 0.0, check_view_independence),
    Check("self_lookup", "oracle", 1e-6, check_self_lookup),
    Check("correspondence", "oracle", 0.05, check_correspondence),
    Check("depth_refinement", "oracle", 0.0, check_depth_refinement),
    Check("depth_reprojection", "oracle", 1e-6, check_depth_reprojection),
)


def suite_checks(suite: str) -> list[Check]:
    """
    The checks of ``suite`` (``"all"`` for every suite).

    Raises:
        ConfigurationError: If the suite name is unknown
    """
    if suite == "all":
        return list(CHECKS)
    if suite not in SUITES:
        raise ConfigurationError(f"Unknown suite {suite!r}; choose from {', '.join(SUITES)}, all")
    return [check for check in CHECKS if check.suite == suite]


def run_suite(
    suite: str,
    seed: int = 0,
    fault: str | None = None,
    metrics: MetricsCollector | None = None,
) -> MetricsCollector:
    """
    Run every check of ``suite``, one metrics stage per check.

    Each check draws from its own random stream, so results do not depend on
    which other checks ran.
    """
    if fault is not None and fault not in {check.name for check in CHECKS}:
        raise ConfigurationError(f"Unknown fault target {fault!r}")
    metrics = metrics or MetricsCollector()
    for index, check in enumerate(CHECKS):
        if check not in suite_checks(suite):
            continue
        stage = metrics.start_stage(check.name, check.suite)
        rng = DeterministicRng(seed, stream=100 + index)
        try:
            residual, metadata = check.run(rng, fault == check.name)
            passed = bool(np.isfinite(residual) and residual <= check.threshold)
            metrics.end_stage(
                stage, passed, None, float(residual), check.threshold, metadata
            )
        except Exception as e:
            logger.error(f"Check {check.name} raised: {e}")
            metrics.end_stage(stage, False, str(e), None, check.threshold)
            continue
        level = "passed" if passed else "FAILED"
        logger.info(f"[{check.suite}] {check.name} {level}: {residual:.3g} <= {check.threshold:g}")
    return metrics
