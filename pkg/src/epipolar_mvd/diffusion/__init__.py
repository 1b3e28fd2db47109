"""Noise schedule, toy multiview denoiser, training and sampling."""

from .denoiser import (
    POSE_HARMONIC,
    TRAINABLE_BLOCKS,
    ConditionEmbedding,
    DenoiserContext,
    DenoiserGrads,
    NoisePredictor,
    ToyDenoiser,
    load_denoiser,
    save_denoiser,
    skip_gain_table,
    time_embedding_table,
    toy_denoiser_forward,
)
from .schedule import (
    NoiseSchedule,
    forward_diffuse_closed,
    forward_diffuse_step,
    linear_beta_schedule,
    posterior_step,
    sample_timestep,
)
from .training import (
    LossContext,
    MomentumSgd,
    OracleNoisePredictor,
    SyntheticEncoder,
    TrainDemoResult,
    TrainingBatch,
    build_demo_batches,
    demo_scenes,
    evaluation_loss,
    frozen_digest,
    mvs_loss,
    mvs_loss_backward,
    run_train_demo,
    sample_multiview,
    train_step,
)

__all__ = [
    "POSE_HARMONIC",
    "TRAINABLE_BLOCKS",
    "ConditionEmbedding",
    "DenoiserContext",
    "DenoiserGrads",
    "LossContext",
    "MomentumSgd",
    "NoisePredictor",
    "NoiseSchedule",
    "OracleNoisePredictor",
    "SyntheticEncoder",
    "ToyDenoiser",
    "TrainDemoResult",
    "TrainingBatch",
    "build_demo_batches",
    "demo_scenes",
    "evaluation_loss",
    "forward_diffuse_closed",
    "forward_diffuse_step",
    "frozen_digest",
    "linear_beta_schedule",
    "load_denoiser",
    "mvs_loss",
    "mvs_loss_backward",
    "posterior_step",
    "run_train_demo",
    "sample_multiview",
    "sample_timestep",
    "save_denoiser",
    "skip_gain_table",
    "time_embedding_table",
    "toy_denoiser_forward",
    "train_step",
]
