"""Tests for the noise schedule, the toy denoiser, the multiview loss and sampling."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.config import Config, DiffusionConfig
from src.epipolar_mvd.diffusion import (
    TrainDemoResult,
    ConditionEmbedding,
    MomentumSgd,
    OracleNoisePredictor,
    SyntheticEncoder,
    ToyDenoiser,
    TrainingBatch,
    forward_diffuse_closed,
    forward_diffuse_step,
    frozen_digest,
    linear_beta_schedule,
    load_denoiser,
    mvs_loss,
    posterior_step,
    run_train_demo,
    sample_multiview,
    save_denoiser,
    skip_gain_table,
    time_embedding_table,
    train_step,
)
from src.epipolar_mvd.eca import EcaConfig, init_params
from src.epipolar_mvd.encoding import HarmonicConfig
from src.epipolar_mvd.errors import ConfigurationError, SampleRangeError, ShapeError
from src.epipolar_mvd.geometry import generate_layout, subset_layout
from src.epipolar_mvd.tensor import DeterministicRng, LinearParams

SMALL = DiffusionConfig(timesteps=10, latent_channels=2, hidden_channels=4, latent_size=4)
SMALL_ECA = EcaConfig(k=2, samples=4, channels=4, harmonic=HarmonicConfig(1))


class ZeroPredictor:
    """Predicts no noise at all."""

    def __init__(self, latent_shape):
        self.latent_shape = latent_shape

    def condition(self, layout, input_index, input_latent):
        return ConditionEmbedding(np.zeros((len(layout), 1)), input_index)

    def forward(self, z_t, t, cond, layout):
        return np.zeros_like(z_t), None


@pytest.fixture
def schedule():
    """The default 100-step linear schedule."""
    return linear_beta_schedule(100, 1e-4, 2e-2)


@pytest.fixture
def three_views():
    """Three neighbouring views of the 30 degree ring."""
    return subset_layout(generate_layout((30.0,), 16), [0, 1, 2])


@pytest.fixture
def denoiser():
    """A small fresh denoiser."""
    return ToyDenoiser.create(SMALL, SMALL_ECA, seed=3)


class TestSchedule:
    """Tests for the noise schedule."""

    def test_alpha_bar_decreases(self, schedule):
        """Test alpha_bar falls strictly and stays inside (0, 1)."""
        alpha_bars = schedule.alpha_bars
        assert np.all(np.diff(alpha_bars) < 0.0)
        assert np.all((alpha_bars > 0.0) & (alpha_bars < 1.0))
        assert schedule.alpha_bar(0) == 1.0
        assert schedule.timesteps == 100

    def test_endpoints(self, schedule):
        """Test the betas run from beta_start to beta_end."""
        assert schedule.beta(1) == pytest.approx(1e-4)
        assert schedule.beta(100) == pytest.approx(2e-2)

    @pytest.mark.parametrize("args", [(0, 1e-4, 2e-2), (10, 0.0, 0.1), (10, 0.2, 0.1)])
    def test_invalid(self, args):
        """Test bad step counts and beta ranges are rejected."""
        with pytest.raises(ConfigurationError):
            linear_beta_schedule(*args)

    def test_step_out_of_range(self, schedule):
        """Test timesteps past T raise."""
        with pytest.raises(SampleRangeError):
            schedule.alpha_bar(101)

    def test_closed_form_at_t1(self, schedule):
        """Test one Markov step and the closed form agree for the same noise."""
        z0 = DeterministicRng(1).normal(10)
        stepped = forward_diffuse_step(z0, 1, schedule, DeterministicRng(2))
        closed = forward_diffuse_closed(z0, 1, schedule, DeterministicRng(2).normal(10))
        assert np.allclose(stepped, closed)

    @pytest.mark.slow
    def test_iterated_matches_closed_form(self, schedule):
        """Test 10^5 iterated chains have the closed-form mean and variance at t = 50."""
        rng = DeterministicRng(3)
        z = np.full(100_000, 0.7)
        for step in range(1, 51):
            z = forward_diffuse_step(z, step, schedule, rng)
        alpha_bar = schedule.alpha_bar(50)
        assert z.mean() == pytest.approx(np.sqrt(alpha_bar) * 0.7, abs=0.01)
        assert z.var() == pytest.approx(1.0 - alpha_bar, rel=0.02)

    def test_posterior_mean_on_last_step(self, schedule):
        """Test the final step returns the posterior mean even when noise is given."""
        z = np.ones(3)
        eps = np.full(3, 0.5)
        assert np.array_equal(
            posterior_step(z, 1, eps, schedule, np.ones(3)), posterior_step(z, 1, eps, schedule)
        )


class TestDenoiser:
    """Tests for the toy denoiser."""

    def test_time_table(self):
        """Test one row per timestep including 0."""
        table = time_embedding_table(10, 5)
        assert table.shape == (11, 5)
        assert np.array_equal(table[0, 3:], np.ones(2))

    def test_skip_gain_table(self):
        """Test row t is the least-squares gain from z_t to its noise."""
        table = skip_gain_table(SMALL)
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        assert table.shape == (11,)
        for t in (1, 5, 10):
            alpha_bar = schedule.alpha_bar(t)
            expected = np.sqrt(1 - alpha_bar) / (alpha_bar * SMALL.sigma_data**2 + 1 - alpha_bar)
            assert table[t] == pytest.approx(expected, rel=1e-12)

    def test_skip_path(self, denoiser, three_views):
        """Test a zero output head leaves exactly skip[t] * z_t."""
        denoiser.out_proj = LinearParams.zeros(2, 4)
        z = DeterministicRng(4).normal((3, 4, 4, 2))
        cond = denoiser.condition(three_views, 0, z[0])
        prediction, _ = denoiser.forward(z, 7, cond, three_views)
        assert np.allclose(prediction, denoiser.skip_table[7] * z)
        assert "skip_table" in denoiser.frozen_tensors()

    def test_width_mismatch(self):
        """Test the ECA width must equal the hidden width."""
        with pytest.raises(ShapeError):
            ToyDenoiser.create(SMALL, EcaConfig(channels=3))

    def test_output_shape(self, denoiser, three_views):
        """Test one noise prediction per view."""
        z = DeterministicRng(4).normal((3, 4, 4, 2))
        cond = denoiser.condition(three_views, 0, z[0])
        prediction, _ = denoiser.forward(z, 5, cond, three_views)
        assert prediction.shape == z.shape
        assert len(cond) == 3

    def test_latent_shape_checked(self, denoiser, three_views):
        """Test latents of the wrong size are rejected."""
        z = np.zeros((3, 2, 2, 2))
        cond = denoiser.condition(three_views, 0, z[0])
        with pytest.raises(ShapeError):
            denoiser.forward(z, 5, cond, three_views)

    def test_views_independent_at_init(self, denoiser, three_views):
        """Test perturbing one view leaves the others' predictions unchanged."""
        rng = DeterministicRng(5)
        z = rng.normal((3, 4, 4, 2))
        cond = denoiser.condition(three_views, 0, z[0])
        before, _ = denoiser.forward(z, 4, cond, three_views)
        z[1] += rng.normal((4, 4, 2))
        after, _ = denoiser.forward(z, 4, cond, three_views)
        assert np.array_equal(after[0], before[0])
        assert np.array_equal(after[2], before[2])
        assert not np.allclose(after[1], before[1])

    def test_same_seed_same_base(self):
        """Test the frozen base depends only on the seed."""
        a = ToyDenoiser.create(SMALL, SMALL_ECA, seed=1)
        b = ToyDenoiser.create(SMALL, EcaConfig(k=3, samples=2, channels=4), seed=1)
        assert frozen_digest(a) == frozen_digest(b)
        assert frozen_digest(a) != frozen_digest(ToyDenoiser.create(SMALL, SMALL_ECA, seed=2))

    def test_save_and_load(self, denoiser, three_views, tmp_path):
        """Test a checkpoint reproduces the predictions."""
        denoiser.eca_up = init_params(DeterministicRng(6), SMALL_ECA, zero_output=False)
        save_denoiser(denoiser, tmp_path / "ckpt")
        restored = load_denoiser(tmp_path / "ckpt")
        z = DeterministicRng(7).normal((3, 4, 4, 2))
        cond = denoiser.condition(three_views, 1, z[1])
        expected, _ = denoiser.forward(z, 3, cond, three_views)
        actual, _ = restored.forward(z, 3, restored.condition(three_views, 1, z[1]), three_views)
        assert np.allclose(actual, expected, atol=1e-5)
        assert frozen_digest(restored) == frozen_digest(denoiser)


class TestLoss:
    """Tests for mvs_loss."""

    def test_oracle_loss_is_zero(self, schedule):
        """Test the exact noise predictor has zero loss."""
        layout = generate_layout((30.0,), 16)
        z0 = DeterministicRng(1).normal((16, 4, 4, 4))
        loss, context = mvs_loss(
            OracleNoisePredictor(z0, schedule), z0, schedule, layout, 0, DeterministicRng(2)
        )
        assert loss < 1e-20
        assert 1 <= context.t <= 100

    def test_zero_predictor_loss_is_noise_power(self, schedule):
        """Test predicting zeros costs about E[eps^2] = 1."""
        layout = generate_layout((30.0,), 16)
        z0 = DeterministicRng(1).normal((16, 4, 4, 4))
        loss, _ = mvs_loss(ZeroPredictor((4, 4, 4)), z0, schedule, layout, 0, DeterministicRng(3))
        assert loss == pytest.approx(1.0, abs=0.15)

    def test_view_permutation(self, three_views):
        """Test reordering the views (and the input index) keeps the loss."""
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        eca = EcaConfig(k=3, samples=4, channels=4, harmonic=HarmonicConfig(1))
        denoiser = ToyDenoiser.create(SMALL, eca, seed=4)
        denoiser.eca_mid = init_params(DeterministicRng(8), eca, zero_output=False)
        denoiser.eca_up = init_params(DeterministicRng(9), eca, zero_output=False)
        rng = DeterministicRng(10)
        z0 = rng.normal((3, 4, 4, 2))
        noise = rng.normal((3, 4, 4, 2))
        order = [2, 0, 1]
        base, _ = mvs_loss(denoiser, z0, schedule, three_views, 0, rng, t=6, noise=noise)
        permuted_layout = subset_layout(three_views, order)
        permuted, _ = mvs_loss(
            denoiser, z0[order], schedule, permuted_layout, 1, rng, t=6, noise=noise[order]
        )
        assert permuted == pytest.approx(base, rel=1e-10)

    def test_shape_checks(self, denoiser, three_views, schedule):
        """Test latents must match the layout and the denoiser."""
        rng = DeterministicRng(0)
        with pytest.raises(ShapeError):
            mvs_loss(denoiser, np.zeros((2, 4, 4, 2)), schedule, three_views, 0, rng)
        with pytest.raises(ShapeError):
            mvs_loss(denoiser, np.zeros((3, 8, 8, 2)), schedule, three_views, 0, rng)


class TestTraining:
    """Tests for train_step."""

    def _batch(self, layout):
        return TrainingBatch(DeterministicRng(11).normal((3, 4, 4, 2)), layout, 0)

    def test_zero_learning_rate(self, denoiser, three_views):
        """Test lr = 0 leaves every parameter unchanged."""
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        before = {n: dict(p.tensors()) for n, p in denoiser.trainable().items()}
        before = {n: {k: v.copy() for k, v in t.items()} for n, t in before.items()}
        train_step(denoiser, self._batch(three_views), schedule, 0.0, DeterministicRng(1))
        for name, params in denoiser.trainable().items():
            for key, array in params.tensors():
                assert np.array_equal(array, before[name][key])

    def test_step_updates_eca_only(self, denoiser, three_views):
        """Test a step moves the output projection and leaves the base alone."""
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        digest = frozen_digest(denoiser)
        loss = train_step(
            denoiser, self._batch(three_views), schedule, 0.1, DeterministicRng(1), MomentumSgd()
        )
        assert np.isfinite(loss)
        assert denoiser.eca_up.output.weight.any()
        assert frozen_digest(denoiser) == digest

    def test_encoder_pools(self):
        """Test a uniform grey render encodes to the projection bias."""
        encoder = SyntheticEncoder.create(4, 8, seed=0)
        latents = encoder.encode(np.full((2, 32, 32, 3), 0.5))
        assert latents.shape == (2, 8, 8, 4)
        assert np.allclose(latents, 0.0)
        with pytest.raises(ShapeError):
            encoder.encode(np.zeros((1, 30, 30, 3)))

    def test_encoder_scale(self):
        """Test the latent scale multiplies the unscaled latents."""
        rgb = DeterministicRng(3).uniform((1, 16, 16, 3))
        plain = SyntheticEncoder.create(4, 8, seed=0).encode(rgb)
        scaled = SyntheticEncoder.create(4, 8, seed=0, scale=0.05).encode(rgb)
        assert np.allclose(scaled, 0.05 * plain)


class TestSampling:
    """Tests for sample_multiview."""

    @pytest.mark.parametrize("posterior_noise", [False, True])
    def test_oracle_recovers_latents(self, schedule, posterior_noise):
        """Test sampling with the exact noise oracle lands on z0."""
        layout = generate_layout((30.0,), 16)
        z0 = DeterministicRng(12).normal((16, 4, 4, 4))
        oracle = OracleNoisePredictor(z0, schedule)
        cond = oracle.condition(layout, 0, z0[0])
        result = sample_multiview(
            oracle, schedule, layout, cond, DeterministicRng(13), posterior_noise=posterior_noise
        )
        assert np.abs(result - z0).max() < 1e-6

    def test_deterministic(self, denoiser, three_views):
        """Test equal seeds give identical samples."""
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        cond = denoiser.condition(three_views, 0, np.zeros((4, 4, 2)))
        a = sample_multiview(denoiser, schedule, three_views, cond, DeterministicRng(5, 40))
        b = sample_multiview(denoiser, schedule, three_views, cond, DeterministicRng(5, 40))
        assert a.shape == (3, 4, 4, 2)
        assert np.array_equal(a, b)

    def test_view_count_mismatch(self, denoiser, three_views):
        """Test n must equal the layout size."""
        schedule = linear_beta_schedule(10, 1e-4, 2e-2)
        cond = denoiser.condition(three_views, 0, np.zeros((4, 4, 2)))
        with pytest.raises(ConfigurationError):
            sample_multiview(denoiser, schedule, three_views, cond, DeterministicRng(0), n=4)


class TestTrainDemo:
    """Tests for the training demo."""

    def test_short_run_is_deterministic(self, tmp_path):
        """Test two 3-step runs with one seed give identical losses and checkpoint bytes."""
        first = run_train_demo(Config(), steps=3, seed=1, out_dir=tmp_path / "a")
        second = run_train_demo(Config(), steps=3, seed=1, out_dir=tmp_path / "b")
        assert first.losses == second.losses
        assert first.eval_loss_final == second.eval_loss_final
        assert first.frozen_unchanged
        assert (tmp_path / "a" / "loss_curve.json").exists()
        root = first.checkpoint
        files = sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())
        assert Path("denoiser.json") in files
        assert any(p.suffix == ".etz" for p in files)
        for path in files:
            assert (root / path).read_bytes() == (second.checkpoint / path).read_bytes()

    def test_other_seed_differs(self):
        """Test a different seed changes the loss curve."""
        first = run_train_demo(Config(), steps=2, seed=1)
        second = run_train_demo(Config(), steps=2, seed=2)
        assert first.losses != second.losses

    def test_result_ratios(self):
        """Test the reported ratios and the 10% target."""
        passed = TrainDemoResult([2.0, 0.5], 1.0, 0.05, True)
        assert passed.loss_ratio == pytest.approx(0.05)
        assert passed.step_loss_ratio == pytest.approx(0.25)
        assert passed.target_met
        assert not TrainDemoResult([2.0, 0.1], 1.0, 0.1, True).target_met
        assert not TrainDemoResult([2.0, 0.1], 1.0, 0.05, False).target_met
        assert not TrainDemoResult([2.0, float("nan")], 1.0, 0.05, True).target_met
        assert passed.to_dict()["target_met"] is True

    def test_needs_steps(self):
        """Test at least one step is required."""
        with pytest.raises(ConfigurationError):
            run_train_demo(Config(), steps=0)

    @pytest.mark.slow
    def test_training_lowers_eval_loss(self):
        """Test 500 steps cut the fixed-noise loss below 10% and never touch the base."""
        result = run_train_demo(Config(), steps=500, seed=0)
        assert all(np.isfinite(result.losses))
        assert result.eval_loss_final < 0.1 * result.eval_loss_initial
        assert result.frozen_unchanged
        assert result.target_met
