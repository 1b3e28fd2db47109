"""Tests for the epipolar-mvd command line."""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.epipolar_mvd.__main__ import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main
from src.epipolar_mvd.config import Config
from src.epipolar_mvd.diffusion import TrainDemoResult, run_train_demo
from src.epipolar_mvd.tensor import tensor_read, tensor_write
from src.epipolar_mvd.utils.metrics import MetricsCollector


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep the caller's environment out of the CLI defaults."""
    for name in ("EPIPOLAR_FAULT", "EPIPOLAR_SEED", "EPIPOLAR_K", "EPIPOLAR_S", "SENTRY_DSN"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.delenv("OTEL_EXPORTER_OTLP_ENDPOINT", raising=False)


def _metrics(passed: bool) -> MetricsCollector:
    metrics = MetricsCollector()
    stage = metrics.start_stage("epipolar_constraint", "geometry")
    metrics.end_stage(stage, passed, None, 1e-12 if passed else 1.0, 1e-9)
    return metrics


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


class TestParser:
    """Tests for argument handling."""

    def test_version(self, capsys):
        """Test --version prints and exits cleanly."""
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "epipolar-mvd" in capsys.readouterr().out

    def test_missing_command(self):
        """Test usage errors exit with 1."""
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_ERROR

    def test_unknown_suite(self, tmp_path):
        """Test an invalid choice is a usage error."""
        with pytest.raises(SystemExit) as exc:
            main(["check", "--suite", "optics", "--out", str(tmp_path)])
        assert exc.value.code == EXIT_ERROR


class TestLayoutCommand:
    """Tests for `layout`."""

    def test_default_layout(self, tmp_path, capsys):
        """Test 96 cameras are written along with run.json."""
        assert main(["layout", "--out", str(tmp_path)]) == EXIT_OK
        report = _stdout_json(capsys)
        cameras = json.loads((tmp_path / "cameras.json").read_text())
        run = json.loads((tmp_path / "run.json").read_text())
        assert report["views"] == 96
        assert len(cameras["views"]) == 96
        assert run["command"] == "layout"
        assert run["config"]["seed"] == 0

    def test_ring(self, tmp_path, capsys):
        """Test one elevation with 16 azimuths."""
        code = main(["layout", "--elevations", "30", "--azimuths", "16", "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert _stdout_json(capsys)["views"] == 16

    def test_uniform(self, tmp_path, capsys):
        """Test evenly spread views."""
        assert main(["layout", "--uniform", "12", "--out", str(tmp_path)]) == EXIT_OK
        assert _stdout_json(capsys)["views"] == 12

    def test_zero_azimuths(self, tmp_path, capsys):
        """Test a configuration error exits with 1."""
        assert main(["layout", "--azimuths", "0", "--out", str(tmp_path)]) == EXIT_ERROR
        assert "Error" in capsys.readouterr().err


class TestRenderAndSampleMap:
    """Tests for `render` and `sample-map`."""

    def test_render_then_sample(self, tmp_path, capsys):
        """Test rendered views feed straight into sample-map."""
        layout_dir = tmp_path / "layout"
        render_dir = tmp_path / "render"
        map_dir = tmp_path / "map"
        main(["layout", "--elevations", "30", "--azimuths", "16", "--out", str(layout_dir)])
        code = main(
            [
                "render",
                "--layout",
                str(layout_dir / "cameras.json"),
                "--res",
                "8",
                "--ppm",
                "--out",
                str(render_dir),
            ]
        )
        assert code == EXIT_OK
        assert tensor_read(render_dir / "rgb.etz").shape == (16, 8, 8, 3)
        assert (render_dir / "view_000.ppm").exists()
        capsys.readouterr()

        code = main(
            [
                "sample-map",
                "--cameras",
                str(render_dir / "cameras.json"),
                "--features-dir",
                str(render_dir),
                "-K",
                "4",
                "-S",
                "16",
                "--out",
                str(map_dir),
            ]
        )
        assert code == EXIT_OK
        report = _stdout_json(capsys)
        assert report["features_shape"] == [4, 64, 16, 3]
        assert report["view_indices"] == [0, 1, 15, 2]
        assert (map_dir / "sample_map.json").exists()

    def test_per_view_files(self, tmp_path, capsys):
        """Test view_XXX.etz feature maps are accepted."""
        main(["layout", "--elevations", "30", "--azimuths", "4", "--out", str(tmp_path)])
        features = tmp_path / "features"
        for i in range(4):
            tensor_write(np.full((4, 4, 2), float(i)), features / f"view_{i:03d}.etz")
        capsys.readouterr()
        code = main(
            [
                "sample-map",
                "--cameras",
                str(tmp_path / "cameras.json"),
                "--features-dir",
                str(features),
                "-K",
                "2",
                "-S",
                "4",
                "--target",
                "3",
                "--out",
                str(tmp_path / "map"),
            ]
        )
        assert code == EXIT_OK
        assert _stdout_json(capsys)["features_shape"] == [2, 16, 4, 2]

    def test_target_out_of_range(self, tmp_path):
        """Test a bad target index exits with 1."""
        main(["layout", "--elevations", "30", "--azimuths", "4", "--out", str(tmp_path)])
        features = tmp_path / "features"
        tensor_write(np.zeros((4, 4, 4, 2)), features / "rgb.etz")
        code = main(
            [
                "sample-map",
                "--cameras",
                str(tmp_path / "cameras.json"),
                "--features-dir",
                str(features),
                "--target",
                "9",
                "--out",
                str(tmp_path / "map"),
            ]
        )
        assert code == EXIT_ERROR

    def test_missing_features(self, tmp_path):
        """Test a missing feature file exits with 1."""
        main(["layout", "--elevations", "30", "--azimuths", "4", "--out", str(tmp_path)])
        code = main(
            [
                "sample-map",
                "--cameras",
                str(tmp_path / "cameras.json"),
                "--features-dir",
                str(tmp_path / "nowhere"),
                "--out",
                str(tmp_path / "map"),
            ]
        )
        assert code == EXIT_ERROR


class TestVerificationCommands:
    """Tests for `check` and `gradcheck` exit codes."""

    def test_check_passes(self, tmp_path, mocker, capsys):
        """Test a passing suite exits 0 and writes its report."""
        run_suite = mocker.patch("src.epipolar_mvd.__main__.run_suite", return_value=_metrics(True))
        code = main(["check", "--suite", "geometry", "--seed", "3", "--out", str(tmp_path)])
        assert code == EXIT_OK
        run_suite.assert_called_once_with("geometry", seed=3, fault=None)
        report = json.loads((tmp_path / "check_report.json").read_text())
        assert report["summary"]["passed"] == 1
        assert _stdout_json(capsys)["summary"]["failed"] == 0

    def test_check_fails(self, tmp_path, mocker):
        """Test a failing suite exits 2."""
        mocker.patch("src.epipolar_mvd.__main__.run_suite", return_value=_metrics(False))
        assert main(["check", "--out", str(tmp_path)]) == EXIT_FAILED

    def test_fault_from_environment(self, tmp_path, mocker, monkeypatch):
        """Test EPIPOLAR_FAULT selects the corrupted check."""
        monkeypatch.setenv("EPIPOLAR_FAULT", "layout_fidelity")
        run_suite = mocker.patch(
            "src.epipolar_mvd.__main__.run_suite", return_value=_metrics(False)
        )
        assert main(["check", "--suite", "geometry", "--out", str(tmp_path)]) == EXIT_FAILED
        assert run_suite.call_args.kwargs["fault"] == "layout_fidelity"

    def test_real_fault(self, tmp_path):
        """Test a real corrupted geometry check exits 2."""
        args = ["check", "--suite", "geometry", "--fault", "epipolar_constraint"]
        code = main([*args, "--out", str(tmp_path)])
        assert code == EXIT_FAILED

    def test_gradcheck_corrupt(self, tmp_path, mocker):
        """Test --corrupt is passed through and a failure exits 2."""
        run = mocker.patch("src.epipolar_mvd.__main__.run_gradcheck", return_value=_metrics(False))
        assert main(["gradcheck", "--corrupt", "--out", str(tmp_path)]) == EXIT_FAILED
        run.assert_called_once_with("micro", seed=0, corrupt=True)
        assert (tmp_path / "gradcheck_report.json").exists()

    def test_unexpected_error(self, tmp_path, mocker):
        """Test an unexpected exception is captured and exits 1."""
        mocker.patch("src.epipolar_mvd.__main__.run_suite", side_effect=RuntimeError("boom"))
        capture = mocker.patch("src.epipolar_mvd.__main__.capture_exception")
        assert main(["check", "--out", str(tmp_path)]) == EXIT_ERROR
        capture.assert_called_once()


class TestTrainAndSample:
    """Tests for `train-demo` and `sample`."""

    def _result(self, tmp_path, frozen=True, losses=(1.0, 0.9), eval_final=0.05):
        return TrainDemoResult(list(losses), 1.0, eval_final, frozen, tmp_path / "checkpoint")

    def test_train_demo_passes(self, tmp_path, mocker, capsys):
        """Test the summary omits the loss curve and exits 0."""
        run = mocker.patch(
            "src.epipolar_mvd.__main__.run_train_demo", return_value=self._result(tmp_path)
        )
        code = main(["train-demo", "--steps", "2", "--lr", "0.01", "--out", str(tmp_path)])
        assert code == EXIT_OK
        assert run.call_args.args[1] == 2
        assert run.call_args.kwargs["learning_rate"] == 0.01
        report = _stdout_json(capsys)
        assert "loss" not in report
        assert report["eval_loss_final"] == 0.05
        assert report["loss_ratio"] == pytest.approx(0.05)
        assert report["target_met"] is True

    def test_train_demo_frozen_changed(self, tmp_path, mocker):
        """Test a modified frozen base exits 2."""
        mocker.patch(
            "src.epipolar_mvd.__main__.run_train_demo",
            return_value=self._result(tmp_path, frozen=False),
        )
        assert main(["train-demo", "--out", str(tmp_path)]) == EXIT_FAILED

    def test_train_demo_nan(self, tmp_path, mocker):
        """Test a non-finite loss exits 2."""
        mocker.patch(
            "src.epipolar_mvd.__main__.run_train_demo",
            return_value=self._result(tmp_path, losses=(1.0, float("nan"))),
        )
        assert main(["train-demo", "--out", str(tmp_path)]) == EXIT_FAILED

    def test_train_demo_misses_loss_target(self, tmp_path, mocker, capsys):
        """Test an eval loss that falls by less than 90% exits 2."""
        mocker.patch(
            "src.epipolar_mvd.__main__.run_train_demo",
            return_value=self._result(tmp_path, eval_final=0.25),
        )
        assert main(["train-demo", "--out", str(tmp_path)]) == EXIT_FAILED
        report = _stdout_json(capsys)
        assert report["loss_ratio"] == pytest.approx(0.25)
        assert report["target_met"] is False

    @pytest.mark.slow
    def test_train_then_sample(self, tmp_path, capsys):
        """Test a short training run's checkpoint drives `sample`."""
        train_dir = tmp_path / "train"
        run_train_demo(Config(), steps=2, out_dir=train_dir)
        sample_dir = tmp_path / "sample"
        code = main(
            ["sample", "--checkpoint", str(train_dir / "checkpoint"), "--out", str(sample_dir)]
        )
        assert code == EXIT_OK
        manifest = _stdout_json(capsys)
        assert manifest["views"] == 16
        assert tensor_read(sample_dir / "view_015.etz").shape == (8, 8, 4)
        assert (sample_dir / "samples.json").exists()
