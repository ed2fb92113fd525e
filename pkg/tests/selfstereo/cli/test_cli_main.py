import logging
from unittest.mock import MagicMock, patch

import pytest
from typer.testing import CliRunner

from selfstereo.cli.main import app
from selfstereo.errors import ConfigError, SelfStereoError
from selfstereo.metrics import EvalReport, SampleMetrics

runner = CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("dataset_size = 6\nheight = 32\nwidth = 64\nd_max = 16\nseed = 4\n", encoding="utf-8")
    return str(path)


def test_gen_uses_config_geometry(config_file, tmp_path):
    mock_generate = MagicMock()
    with patch("selfstereo.commands.generate.Generate", return_value=mock_generate):
        result = runner.invoke(app, ["--config", config_file, "--out", str(tmp_path / "data"), "gen", "--dump"])

    assert result.exit_code == 0, result.output
    kwargs = mock_generate.do.call_args.kwargs
    assert (kwargs["count"], kwargs["height"], kwargs["width"], kwargs["d_max"], kwargs["seed"]) == (6, 32, 64, 16, 4)
    assert kwargs["dump"] is True
    assert kwargs["output_dir"] == str(tmp_path / "data")


def test_global_overrides_reach_training_config(config_file):
    mock_train = MagicMock()
    with patch("selfstereo.commands.train.Train", return_value=mock_train):
        result = runner.invoke(app, ["--config", config_file, "--seed", "7", "--precision", "64", "train"])

    assert result.exit_code == 0, result.output
    cfg = mock_train.do.call_args.kwargs["cfg"]
    assert (cfg.seed, cfg.precision) == (7, 64)
    assert mock_train.do.call_args.kwargs["resume_path"] is None


def test_operational_failure_exits_1(config_file):
    mock_train = MagicMock()
    mock_train.do.side_effect = ConfigError("bad value")
    with patch("selfstereo.commands.train.Train", return_value=mock_train):
        result = runner.invoke(app, ["--config", config_file, "train"])

    assert result.exit_code == 1
    assert "bad value" in result.output


def test_missing_config_file_exits_1(tmp_path):
    result = runner.invoke(app, ["--config", str(tmp_path / "absent.conf"), "train"])
    assert result.exit_code == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["teleport"],
        ["--no-such-flag", "gradcheck"],
        ["--precision", "16", "gradcheck"],
        ["eval"],
    ],
)
def test_usage_errors_exit_2(argv):
    result = runner.invoke(app, argv)
    assert result.exit_code == 2


def test_gradcheck_exit_codes():
    mock_check = MagicMock()
    mock_check.do.return_value = [MagicMock()] * 3
    with patch("selfstereo.commands.gradcheck.GradCheck", return_value=mock_check):
        assert runner.invoke(app, ["--seed", "5", "gradcheck"]).exit_code == 0
    mock_check.do.assert_called_once_with(seed=5)

    mock_check.do.side_effect = SelfStereoError("Gradient check failed for 1 of 3 cases")
    with patch("selfstereo.commands.gradcheck.GradCheck", return_value=mock_check):
        assert runner.invoke(app, ["gradcheck"]).exit_code == 1


def test_eval_prints_table(tmp_path):
    mock_evaluate = MagicMock()
    mock_evaluate.do.return_value = EvalReport([SampleMetrics("0000", 1.25, 1.0, 0.3, 0.2, 0.1, 0.1)], d1_mode="or")
    with patch("selfstereo.commands.evaluate.Evaluate", return_value=mock_evaluate):
        result = runner.invoke(
            app,
            ["--out", str(tmp_path), "eval", "model.ckpt", "data", "--d1-mode", "or", "--right-brightness", "0.6"],
        )

    assert result.exit_code == 0, result.output
    assert "1.2500" in result.output
    kwargs = mock_evaluate.do.call_args.kwargs
    assert (kwargs["d1_mode"], kwargs["right_brightness"], kwargs["expected_config"]) == ("or", 0.6, None)


def test_infer_passes_paths(tmp_path):
    mock_infer = MagicMock()
    mock_infer.do.return_value = {"pfm": str(tmp_path / "disparity.pfm"), "pgm": str(tmp_path / "disparity.pgm")}
    with patch("selfstereo.commands.infer.Infer", return_value=mock_infer):
        result = runner.invoke(app, ["--out", str(tmp_path), "infer", "m.ckpt", "l.pfm", "r.pfm", "--stem", "pair"])

    assert result.exit_code == 0, result.output
    mock_infer.do.assert_called_once_with(
        output_dir=str(tmp_path),
        checkpoint_path="m.ckpt",
        left_path="l.pfm",
        right_path="r.pfm",
        stem="pair",
    )


def test_run_delegates_to_pipeline(config_file, tmp_path):
    mock_pipeline = MagicMock()
    with patch("selfstereo.cli.main.RunPipeline", return_value=mock_pipeline):
        result = runner.invoke(app, ["--config", config_file, "--out", str(tmp_path), "run", "--eval-count", "4"])

    assert result.exit_code == 0, result.output
    kwargs = mock_pipeline.run.call_args.kwargs
    assert (kwargs["config_path"], kwargs["eval_count"], kwargs["d1_mode"]) == (config_file, 4, "and")


def test_verbose_lowers_log_level():
    mock_check = MagicMock()
    mock_check.do.return_value = []
    with patch("selfstereo.commands.gradcheck.GradCheck", return_value=mock_check), \
        patch("selfstereo.cli.main.set_log_level") as mock_level:
        result = runner.invoke(app, ["--verbose", "gradcheck"])

    assert result.exit_code == 0, result.output
    mock_level.assert_called_once_with(logging.DEBUG)
