import pytest
from pydantic import ValidationError

from selfstereo.errors import ConfigError
from selfstereo.training import TrainConfig, learning_rate, load_train_config, save_train_config


def test_defaults_match_documented_schedule():
    cfg = TrainConfig()
    assert (cfg.height, cfg.width, cfg.d_max, cfg.stages) == (64, 128, 32, 2)
    assert cfg.batch_size == 2
    assert (cfg.beta1, cfg.beta2, cfg.weight_decay) == (0.9, 0.999, 1e-2)
    assert cfg.grad_clip == 5.0
    assert cfg.decay_step == 800


def test_learning_rate_decays_at_configured_step():
    cfg = TrainConfig(total_steps=100, learning_rate=1e-3, lr_decay_fraction=0.5, lr_decay_factor=0.1)
    assert learning_rate(0, cfg) == 1e-3
    assert learning_rate(49, cfg) == 1e-3
    assert learning_rate(50, cfg) == pytest.approx(1e-4)
    assert learning_rate(99, cfg) == pytest.approx(1e-4)


def test_model_follows_top_level_geometry():
    cfg = TrainConfig(d_max=16, stages=3, channels=1, width=64, height=32)
    assert cfg.model.d_max == 16
    assert cfg.model.stages == 3
    assert cfg.model.in_channels == 1


def test_rejects_bad_geometry():
    with pytest.raises(ValidationError):
        TrainConfig(height=40)
    with pytest.raises(ValidationError):
        TrainConfig(width=64, d_max=32)
    with pytest.raises(ValidationError):
        TrainConfig(total_steps=0)


def test_load_with_overrides(tmp_path):
    path = tmp_path / "train.conf"
    path.write_text(
        "# small run\n"
        "total_steps = 12\n"
        "losses.flc = 0\n"
        "contrastive.temperature = 0.1\n"
        "model.encoder_channels = 4, 4, 8, 8\n",
        encoding="utf-8",
    )
    cfg = load_train_config(path, {"seed": 7, "losses.ild": 0.5})
    assert cfg.total_steps == 12
    assert cfg.seed == 7
    assert cfg.losses.flc == 0.0 and cfg.losses.ild == 0.5
    assert cfg.contrastive.temperature == 0.1
    assert cfg.model.encoder_channels == (4, 4, 8, 8)


def test_load_rejects_unknown_keys(tmp_path):
    path = tmp_path / "train.conf"
    path.write_text("learning_rat = 0.1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="learning_rat"):
        load_train_config(path)


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_train_config(tmp_path / "absent.conf")


def test_saved_config_reloads_identically(tmp_path):
    cfg = TrainConfig(total_steps=9, seed=3, fixed_occlusion_ratio=0.25)
    path = save_train_config(cfg, tmp_path / "out" / "train.conf")
    again = load_train_config(path)
    assert again == cfg
    assert again.canonical_json() == cfg.canonical_json()


def test_canonical_json_is_order_independent():
    a = TrainConfig(seed=1, total_steps=5)
    b = TrainConfig(total_steps=5, seed=1)
    assert a.canonical_json() == b.canonical_json()
    assert a.canonical_json() != TrainConfig(seed=2, total_steps=5).canonical_json()
