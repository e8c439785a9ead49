import pytest

from config.run_config import (
    RunConfig,
    load_run_config,
    parse_config_text,
    parse_overrides,
)
from src.aptlab.errors import ConfigError
from src.aptlab.vit import ViTConfig


def test_defaults_are_desk_scale():
    cfg = RunConfig()
    assert (cfg.method, cfg.alpha, cfg.tasks, cfg.epochs, cfg.batch_size) == ("apt", 0.7, 5, 20, 32)
    assert (cfg.lr_prompt, cfg.lr_head) == (3e-3, 1e-2)
    assert cfg.vit_config() == ViTConfig.tiny()


def test_parse_values_are_typed():
    values = parse_config_text(
        "# comment\nalpha = 0.5  # trailing\ntasks=10\nmethod = vpt-deep\n"
        "sweep_alphas = [0.1, 0.9]\n\n"
    )
    assert values == {"alpha": 0.5, "tasks": 10, "method": "vpt-deep", "sweep_alphas": [0.1, 0.9]}


def test_malformed_line():
    with pytest.raises(ConfigError, match="line|expected"):
        parse_config_text("alpha 0.5")


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("alpha = 0.4\nseed = 3\n", encoding="utf-8")
    cfg = load_run_config(path, parse_overrides(["seed=9", "method=pool"]))
    assert (cfg.alpha, cfg.seed, cfg.method) == (0.4, 9, "pool")


def test_shipped_default_file_loads():
    assert load_run_config("config/default.conf") == RunConfig()


@pytest.mark.parametrize("override", [
    "alpha=1.5", "alpha=-0.1", "epochs=0", "method=lora", "warm_start=late", "colour=red",
])
def test_invalid_values_rejected(override):
    with pytest.raises(ConfigError):
        load_run_config(None, parse_overrides([override]))


def test_override_syntax():
    with pytest.raises(ConfigError):
        parse_overrides(["alpha"])


def test_missing_file():
    with pytest.raises(ConfigError):
        load_run_config("nope.conf")


def test_custom_geometry():
    cfg = load_run_config(None, {"preset": "custom", "image_size": 8, "patch_size": 4,
                                 "depth": 2, "dim": 16, "heads": 2})
    assert cfg.vit_config().seq_len == 5
    assert cfg.echo()["preset"] == "custom"


def test_named_preset_owns_the_geometry():
    cfg = load_run_config(None, {"preset": "vit_b16"})
    assert (cfg.image_size, cfg.patch_size, cfg.depth, cfg.dim) == (224, 16, 12, 768)
    assert cfg.echo()["dim"] == cfg.vit_config().dim == 768


def test_geometry_keys_conflicting_with_a_preset_are_rejected():
    with pytest.raises(ConfigError, match="preset"):
        load_run_config(None, {"depth": 6, "dim": 32})


def test_geometry_key_matching_the_preset_is_accepted():
    assert load_run_config(None, {"depth": 4}).vit_config() == ViTConfig.tiny()
