import json

import pytest

from modules import __version__
from modules.config_manager import DEFAULTS, ConfigManager
from modules.exceptions import ConfigError


def write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_defaults():
    config = ConfigManager()
    assert config.seed == 0
    assert config.get("model", "hidden") == [128, 128]
    assert config.train_config().batch_size == 8
    assert config.train_config().record_seconds is False
    params = config.cuba_params()
    assert params.alpha == pytest.approx(0.75) and params.beta == pytest.approx(0.97)


def test_file_then_overrides(tmp_path):
    path = write_config(tmp_path, {"seed": 4, "train": {"epochs": 3}, "render": {"width": 32}})
    config = ConfigManager(path)
    assert config.seed == 4
    assert config.get("train", "epochs") == 3
    assert config.get("render", "height") == DEFAULTS["render"]["height"]
    config.override(seed=9, threads=None, **{"train.epochs": 7, "model.arch": None})
    assert config.seed == 9
    assert config.get("train", "epochs") == 7
    assert config.get("model", "arch") == "dense"
    assert config.train_config().seed == 9


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigError, match="train.epoch"):
        ConfigManager(write_config(tmp_path, {"train": {"epoch": 3}}))
    with pytest.raises(ConfigError):
        ConfigManager().override(colour="blue")
    with pytest.raises(ConfigError):
        ConfigManager(write_config(tmp_path, {"train": 5}))


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        ConfigManager(str(bad))
    with pytest.raises(ConfigError):
        ConfigManager(write_config(tmp_path, [1, 2]))


def test_saved_config_reloads(tmp_path):
    config = ConfigManager().override(seed=3, **{"codec.window_ms": 20.0})
    path = config.save(str(tmp_path / "run"))
    saved = json.loads(open(path, encoding="utf-8").read())
    assert saved["version"] == __version__
    reloaded = ConfigManager(path)
    assert reloaded.config == config.config


def test_typed_views():
    config = ConfigManager().override(threads=0, **{"render.sclera_radius_px": 12.0})
    assert config.threads == 1
    assert config.appearance().sclera_radius_px == 12.0
    assert config.sim_config(seed=11).seed == 11
    assert config.sim_config().seed == config.seed
