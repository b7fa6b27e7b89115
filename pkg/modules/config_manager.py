import copy
import json
import logging
import os

from modules import __version__
from modules.event_sim import SimConfig
from modules.exceptions import ConfigError
from modules.render import EyeAppearance
from modules.snn_core import CubaParams
from modules.training_manager import TrainConfig
from modules.utils import ensure_dir

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"

APPEARANCE_KEYS = ("sclera_level", "iris_level", "pupil_level", "iris_radius_px",
                   "pupil_radius_px", "gain_px_per_deg", "background_level", "sclera_radius_px")

# Desk-scale defaults; every key a config file may set appears here
DEFAULTS = {
    "seed": 0,
    "out": "runs",
    "threads": 1,
    "dataset": None,
    "kinematics": {
        "recordings": 6,
        "duration_ms": 10000.0,
        "max_angle_deg": 10.0,
        "fix_range_ms": [50, 600],
        "sac_range_ms": [20, 300],
        "sample_rate_hz": 1000.0,
        "min_amplitude_deg": 1.0,
        "binocular": False,
    },
    "render": {
        "width": 64,
        "height": 48,
        "fps": 250.0,
        "sclera_level": 200.0,
        "iris_level": 80.0,
        "pupil_level": 20.0,
        "iris_radius_px": 8.0,
        "pupil_radius_px": 3.5,
        "gain_px_per_deg": 1.5,
        "background_level": 150.0,
        "sclera_radius_px": None,
        "dump_frames": False,
    },
    "sim": {
        "theta_on": 0.2,
        "theta_off": 0.2,
        "sigma_theta": 0.05,
        "cutoff_hz": 30.0,
        "leak_rate_hz": 0.1,
        "shot_rate_hz": 5.0,
        "upsample_factor": 8,
    },
    "codec": {
        "window_ms": 33.0,
        "bin_ms": 1.0,
        "downscale": 1,
        "balance": True,
        "tolerance": 0.1,
        "test_fraction": 0.2,
    },
    "model": {
        "arch": "dense",
        "hidden": [128, 128],
        "current_decay": 0.25,
        "voltage_decay": 0.03,
        "theta": 1.25,
        "surrogate_slope": 3.0,
        "surrogate_width": 0.03,
        "init_gain": 1.0,
        "dropout": 0.0,
        "max_delay": 0,
        "conv_channels": [8, 8, 2],
        "kernel": 5,
        "conv_dense": 512,
        "conv_recurrent": 256,
        "conv_dropout": 0.05,
    },
    "train": {
        "epochs": 50,
        "batch_size": 8,
        "learning_rate": 0.01,
        "weight_decay": 0.0001,
        "r_true": 0.5,
        "r_false": 0.02,
        "weight_norm": True,
        "detach_reset": False,
        "checkpoint_every": 10,
        "record_seconds": False,
    },
    "eval": {
        "batch_size": 32,
    },
    "finetune": {
        "checkpoint": None,
        "fractions": [0.2, 0.5],
        "zero_shot": True,
    },
    "sweep": {
        "ts_list": [200, 150, 100, 80, 50, 33, 20, 10, 8],
    },
    "benchmark": {
        "archs": ["dense", "conv"],
    },
}


def _merge(target, source, defaults, prefix=""):
    for key, value in source.items():
        name = f"{prefix}{key}"
        if key not in defaults:
            raise ConfigError(f"Unknown config key: {name}", key=name)
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config section {name} must be an object", key=name)
            _merge(target[key], value, defaults[key], prefix=f"{name}.")
        else:
            target[key] = value


class ConfigManager:
    """Resolved run configuration: defaults, then a JSON file, then CLI overrides"""

    def __init__(self, path=None):
        self.config = copy.deepcopy(DEFAULTS)
        self.path = path
        if path:
            self.load(path)

    def load(self, path):
        """Merge a JSON config file over the current values"""
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}", path=str(path))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed config JSON in {path}: {e}", path=str(path))
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must hold a JSON object", path=str(path))
        data.pop("version", None)
        _merge(self.config, data, DEFAULTS)
        logger.info(f"Loaded config from {path}")
        return self

    def override(self, **values):
        """Apply CLI overrides; None means not given"""
        for key, value in values.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                self.set(section, name, value)
            else:
                _merge(self.config, {key: value}, DEFAULTS)
        return self

    def get(self, section, key=None, default=None):
        """Get a global (section only) or a section value"""
        if key is None:
            return self.config.get(section, default)
        return self.config.get(section, {}).get(key, default)

    def set(self, section, key, value):
        _merge(self.config, {section: {key: value}}, DEFAULTS)

    def save(self, run_dir):
        """Write the resolved config and tool version as config.json"""
        ensure_dir(run_dir)
        path = os.path.join(run_dir, CONFIG_NAME)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"version": __version__, **self.config}, f, indent=2, sort_keys=True)
        logger.debug(f"Saved resolved config to {path}")
        return path

    # typed views

    @property
    def seed(self):
        return int(self.config["seed"])

    @property
    def threads(self):
        return max(1, int(self.config["threads"]))

    def sim_config(self, seed=None):
        return SimConfig(**self.config["sim"], seed=self.seed if seed is None else int(seed))

    def appearance(self):
        render = self.config["render"]
        return EyeAppearance(**{key: render[key] for key in APPEARANCE_KEYS})

    def cuba_params(self):
        model = self.config["model"]
        return CubaParams.from_decays(model["current_decay"], model["voltage_decay"],
                                      theta=model["theta"],
                                      surrogate_slope=model["surrogate_slope"],
                                      surrogate_width=model["surrogate_width"])

    def train_config(self):
        return TrainConfig(**self.config["train"], seed=self.seed)
