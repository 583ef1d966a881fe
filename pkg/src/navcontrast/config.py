"""Experiment configuration: INI text files over typed defaults.

A config is a two-level dict (section -> key -> value) whose shape and
types are fixed by `DEFAULTS`. Values resolve in priority order: built-in
defaults, then an optional config file, then explicit `section.key=value`
overrides from the command line. Every command writes the fully resolved
config into its output directory, so any artifact can be reproduced from
the file sitting next to it.
"""

from __future__ import annotations

import configparser
import copy
import os

from .augment import AugmentConfig
from .contrast import TrainConfig
from .errors import ConfigError
from .nn import EncoderArch
from .probe import ProbeConfig
from .render import RenderConfig
from .scene import SceneConfig
from .trajectory import MotionParams

DEFAULTS: dict[str, dict[str, object]] = {
    "scene": {
        "seed": 0,
        "room_count": 1,
        "object_count_min": 12,
        "object_count_max": 18,
        "category_count": 6,
        "bounds_w": 10.0,
        "bounds_d": 8.0,
        "wall_height": 2.5,
        "wall_thickness": 0.1,
        "door_width": 1.2,
        "lighting_count": 3,
    },
    "motion": {
        "step_len": 0.1,
        "rot_step": 5.0,
        "jump_height": 0.3,
        "jump_steps": 6,
        "agent_radius": 0.2,
        "eye_height": 1.5,
        "dt": 0.1,
    },
    "walk": {
        "seed": 0,
        "steps": 2000,
        "persistence": 0.65,
        "light_block": 50,
    },
    "render": {
        "width": 64,
        "height": 64,
        "fov_deg": 90.0,
    },
    "augment": {
        "crop_scale_min": 0.4,
        "crop_scale_max": 1.0,
        "flip_prob": 0.5,
        "jitter_strength": 0.4,
        "grayscale_prob": 0.2,
    },
    "arch": {
        "conv_channels": (16, 32, 64, 128),
        "hidden_dim": 128,
        "feat_dim": 64,
        "input_size": 64,
    },
    "train": {
        "epochs": 100,
        "batch_size": 64,
        "lr": 0.06,
        "sgd_momentum": 0.9,
        "key_momentum": 0.99,
        "queue_capacity": 1024,
        "tau": 0.2,
        "denominator_mode": "negatives_only",
        "mode": "standard",
        "seed": 0,
    },
    "pairing": {
        "t_max": 10.0,
        "d_max": 0.2,
        "a_max": 3.0,
    },
    "probe": {
        "epochs": 30,
        "batch_size": 128,
        "lr": 0.1,
        "momentum": 0.9,
        "seed": 0,
    },
    "compare": {
        "modes": "standard,time,space",
        "runs": 3,
    },
    "serve": {
        "host": "127.0.0.1",
        "port": 8765,
    },
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULTS)


def _coerce(section: str, key: str, text: str):
    """Parse a raw string against the default value's type."""
    default = DEFAULTS[section][key]
    label = f"[{section}] {key}"
    try:
        if isinstance(default, bool):
            raise AssertionError("no boolean keys defined")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {label}: {text!r}") from exc
    return text


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_config(path=None) -> dict:
    """Defaults, updated by an INI file when one is given.

    Unknown sections or keys are refused rather than ignored — a typo that
    silently fell back to a default would be poison for reproducibility."""
    cfg = default_config()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    for section in parser.sections():
        if section not in cfg:
            raise ConfigError(f"unknown config section [{section}] in {path}")
        for key, text in parser.items(section):
            if key not in cfg[section]:
                raise ConfigError(
                    f"unknown config key [{section}] {key} in {path}")
            cfg[section][key] = _coerce(section, key, text)
    return cfg


def apply_overrides(cfg: dict, pairs) -> dict:
    """Apply `section.key=value` strings on top of a resolved config."""
    out = copy.deepcopy(cfg)
    for pair in pairs:
        head, sep, text = pair.partition("=")
        section, dot, key = head.partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(
                f"override must look like section.key=value, got {pair!r}")
        if section not in out or key not in out[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        out[section][key] = _coerce(section, key, text)
    return out


def config_to_ini(cfg: dict) -> str:
    lines = []
    for section, values in cfg.items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            lines.append(f"{key} = {_format(value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(config_to_ini(cfg))


def scene_config(cfg: dict) -> SceneConfig:
    s = cfg["scene"]
    return SceneConfig(room_count=s["room_count"],
                       object_count_range=(s["object_count_min"],
                                           s["object_count_max"]),
                       category_count=s["category_count"],
                       bounds_w=s["bounds_w"], bounds_d=s["bounds_d"],
                       wall_height=s["wall_height"],
                       wall_thickness=s["wall_thickness"],
                       door_width=s["door_width"],
                       lighting_count=s["lighting_count"])


def motion_params(cfg: dict) -> MotionParams:
    return MotionParams(**cfg["motion"])


def render_config(cfg: dict) -> RenderConfig:
    return RenderConfig(**cfg["render"])


def augment_config(cfg: dict) -> AugmentConfig:
    a = cfg["augment"]
    return AugmentConfig(crop_scale_range=(a["crop_scale_min"],
                                           a["crop_scale_max"]),
                         flip_prob=a["flip_prob"],
                         jitter_strength=a["jitter_strength"],
                         grayscale_prob=a["grayscale_prob"],
                         out_size=cfg["arch"]["input_size"])


def encoder_arch(cfg: dict) -> EncoderArch:
    return EncoderArch(**cfg["arch"])


def train_config(cfg: dict, mode=None, seed=None) -> TrainConfig:
    t, p = cfg["train"], cfg["pairing"]
    return TrainConfig(epochs=t["epochs"], batch_size=t["batch_size"],
                       lr=t["lr"], sgd_momentum=t["sgd_momentum"],
                       key_momentum=t["key_momentum"],
                       queue_capacity=t["queue_capacity"], tau=t["tau"],
                       denominator_mode=t["denominator_mode"],
                       pairing_mode=t["mode"] if mode is None else mode,
                       t_max=p["t_max"], d_max=p["d_max"], a_max=p["a_max"],
                       augment=augment_config(cfg),
                       arch=encoder_arch(cfg),
                       seed=t["seed"] if seed is None else seed)


def probe_config(cfg: dict) -> ProbeConfig:
    return ProbeConfig(**cfg["probe"])
