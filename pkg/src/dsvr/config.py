"""Declarative run configuration: INI-style files plus flag overrides.

Every knob of the pipeline is addressable as ``[section] key = value``.
Unknown sections or keys are errors. The fully resolved configuration is
echoed into each output directory so runs can be reproduced from it.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

from .models import ArchConfig
from .posenc import PosEncConfig
from .training import TrainConfig
from .video import SynthSpec


class ConfigError(ValueError):
    pass


def _strides(text: str) -> tuple:
    try:
        return tuple(int(x) for x in str(text).replace(" ", "").split(","))
    except ValueError as e:
        raise ConfigError(f"bad stride list {text!r}") from e


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("1", "true", "yes", "on"):
        return True
    if str(text).lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "core": {
        "synth_frames": (int, 16),
        "synth_height": (int, 64),
        "synth_width": (int, 128),
        "synth_lf_motion": (float, 1.0),
        "synth_texture_period": (int, 4),
        "synth_flicker": (float, 1.0),
        "synth_seed": (int, 7),
        "crop_height": (int, 0),  # 0 = no crop
        "crop_width": (int, 0),
        "limit": (int, 0),  # 0 = all frames
    },
    "freqsplit": {
        "keep_ratio": (float, 0.2),
    },
    "posenc": {
        "base": (float, 1.25),
        "split": (int, 10),
        "levels": (int, 30),
    },
    "nets": {
        "embed_channels": (int, 16),
        "embed_height": (int, 2),
        "embed_width": (int, 4),
        "strides": (_strides, (4, 4, 2)),
        "reduction": (float, 2.0),
        "enc_width": (int, 32),
        "enc_expansion": (int, 4),
    },
    "train": {
        "epochs": (int, 300),
        "batch_size": (int, 2),
        "lr": (float, 1e-3),
        "warmup_frac": (float, 0.1),
        "seed": (int, 0),
        "eval_every": (int, 10),
    },
    "codec": {
        "bits_embed": (int, 6),
        "bits_weights": (int, 8),
    },
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {s: dict((k, d) for k, (_, d) in keys.items()) for s, keys in SCHEMA.items()}
        for section, entries in self.values.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in entries.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                parser = SCHEMA[section][key][0]
                try:
                    merged[section][key] = parser(raw)
                except (TypeError, ValueError) as e:
                    raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from e
        self.values = merged

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        parser = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {section}.{key}: {value!r}") from e

    def synth_spec(self) -> SynthSpec:
        c = self.values["core"]
        return SynthSpec(
            num_frames=c["synth_frames"],
            height=c["synth_height"],
            width=c["synth_width"],
            lf_motion=c["synth_lf_motion"],
            hf_texture_period=c["synth_texture_period"],
            hf_flicker=c["synth_flicker"],
            seed=c["synth_seed"],
        )

    def posenc_cfg(self) -> PosEncConfig:
        p = self.values["posenc"]
        return PosEncConfig(base=p["base"], split=p["split"], levels=p["levels"])

    def arch(self) -> ArchConfig:
        n = self.values["nets"]
        return ArchConfig(
            embed_shape=(n["embed_channels"], n["embed_height"], n["embed_width"]),
            strides=n["strides"],
            reduction=n["reduction"],
            enc_width=n["enc_width"],
            enc_expansion=n["enc_expansion"],
        )

    def train_cfg(self) -> TrainConfig:
        t = self.values["train"]
        return TrainConfig(
            epochs=t["epochs"],
            batch_size=t["batch_size"],
            lr=t["lr"],
            warmup_frac=t["warmup_frac"],
            seed=t["seed"],
            eval_every=t["eval_every"],
        )

    def render(self) -> str:
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key, val in self.values[section].items():
                if isinstance(val, tuple):
                    val = ",".join(str(v) for v in val)
                lines.append(f"{key} = {val}")
            lines.append("")
        return "\n".join(lines)


def load_config(path: Optional[str] = None) -> RunConfig:
    """Parse an INI config file; None yields the defaults."""
    if path is None:
        return RunConfig()
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"malformed config {path}: {e}") from e
    values: dict = {}
    for section in parser.sections():
        values[section] = dict(parser.items(section))
    return RunConfig(values=values)
