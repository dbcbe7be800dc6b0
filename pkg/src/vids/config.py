"""Pipeline configuration: flat INI sections mapped onto the module configs.

Schema (all keys optional; defaults shown in docs/config-example.ini):

    [run]      seed, out, mode
    [data]     train, test, labels, window, stride
    [synth]    normal_vehicles, messages, dt, noise_std, area, speed_min,
               speed_max, accel_scale, offset_scale, attacks (name:count,...)
    [stage1]   variant, latent_dim, lambda_gp, alpha, epochs, batch_size,
               learning_rate, width_scale, critic_steps, penalty_point
    [stage2]   conv_layers, lstm, loss, smoothing, gamma, epochs, batch_size,
               learning_rate, hidden, conv_channels, val_fraction
    [unseen]   known_classes, percentile
    [compress] prune_ratio, finetune_epochs, bits, calibration
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .compress.prune import PruneConfig
from .data.synth import SynthConfig
from .errors import VidsError
from .stage1.model import Stage1Config
from .stage1.scoring import DECISION_MODES
from .stage2.model import Stage2Config
from .stage2.unseen import UnseenConfig
from .tensor import OptimizerConfig


@dataclass
class DataConfig:
    train: str = ""
    test: str = ""
    labels: str = ""
    window: int = 20
    stride: int = 20


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    mode: str = "band_llul"
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    unseen: UnseenConfig = field(default_factory=UnseenConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    bits: int = 8
    calibration: int = 512

    def __post_init__(self):
        if self.mode not in DECISION_MODES:
            raise VidsError(f"unknown decision mode {self.mode!r}")


def _parse_attacks(raw: str) -> dict:
    out = {}
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        name, _, count = part.partition(":")
        out[name.strip()] = int(count or 1)
    return out


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Build a PipelineConfig from an INI file plus CLI overrides."""
    parser = configparser.ConfigParser()
    if path is not None:
        if not Path(path).exists():
            raise VidsError(f"config file {path} does not exist")
        parser.read(path)
    overrides = overrides or {}

    def get(section, key, default, cast):
        if f"{section}.{key}" in overrides:
            return cast(overrides[f"{section}.{key}"])
        if parser.has_option(section, key):
            return cast(parser.get(section, key))
        return default

    seed = get("run", "seed", 0, int)
    window = get("data", "window", 20, int)

    data = DataConfig(
        train=get("data", "train", "", str),
        test=get("data", "test", "", str),
        labels=get("data", "labels", "", str),
        window=window,
        stride=get("data", "stride", window, int),
    )
    synth = SynthConfig(
        normal_vehicles=get("synth", "normal_vehicles", 10, int),
        attacks=get("synth", "attacks", {}, _parse_attacks),
        messages=get("synth", "messages", 200, int),
        dt=get("synth", "dt", 1.0, float),
        noise_std=get("synth", "noise_std", 0.0, float),
        area=get("synth", "area", 500.0, float),
        speed_min=get("synth", "speed_min", 5.0, float),
        speed_max=get("synth", "speed_max", 15.0, float),
        accel_scale=get("synth", "accel_scale", 0.5, float),
        offset_scale=get("synth", "offset_scale", 80.0, float),
    )
    stage1 = Stage1Config(
        variant=get("stage1", "variant", "M1", str),
        latent_dim=get("stage1", "latent_dim", 100, int),
        lambda_gp=get("stage1", "lambda_gp", 10.0, float),
        alpha=get("stage1", "alpha", 0.5, float),
        epochs=get("stage1", "epochs", 30, int),
        window=window,
        width_scale=get("stage1", "width_scale", 1.0, float),
        critic_steps=get("stage1", "critic_steps", 1, int),
        penalty_point=get("stage1", "penalty_point", "generated", str),
        optimizer=OptimizerConfig(
            kind="rmsprop",
            learning_rate=get("stage1", "learning_rate", 2e-4, float),
            batch_size=get("stage1", "batch_size", 64, int),
            seed=seed),
        seed=seed,
    )
    stage2 = Stage2Config(
        conv_layers=get("stage2", "conv_layers", 2, int),
        lstm_kind=get("stage2", "lstm", "unidirectional", str),
        loss=get("stage2", "loss", "lsmooth", str),
        smoothing=get("stage2", "smoothing", 0.1, float),
        gamma=get("stage2", "gamma", 2.0, float),
        epochs=get("stage2", "epochs", 100, int),
        hidden=get("stage2", "hidden", 64, int),
        conv_channels=get("stage2", "conv_channels", (32, 64),
                          lambda s: tuple(int(v) for v in str(s).split(","))
                          if isinstance(s, str) else s),
        window=window,
        val_fraction=get("stage2", "val_fraction", 0.2, float),
        optimizer=OptimizerConfig(
            kind="adam",
            learning_rate=get("stage2", "learning_rate", 3e-4, float),
            batch_size=get("stage2", "batch_size", 64, int),
            seed=seed),
        seed=seed,
    )
    unseen = UnseenConfig(
        known_classes=get("unseen", "known_classes", tuple(range(1, 10)),
                          lambda s: tuple(int(v) for v in str(s).split(","))
                          if isinstance(s, str) else s),
        percentile=get("unseen", "percentile", 91.0, float),
    )
    prune = PruneConfig(
        ratio=get("compress", "prune_ratio", 0.4, float),
        finetune_epochs=get("compress", "finetune_epochs", 10, int),
    )
    return PipelineConfig(
        seed=seed,
        out_dir=get("run", "out", "out", str),
        mode=get("run", "mode", "band_llul", str),
        data=data, synth=synth, stage1=stage1, stage2=stage2, unseen=unseen,
        prune=prune,
        bits=get("compress", "bits", 8, int),
        calibration=get("compress", "calibration", 512, int),
    )
