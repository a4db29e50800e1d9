"""Experiment configuration: a flat JSON schema, file values overridden by flags.

Every field is a JSON scalar or list. Geometry presets (``canonical``,
``desk``, ``reduced``) fill the classifier geometry fields in one go; the
resolved values are what ``run.json`` records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from usvideo.classifier.model import CANONICAL, DESK, REDUCED, ClassifierArch
from usvideo.classifier.training import SAMPLINGS, ClassifierTrainConfig
from usvideo.data.synthetic import SyntheticConfig
from usvideo.errors import ConfigurationError
from usvideo.localizer import LocalizerTrainConfig

PRESETS = {"canonical": CANONICAL, "desk": DESK, "reduced": REDUCED}
KEY_FRAME_SOURCES = ("gt", "predicted")
_GEOMETRY = ("clip_length", "clip_size", "widths", "strides", "attention_widths", "fc_hidden")


@dataclass
class ExperimentConfig:
    seed: int = 0
    data_dir: str = "data"
    out_dir: str = "run"
    precision: str = "f64"
    # synthetic data
    n_videos: int = 100
    n_frames: int = 96
    frame_size: int = 256
    benign_fraction: float = 0.5
    # localizer
    localizer_lr: float = 0.01
    localizer_batch_size: int = 64
    localizer_epochs: int = 20
    test_fraction: float = 0.2
    # classifier geometry
    clip_length: int = CANONICAL.clip_length
    clip_size: int = CANONICAL.clip_size
    widths: list = field(default_factory=lambda: list(CANONICAL.widths))
    strides: list = field(default_factory=lambda: [list(s) for s in CANONICAL.strides])
    attention_widths: list = field(default_factory=lambda: list(CANONICAL.attention_widths))
    fc_hidden: int = CANONICAL.fc_hidden
    dropout: float = 0.5
    # classifier training
    classifier_lr: float = 1e-3
    classifier_lr_low: float = 1e-4
    epochs_high: int = 20
    epochs_low: int = 20
    weight_decay: float = 1e-8
    batch_size: int = 16
    augment: bool = True
    folds: int = 5
    key_frame_source: str = "gt"
    # ablation toggles for single-model commands
    sampling: str = "keyframe"
    attention: bool = True
    spp: bool = True

    def validate(self) -> "ExperimentConfig":
        positive = (
            "n_videos", "n_frames", "frame_size", "localizer_lr", "localizer_batch_size", "localizer_epochs",
            "clip_length", "clip_size", "fc_hidden", "classifier_lr", "classifier_lr_low", "batch_size", "folds",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs_high < 0 or self.epochs_low < 0 or self.weight_decay < 0:
            raise ConfigurationError("epoch counts and weight decay must be non-negative")
        if self.clip_length % 2:
            raise ConfigurationError(f"clip_length must be even, got {self.clip_length}")
        if not 0 < self.test_fraction < 1:
            raise ConfigurationError("test_fraction must lie in (0, 1)")
        if self.precision not in ("f64", "f32"):
            raise ConfigurationError(f"precision must be f64 or f32, got {self.precision!r}")
        if self.key_frame_source not in KEY_FRAME_SOURCES:
            raise ConfigurationError(f"key_frame_source must be one of {KEY_FRAME_SOURCES}")
        if self.sampling not in SAMPLINGS:
            raise ConfigurationError(f"sampling must be one of {SAMPLINGS}")
        if self.folds < 2:
            raise ConfigurationError("folds must be at least 2")
        self.arch().validate()
        self.synthetic().validate()
        return self

    def arch(self, attention: bool | None = None, spp: bool | None = None) -> ClassifierArch:
        return ClassifierArch(
            clip_length=self.clip_length,
            clip_size=self.clip_size,
            widths=tuple(self.widths),
            strides=tuple(tuple(s) for s in self.strides),
            attention_widths=tuple(self.attention_widths),
            fc_hidden=self.fc_hidden,
            dropout=self.dropout,
            attention=self.attention if attention is None else attention,
            spp=self.spp if spp is None else spp,
        )

    def synthetic(self) -> SyntheticConfig:
        return SyntheticConfig(
            n_videos=self.n_videos,
            n_frames=self.n_frames,
            height=self.frame_size,
            width=self.frame_size,
            benign_fraction=self.benign_fraction,
            clip_length=self.clip_length,
        )

    def localizer_training(self) -> LocalizerTrainConfig:
        return LocalizerTrainConfig(self.localizer_lr, self.localizer_batch_size, self.localizer_epochs, self.seed)

    def classifier_training(self) -> ClassifierTrainConfig:
        return ClassifierTrainConfig(
            lr=self.classifier_lr,
            lr_low=self.classifier_lr_low,
            epochs_high=self.epochs_high,
            epochs_low=self.epochs_low,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            augment=self.augment,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def apply_preset(config: ExperimentConfig, name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    arch = PRESETS[name]
    values = {k: getattr(arch, k) for k in _GEOMETRY}
    values["widths"] = list(arch.widths)
    values["strides"] = [list(s) for s in arch.strides]
    values["attention_widths"] = list(arch.attention_widths)
    return replace(config, **values)


def _coerce(name: str, value):
    default = getattr(ExperimentConfig(), name)
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() not in ("true", "false", "1", "0"):
                raise ConfigurationError(f"{name} expects true/false, got {value!r}")
            return value.lower() in ("true", "1")
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigurationError(f"{name} expects an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, list):
        if isinstance(value, str):
            value = json.loads(value)
        if not isinstance(value, list):
            raise ConfigurationError(f"{name} expects a list, got {value!r}")
        return value
    return str(value)


def update(config: ExperimentConfig, values: dict) -> ExperimentConfig:
    unknown = sorted(set(values) - set(FIELD_TYPES))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return replace(config, **{k: _coerce(k, v) for k, v in values.items()})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from exc


def load_config_file(path) -> dict:
    """Read a config or ``run.json``; a ``config`` sub-object is used if present."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    return doc.get("config", doc)
