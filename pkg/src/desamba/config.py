"""Model/experiment configuration, the ablation registry and seed derivation.

Config files are YAML documents with a few nested sections::

    seed: 0
    model:
      num_sequences: 3
      num_classes: 6
      input_shape: [16, 64, 64]
      stage_depths: [3, 4, 6, 3]
      stage_widths: [32, 64, 128, 256]
    flags:
      TE: true    # tabular encoder
      CE: true    # CNN (SAMNet / ConvNeXtV2) encoder
      FP: true    # frequency pathway inside SAMNet
      ME: true    # MambaOut encoder
      De: true    # decoupled representation learning
      C: true     # cross-reconstruction loss
      S: true     # self-reconstruction loss
    loss:
      alpha: 0.5
      beta: 0.5
    train:
      epochs: 10
      batch_size: 4

Every key is optional; omitted keys take the defaults of :class:`ModelConfig`
and :class:`TrainConfig`. ``DESAMBA_SEED`` in the environment overrides the
seed of any loaded file.
"""
from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError, ValidationError

SEED_ENV_VAR = "DESAMBA_SEED"

# Column order of the ablation truth table.
FLAG_NAMES = ("TE", "CE", "FP", "ME", "De", "C", "S")
_FLAG_FIELDS = {
    "TE": "enable_tabular_encoder",
    "CE": "enable_cnn_encoder",
    "FP": "enable_frequency_path",
    "ME": "enable_mamba_encoder",
    "De": "enable_decouple",
    "C": "enable_cross_loss",
    "S": "enable_self_loss",
}

#              TE CE FP ME De C  S
ABLATION_TABLE = {
    "CNV2":     (0, 1, 0, 0, 0, 0, 0),
    "SAMNet":   (0, 1, 1, 0, 0, 0, 0),
    "MO":       (0, 0, 0, 1, 0, 0, 0),
    "DeSN":     (0, 1, 1, 0, 1, 1, 1),
    "DeMO":     (0, 0, 0, 1, 1, 1, 1),
    "Samba":    (0, 1, 1, 1, 0, 0, 0),
    "w/TF":     (1, 1, 1, 1, 0, 0, 0),
    "w/De(C)":  (1, 1, 1, 1, 1, 1, 0),
    "w/De(S)":  (1, 1, 1, 1, 1, 0, 1),
    "DeSamba":  (1, 1, 1, 1, 1, 1, 1),
}


def derive_seed(seed: int, component: str) -> int:
    """Deterministically derive a per-component seed from a global seed.

    The derived seed is the first 8 bytes (big endian) of
    ``sha256(f"{seed}:{component}")`` reduced to 63 bits, so it is stable
    across processes and platforms.
    """
    digest = hashlib.sha256(f"{int(seed)}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


@dataclass(frozen=True)
class ModelConfig:
    num_sequences: int = 3
    num_classes: int = 6
    input_shape: tuple[int, int, int] = (16, 64, 64)
    stage_depths: tuple[int, ...] = (3, 4, 6, 3)
    stage_widths: tuple[int, ...] = (32, 64, 128, 256)
    enable_frequency_path: bool = True
    enable_mamba_encoder: bool = True
    enable_cnn_encoder: bool = True
    enable_tabular_encoder: bool = True
    enable_decouple: bool = True
    enable_cross_loss: bool = True
    enable_self_loss: bool = True
    loss_alpha: float = 0.5
    loss_beta: float = 0.5
    seed: int = 0
    sequence_names: tuple[str, ...] = ("T1", "T2", "T2FS")
    feature_dim: int = 256
    unique_dim: int | None = None  # defaults to feature_dim // 2
    shared_dim: int | None = None  # defaults to feature_dim // 2
    tabular_dim: int = 32
    head_hidden: int = 128
    dropout: float = 0.1
    # with two sequences, cross-reconstruction decodes from U_i alone
    cross_single_fallback: bool = True

    def __post_init__(self):
        for name in ("input_shape", "stage_depths", "stage_widths", "sequence_names"):
            value = getattr(self, name)
            if isinstance(value, list):
                object.__setattr__(self, name, tuple(value))
        self.validate()

    @property
    def d_unique(self) -> int:
        return self.unique_dim if self.unique_dim is not None else self.feature_dim // 2

    @property
    def d_shared(self) -> int:
        return self.shared_dim if self.shared_dim is not None else self.feature_dim // 2

    def flags(self) -> dict[str, bool]:
        return {k: bool(getattr(self, f)) for k, f in _FLAG_FIELDS.items()}

    def flag_vector(self) -> tuple[int, ...]:
        return tuple(int(getattr(self, _FLAG_FIELDS[k])) for k in FLAG_NAMES)

    def validate(self) -> None:
        if self.num_sequences not in (2, 3):
            raise ValidationError("num_sequences", f"must be 2 or 3, got {self.num_sequences}")
        if len(self.sequence_names) != self.num_sequences:
            raise ValidationError(
                "sequence_names",
                f"{len(self.sequence_names)} names for {self.num_sequences} sequences")
        if len(set(self.sequence_names)) != len(self.sequence_names):
            raise ValidationError("sequence_names", "names must be unique")
        if self.num_classes < 2:
            raise ValidationError("num_classes", f"must be >= 2, got {self.num_classes}")
        if len(self.input_shape) != 3 or any(int(s) < 1 for s in self.input_shape):
            raise ValidationError("input_shape", f"need 3 positive sizes, got {self.input_shape}")
        if len(self.stage_depths) != 4 or any(int(d) < 1 for d in self.stage_depths):
            raise ValidationError("stage_depths", f"need 4 entries >= 1, got {self.stage_depths}")
        if len(self.stage_widths) != 4 or any(int(w) < 1 for w in self.stage_widths):
            raise ValidationError("stage_widths", f"need 4 entries >= 1, got {self.stage_widths}")
        if not (self.enable_cnn_encoder or self.enable_mamba_encoder):
            raise ValidationError("enable_cnn_encoder",
                                  "at least one of the CNN and Mamba encoders must be enabled")
        if self.enable_frequency_path and not self.enable_cnn_encoder:
            raise ValidationError("enable_frequency_path",
                                  "the frequency path lives inside the CNN encoder")
        if self.enable_cross_loss and not self.enable_decouple:
            raise ValidationError("enable_cross_loss", "requires enable_decouple")
        if self.enable_self_loss and not self.enable_decouple:
            raise ValidationError("enable_self_loss", "requires enable_decouple")
        if (self.enable_cross_loss and self.num_sequences == 2
                and not self.cross_single_fallback):
            raise ValidationError(
                "enable_cross_loss",
                "two sequences leave no shared feature excluding sequence i; "
                "enable cross_single_fallback or disable the cross loss")
        for name in ("loss_alpha", "loss_beta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(name, f"must lie in [0, 1], got {v}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout", f"must lie in [0, 1), got {self.dropout}")
        for name in ("feature_dim", "tabular_dim", "head_hidden"):
            if getattr(self, name) < 1:
                raise ValidationError(name, "must be positive")
        if self.d_unique < 1 or self.d_shared < 1:
            raise ValidationError("feature_dim", "unique/shared dims must be positive")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 0.05
    warmup_epochs: int = 0
    augment: bool = True
    val_fraction: float = 0.2
    grad_clip: float | None = 5.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("epochs", "must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size", "must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr", "must be positive")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValidationError("val_fraction", "must lie in [0, 1)")


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def seed(self) -> int:
        return self.model.seed


_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)} - {"seed"} - set(_FLAG_FIELDS.values())
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


def _check_keys(section: str, data: Mapping, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ValidationError(f"{section}.{unknown[0]}", "unknown key")


def config_from_dict(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a parsed tree."""
    data = dict(data or {})
    _check_keys("<root>", data, {"seed", "model", "flags", "loss", "train"})
    kwargs: dict[str, Any] = {}
    model = data.get("model") or {}
    _check_keys("model", model, _MODEL_KEYS)
    kwargs.update(model)
    flags = data.get("flags") or {}
    _check_keys("flags", flags, _FLAG_FIELDS)
    for key, value in flags.items():
        if not isinstance(value, bool):
            raise ValidationError(f"flags.{key}", f"expected true/false, got {value!r}")
        kwargs[_FLAG_FIELDS[key]] = value
    loss = data.get("loss") or {}
    _check_keys("loss", loss, {"alpha", "beta"})
    if "alpha" in loss:
        kwargs["loss_alpha"] = float(loss["alpha"])
    if "beta" in loss:
        kwargs["loss_beta"] = float(loss["beta"])
    if "seed" in data:
        kwargs["seed"] = int(data["seed"])
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed not in (None, ""):
        try:
            kwargs["seed"] = int(env_seed)
        except ValueError:
            raise ValidationError("seed", f"{SEED_ENV_VAR}={env_seed!r} is not an integer") from None
    train = data.get("train") or {}
    _check_keys("train", train, _TRAIN_KEYS)
    try:
        model_cfg = ModelConfig(**kwargs)
        train_cfg = TrainConfig(**train)
    except TypeError as exc:
        raise ValidationError("<root>", str(exc)) from None
    return ExperimentConfig(model=model_cfg, train=train_cfg)


def config_to_dict(cfg: ExperimentConfig | ModelConfig) -> dict[str, Any]:
    """Inverse of :func:`config_from_dict`; the result round-trips exactly."""
    if isinstance(cfg, ModelConfig):
        cfg = ExperimentConfig(model=cfg)
    m = cfg.model
    model = {}
    for name in sorted(_MODEL_KEYS):
        value = getattr(m, name)
        model[name] = list(value) if isinstance(value, tuple) else value
    return {
        "seed": m.seed,
        "model": model,
        "flags": m.flags(),
        "loss": {"alpha": m.loss_alpha, "beta": m.loss_beta},
        "train": dataclasses.asdict(cfg.train),
    }


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    """Parse and validate a YAML config file.

    Raises :class:`ConfigError` (with line/column context) on syntax errors and
    :class:`ValidationError` naming the field on invariant violations.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{path}{where}: {problem}") from None
    if data is not None and not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data or {})


def save_config(cfg: ExperimentConfig | ModelConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))


def ablation_config(name: str, base: ModelConfig | None = None) -> ModelConfig:
    """Return ``base`` with the flag pattern of the named ablation variant."""
    if name not in ABLATION_TABLE:
        raise KeyError(f"unknown ablation variant {name!r}; valid names: "
                       + ", ".join(ABLATION_TABLE))
    base = base if base is not None else ModelConfig()
    flags = dict(zip(FLAG_NAMES, ABLATION_TABLE[name]))
    changes = {_FLAG_FIELDS[k]: bool(v) for k, v in flags.items()}
    if base.num_sequences == 2 and not base.cross_single_fallback:
        changes["enable_cross_loss"] = False
    return dataclasses.replace(base, **changes)


def ablation_registry(base: ModelConfig | None = None) -> dict[str, ModelConfig]:
    return {name: ablation_config(name, base) for name in ABLATION_TABLE}
