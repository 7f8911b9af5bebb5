"""Configuration objects shared by the model, trainer, data pipeline and CLI."""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigurationError

VARIANTS = ("baseline", "baseline_mbp", "rnn_mbp")
RESAMPLE_MODES = ("strided_conv", "bilinear")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    Args:
        base_channels: Feature width at full resolution.
        cab_reduction: Bottleneck reduction of the channel-attention gate.
        variant: One of ``baseline``, ``baseline_mbp`` or ``rnn_mbp``.
        resample_mode: Downsampling operator, ``strided_conv`` or ``bilinear``
            (bilinear resize followed by a 3x3 conv). Upsampling is always
            bilinear followed by a 3x3 conv.
        level_multipliers: Width of each of the three scale levels as a
            multiple of ``base_channels``.
        eq9_literal: Pair the forward encoder state with the backward
            *decoder* state in the first half-scale fusion term, as printed
            in the original formulation, instead of encoder-with-encoder.
    """

    base_channels: int = 64
    cab_reduction: int = 16
    variant: str = "rnn_mbp"
    resample_mode: str = "strided_conv"
    level_multipliers: tuple[int, int, int] = (1, 2, 3)
    eq9_literal: bool = False
    phi_cab_count: int = field(default=2, init=False)
    psi_cab_count: int = field(default=8, init=False)

    def __post_init__(self):
        object.__setattr__(self, "level_multipliers", tuple(int(m) for m in self.level_multipliers))
        errors = self.problems()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def problems(self) -> list[str]:
        errs = []
        if not isinstance(self.base_channels, int) or self.base_channels < 1:
            errs.append(f"base_channels must be a positive integer, got {self.base_channels!r}")
        if not isinstance(self.cab_reduction, int) or self.cab_reduction < 1:
            errs.append(f"cab_reduction must be a positive integer, got {self.cab_reduction!r}")
        if self.variant not in VARIANTS:
            errs.append(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.resample_mode not in RESAMPLE_MODES:
            errs.append(f"unknown resample_mode {self.resample_mode!r}; expected one of {', '.join(RESAMPLE_MODES)}")
        if len(self.level_multipliers) != 3 or any(m < 1 for m in self.level_multipliers):
            errs.append(f"level_multipliers must be three positive integers, got {self.level_multipliers!r}")
        if not errs:
            for w in self.level_widths:
                if w % self.cab_reduction:
                    errs.append(f"channel width {w} is not divisible by cab_reduction {self.cab_reduction}")
                    break
        return errs

    @property
    def level_widths(self) -> tuple[int, int, int]:
        return tuple(self.base_channels * m for m in self.level_multipliers)

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_channels": self.base_channels,
            "cab_reduction": self.cab_reduction,
            "variant": self.variant,
            "resample_mode": self.resample_mode,
            "level_multipliers": list(self.level_multipliers),
            "eq9_literal": self.eq9_literal,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelConfig":
        d = dict(d)
        if "level_multipliers" in d:
            d["level_multipliers"] = tuple(d["level_multipliers"])
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    lr_max: float = 2e-4
    lr_min: float = 1e-7
    total_steps: int = 500_000
    batch_size: int = 4
    seq_len: int = 8
    patch: int = 256
    charbonnier_eps: float = 1e-3
    seed: int = 0
    checkpoint_every: int = 5000
    max_grad_norm: Optional[float] = None
    augment: bool = True

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise ConfigurationError("; ".join(errors))

    def problems(self) -> list[str]:
        errs = []
        if not (0 <= self.lr_min <= self.lr_max):
            errs.append(f"need 0 <= lr_min <= lr_max, got lr_min={self.lr_min} lr_max={self.lr_max}")
        if self.total_steps < 0:
            errs.append(f"total_steps must be >= 0, got {self.total_steps}")
        if self.batch_size < 1:
            errs.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.seq_len < 1:
            errs.append(f"seq_len must be >= 1, got {self.seq_len}")
        if self.patch < 4 or self.patch % 4:
            errs.append(f"patch must be a positive multiple of 4, got {self.patch}")
        if self.charbonnier_eps <= 0:
            errs.append(f"charbonnier_eps must be > 0, got {self.charbonnier_eps}")
        if self.checkpoint_every < 1:
            errs.append(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            errs.append(f"max_grad_norm must be > 0 when set, got {self.max_grad_norm}")
        return errs

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DatasetSpec:
    root: Path
    split: str = "train"
    patch: Optional[int] = None
    seq_len: int = 8

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))
        if self.split not in ("train", "test"):
            raise ConfigurationError(f"split must be 'train' or 'test', got {self.split!r}")
        if self.seq_len < 1:
            raise ConfigurationError(f"seq_len must be >= 1, got {self.seq_len}")


def deterministic_requested() -> bool:
    return os.environ.get("MBP_DETERMINISTIC", "") == "1"


# --- declarative run configuration -------------------------------------------------

_SECTION_TYPES = {"model": ModelConfig, "train": TrainConfig}
_DATA_KEYS = {"root": str, "train_split": str, "test_split": str}
_RUN_KEYS = {"dir": str, "deterministic": bool}


def _field_types(cls) -> dict[str, Any]:
    defaults = {f.name: f for f in fields(cls) if f.init}
    out = {}
    for name, f in defaults.items():
        default = f.default
        if name == "level_multipliers":
            out[name] = "ints"
        elif name == "max_grad_norm":
            out[name] = "optfloat"
        else:
            out[name] = type(default)
    return out


def _coerce(raw: str, kind) -> Any:
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "ints":
        return tuple(int(p) for p in raw.replace(",", " ").split())
    if kind == "optfloat":
        return None if raw.strip().lower() in ("", "none") else float(raw)
    if kind is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    return kind(raw)


@dataclass
class RunConfig:
    """Merged model, training, data and run settings."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data_root: Optional[str] = None
    run_dir: Optional[str] = None
    deterministic: bool = False

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["model"] = {k: (" ".join(map(str, v)) if isinstance(v, list) else str(v))
                       for k, v in self.model.to_dict().items()}
        cp["train"] = {k: ("none" if v is None else str(v)) for k, v in self.train.to_dict().items()}
        cp["data"] = {"root": self.data_root or ""}
        cp["run"] = {"dir": self.run_dir or "", "deterministic": str(self.deterministic)}
        import io
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def load_run_config(path: Optional[str | Path], overrides: dict[str, dict[str, Any]] | None = None) -> RunConfig:
    """Read an INI-style config file and apply command-line overrides.

    ``overrides`` maps section name to already-typed values; they win over
    the file. Every problem found is collected and reported together.
    """
    values: dict[str, dict[str, Any]] = {"model": {}, "train": {}, "data": {}, "run": {}}
    errors: list[str] = []
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        for section in cp.sections():
            if section not in values:
                errors.append(f"unknown section [{section}]")
                continue
            if section in _SECTION_TYPES:
                types = _field_types(_SECTION_TYPES[section])
            else:
                types = _DATA_KEYS if section == "data" else _RUN_KEYS
            for key, raw in cp.items(section):
                if key not in types:
                    errors.append(f"unknown key '{key}' in [{section}]")
                    continue
                try:
                    values[section][key] = _coerce(raw, types[key])
                except ValueError as exc:
                    errors.append(f"[{section}] {key}: {exc}")
    for section, kv in (overrides or {}).items():
        for key, val in kv.items():
            if val is not None:
                values[section][key] = val

    model = train = None
    for section, cls in _SECTION_TYPES.items():
        try:
            obj = object.__new__(cls)
            probe = {f.name: f.default for f in fields(cls) if f.init}
            probe.update(values[section])
            if section == "model" and "level_multipliers" in probe:
                probe["level_multipliers"] = tuple(probe["level_multipliers"])
            for k, v in probe.items():
                object.__setattr__(obj, k, v)
            errors.extend(f"[{section}] {e}" for e in obj.problems())
            if section == "model":
                model = obj
            else:
                train = obj
        except TypeError as exc:
            errors.append(f"[{section}] {exc}")
    if errors:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(
        model=ModelConfig(**values["model"]),
        train=TrainConfig(**values["train"]),
        data_root=values["data"].get("root") or None,
        run_dir=values["run"].get("dir") or None,
        deterministic=bool(values["run"].get("deterministic", False)) or deterministic_requested(),
    )
