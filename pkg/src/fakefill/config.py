"""Dataclass configs and the INI-style run-config file format.

A run config merges the model, mask, loss, and trainer sections plus a
[paths] section.  Files are flat ``key = value`` INI sections; parsing
rejects unknown sections and keys, and ``dump_config(parse_config(text))``
is a fixpoint (the normalized form), so configs diff cleanly between
experiments.
"""

from __future__ import annotations

import configparser
import math
import typing
from dataclasses import dataclass, field, fields

from .errors import ConfigError

CONFIG_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    resolution: int = 128
    coarse_levels: int = 3
    dam_levels: int = 4
    base_width: int = 48
    width_multiplier: int = 2
    max_width_factor: int = 8
    dilation_rates: tuple[int, ...] = (2, 4, 8)
    norm: str = "instance"  # {"none", "instance"}
    activation_slope: float = 0.2
    disc_base_width: int = 64
    disc_max_width: int = 512

    def width(self, level: int) -> int:
        """Channel width of encoder/decoder level ``level`` (0 = stem)."""
        return min(
            self.base_width * self.width_multiplier**level,
            self.base_width * self.max_width_factor,
        )

    def fakeness_sides(self) -> list[int]:
        """Spatial side of each fakeness map, ordered j=0 (finest) .. j=3."""
        return [self.resolution // 2**j for j in range(self.dam_levels)]

    def validate(self) -> None:
        if self.dam_levels != 4:
            raise ConfigError("model.dam_levels must be 4 (the fakeness pyramid sums exactly four scales)")
        if self.resolution <= 0 or self.resolution % 2**self.dam_levels != 0:
            raise ConfigError(
                f"model.resolution {self.resolution} must be a positive multiple of "
                f"2^dam_levels = {2**self.dam_levels}"
            )
        if self.coarse_levels < 1:
            raise ConfigError("model.coarse_levels must be >= 1")
        if self.resolution % 2**self.coarse_levels != 0:
            raise ConfigError(
                f"model.resolution {self.resolution} must be divisible by "
                f"2^coarse_levels = {2**self.coarse_levels}"
            )
        if self.base_width < 1 or self.width_multiplier < 1 or self.max_width_factor < 1:
            raise ConfigError("model widths must be positive")
        if not self.dilation_rates or any(d < 1 for d in self.dilation_rates):
            raise ConfigError("model.dilation_rates must be a non-empty list of positive ints")
        if self.norm not in ("none", "instance"):
            raise ConfigError(f"model.norm must be 'none' or 'instance', got {self.norm!r}")
        if not 0.0 <= self.activation_slope < 1.0:
            raise ConfigError("model.activation_slope must be in [0, 1)")
        if self.disc_base_width < 1 or self.disc_max_width < self.disc_base_width:
            raise ConfigError("model discriminator widths must satisfy 1 <= base <= max")


@dataclass
class MaskSpec:
    mode: str = "mixed"  # {"center", "free_form", "mixed"}; mixed alternates per batch
    center_size: int = 64
    stroke_count: tuple[int, int] = (1, 4)
    stroke_width: tuple[int, int] = (12, 24)
    vertex_count: tuple[int, int] = (4, 12)
    max_turn_angle: float = 2.0 * math.pi / 5.0
    coverage: tuple[float, float] = (0.1, 0.4)
    seed: int = 0

    def validate(self) -> None:
        if self.mode not in ("center", "free_form", "mixed"):
            raise ConfigError(f"mask.mode must be center, free_form, or mixed, got {self.mode!r}")
        if self.center_size <= 0 or self.center_size % 2 != 0:
            raise ConfigError(f"mask.center_size must be positive and even, got {self.center_size}")
        for name in ("stroke_count", "stroke_width", "vertex_count"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"mask.{name} range [{lo}, {hi}] is empty or non-positive")
        lo, hi = self.coverage
        if not (0.0 < lo <= hi < 1.0):
            raise ConfigError(f"mask.coverage range [{lo}, {hi}] must lie inside (0, 1)")
        if self.max_turn_angle < 0:
            raise ConfigError("mask.max_turn_angle must be >= 0")


@dataclass
class LossWeights:
    lambda_re: float = 1.0
    lambda_adv: float = 0.001
    lambda_dam: float = 0.005

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"loss.{f.name} must be finite and >= 0, got {v}")


@dataclass
class TrainConfig:
    batch_size: int = 16
    steps: int = 2000
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    d_steps_per_g: int = 1
    seed: int = 0
    checkpoint_every: int = 1000
    eval_every: int = 0  # 0 disables periodic validation
    fill: str = "zeros"  # {"zeros", "dataset_mean"}

    def validate(self) -> None:
        if self.steps < 0:
            raise ConfigError("train.steps must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ConfigError("train.lr_g and train.lr_d must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise ConfigError(f"train.{name} must be in [0, 1), got {b}")
        if self.adam_eps <= 0:
            raise ConfigError("train.adam_eps must be > 0")
        if self.d_steps_per_g < 1:
            raise ConfigError("train.d_steps_per_g must be >= 1")
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise ConfigError("train.checkpoint_every and train.eval_every must be >= 0")
        if self.fill not in ("zeros", "dataset_mean"):
            raise ConfigError(f"train.fill must be 'zeros' or 'dataset_mean', got {self.fill!r}")


@dataclass
class Paths:
    data_root: str = "."
    manifest: str = "manifest.tsv"
    out_dir: str = "runs/default"

    def validate(self) -> None:
        for f in fields(self):
            if not getattr(self, f.name):
                raise ConfigError(f"paths.{f.name} must be non-empty")


@dataclass
class RunConfig:
    paths: Paths = field(default_factory=Paths)
    model: ModelConfig = field(default_factory=ModelConfig)
    mask: MaskSpec = field(default_factory=MaskSpec)
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        self.paths.validate()
        self.model.validate()
        self.mask.validate()
        self.loss.validate()
        self.train.validate()
        if self.mask.center_size > self.model.resolution:
            raise ConfigError(
                f"mask.center_size {self.mask.center_size} exceeds model.resolution {self.model.resolution}"
            )


# Section name -> RunConfig attribute, in canonical dump order.
_SECTIONS: dict[str, str] = {
    "paths": "paths",
    "model": "model",
    "mask": "mask",
    "loss": "loss",
    "train": "train",
}


def _parse_value(raw: str, tp) -> object:
    origin = typing.get_origin(tp)
    if tp is int:
        return int(raw)
    if tp is float:
        return float(raw)
    if tp is str:
        return raw.strip()
    if origin is tuple:
        args = typing.get_args(tp)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if args[-1] is Ellipsis:
            elem = args[0]
            return tuple(elem(p) for p in parts)
        if len(parts) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values, got {len(parts)}")
        return tuple(elem(p) for elem, p in zip(args, parts))
    raise ValueError(f"unsupported config field type {tp}")


def _format_value(value: object) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply_section(obj, section: str, items: typing.Iterable[tuple[str, str]]) -> None:
    hints = typing.get_type_hints(type(obj))
    known = {f.name for f in fields(obj)}
    for key, raw in items:
        if key not in known:
            raise ConfigError(f"unknown config key: {section}.{key}")
        try:
            setattr(obj, key, _parse_value(raw, hints[key]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({exc})") from exc


def parse_config(text: str, overrides: typing.Sequence[str] = ()) -> RunConfig:
    """Parse an INI run config, apply ``section.key=value`` overrides, validate."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    cfg = RunConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section: [{section}]")
        _apply_section(getattr(cfg, _SECTIONS[section]), section, parser.items(section))

    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        dotted, raw = ov.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section in override: {section!r}")
        _apply_section(getattr(cfg, _SECTIONS[section]), section, [(key.strip(), raw.strip())])

    cfg.validate()
    return cfg


def load_config(path: str, overrides: typing.Sequence[str] = ()) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, overrides)


def dump_config(cfg: RunConfig) -> str:
    """Serialize to the normalized INI form (fixpoint of parse -> dump)."""
    lines: list[str] = []
    for section, attr in _SECTIONS.items():
        obj = getattr(cfg, attr)
        lines.append(f"[{section}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)
