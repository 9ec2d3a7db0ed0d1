"""Pipeline configuration: flat ``key = value`` text files.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
List-valued keys (``methods``, ``closing_applies_to``) take comma-separated
values.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .attribution import METHODS
from .maskpipe import BinarizeConfig
from .vit import ViTConfig

TARGET_POLICIES = ("predicted", "true_label")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 1
    n_train: int = 600
    n_eval: int = 50
    # model
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 16
    n_layers: int = 2
    n_heads: int = 2
    n_classes: int = 4
    # training
    epochs: int = 30
    learning_rate: float = 0.01
    batch_size: int = 16
    momentum: float = 0.9
    # attribution
    methods: tuple = METHODS
    target_policy: str = "predicted"
    ig_steps: int = 64
    gs_samples: int = 64
    gs_sigma: float = 0.05
    grid_side: int = 4
    lime_samples: int = 200
    lime_lambda: float = 0.01
    lime_kernel_width: float = 0.5
    kshap_samples: int = 2000
    # binarization
    threshold_mode: str = "otsu"
    percentile: float = 0.25
    closing_kernel: int = 3
    closing_applies_to: tuple = ("pixel",)
    # reporting
    overlay_images: int = 4
    out_dir: str = "out"

    def __post_init__(self):
        methods = tuple(self.methods)
        object.__setattr__(self, "methods", methods)
        object.__setattr__(self, "closing_applies_to", tuple(self.closing_applies_to))
        if not methods:
            raise ConfigError("at least one method must be enabled")
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(methods)) != len(methods):
            raise ConfigError("methods contains duplicates")
        if self.target_policy not in TARGET_POLICIES:
            raise ConfigError(f"target_policy must be one of {TARGET_POLICIES}")
        for name in ("n_train", "n_eval", "batch_size", "ig_steps", "gs_samples", "grid_side"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        for name in ("epochs", "overlay_images", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.learning_rate < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("learning_rate must be >= 0 and momentum in [0, 1)")
        if self.gs_sigma < 0 or self.lime_lambda < 0 or self.lime_kernel_width <= 0:
            raise ConfigError("gs_sigma and lime_lambda must be >= 0, lime_kernel_width > 0")
        if self.image_size % self.grid_side:
            raise ConfigError(f"grid_side {self.grid_side} does not divide image_size {self.image_size}")
        n_seg = self.grid_side ** 2
        if "lime" in methods and self.lime_samples < n_seg + 2:
            raise ConfigError(f"lime_samples must be >= {n_seg + 2} for {n_seg} segments")
        if "kernel_shap" in methods and (n_seg < 2 or self.kshap_samples < n_seg + 2):
            raise ConfigError(f"kernel_shap needs >= 2 segments and kshap_samples >= {n_seg + 2}")
        try:
            self.vit_config()
            self.binarize_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def vit_config(self) -> ViTConfig:
        return ViTConfig(self.image_size, self.patch_size, self.embed_dim, self.n_layers,
                         self.n_heads, self.n_classes, self.seed)

    def binarize_config(self) -> BinarizeConfig:
        return BinarizeConfig(self.threshold_mode, self.percentile, self.closing_kernel,
                              frozenset(self.closing_applies_to))

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def snapshot(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _parse_value(f: dataclasses.Field, raw: str):
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, tuple):
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{f.name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{f.name}: expected a number, got {raw!r}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> PipelineConfig:
    known = {f.name: f for f in fields(PipelineConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(known[key], raw)
    return PipelineConfig(**values)


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def format_config(cfg: PipelineConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {','.join(v) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"
