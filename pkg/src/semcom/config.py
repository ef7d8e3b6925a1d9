"""Experiment configuration in a flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

from .data import SHAPES
from .vit import VitConfig


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "toy"
    # data: generated unless train_data / test_data point at SEMD files
    num_classes: int = 4
    per_class: int = 32
    test_per_class: int = 16
    image_h: int = 32
    image_w: int = 32
    patch_size: int = 8
    data_seed: int = 0
    train_data: str = ""
    test_data: str = ""
    # encoder
    dim: int = 32
    heads: int = 4
    layers: int = 2
    mlp_hidden: int = 64
    attn_scale: str = "model"
    # grid
    rates: tuple = (0.25, 0.5, 0.75, 1.0)
    alphas: tuple = (1.0, 0.85)
    beta: float = 0.3
    seeds: tuple = (0,)
    # training
    encoder_epochs: int = 30
    decoder_epochs: int = 30
    classifier_epochs: int = 30
    finetune_epochs: int = 30
    batch_size: int = 32
    lr: float = 5e-4
    classifier: bool = True
    out: str = "runs/toy"

    def validate(self):
        if not self.rates:
            raise ConfigError("rates must not be empty")
        for r in self.rates:
            if not 0.0 < r <= 1.0:
                raise ConfigError(f"rate {r} outside (0, 1]")
        if not self.alphas:
            raise ConfigError("alphas must not be empty")
        for a in self.alphas:
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"alpha {a} outside [0, 1]")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta {self.beta} outside [0, 1]")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if not 2 <= self.num_classes <= len(SHAPES):
            raise ConfigError(f"num_classes must be in [2, {len(SHAPES)}]")
        for name in ("per_class", "test_per_class", "encoder_epochs", "decoder_epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.classifier and (self.classifier_epochs < 1 or self.finetune_epochs < 0):
            raise ConfigError("classifier epochs must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        p = self.patch_size
        if p < 2 or p & (p - 1):
            raise ConfigError(f"patch_size {p} must be a power of two")
        try:
            self.vit_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def vit_config(self):
        return VitConfig(
            dim=self.dim,
            heads=self.heads,
            layers=self.layers,
            mlp_hidden=self.mlp_hidden,
            num_classes=self.num_classes,
            patch_size=self.patch_size,
            image_h=self.image_h,
            image_w=self.image_w,
            attn_scale=self.attn_scale,
        )

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def digest(self):
        """sha256 of the canonical text minus the output directory."""
        text = "\n".join(l for l in self.to_text().splitlines() if not l.startswith("out ="))
        return hashlib.sha256(text.encode()).hexdigest()

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _convert(name, default, raw):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = int if name == "seeds" else float
            return tuple(kind(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text, base=None):
    cfg = base or ExperimentConfig()
    defaults = {f.name: getattr(ExperimentConfig(), f.name) for f in dataclasses.fields(ExperimentConfig)}
    changes = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        changes[key] = _convert(key, defaults[key], value)
    return cfg.replace(**changes).validate()


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
