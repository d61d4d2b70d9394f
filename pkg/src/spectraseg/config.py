"""Flat ``section.key = value`` pipeline configuration.

The file format is line based: one assignment per line, ``#`` starts a
comment, blank lines are skipped.  Unknown keys are rejected, duplicate
keys are a parse error at the second occurrence, and every value is
validated on load.  An empty file yields all defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError, ValidationError


def _positive_int(v: int) -> bool:
    return v >= 1


def _nonneg(v: float) -> bool:
    return v >= 0


def _fraction(v: float) -> bool:
    return 0.0 < v < 1.0


def _unit(v: float) -> bool:
    return 0.0 <= v <= 1.0


# key -> (type tag, default, validator or None, description of the constraint)
SCHEMA: dict[str, tuple[str, object, object, str]] = {
    "scene.height": ("int", 32, lambda v: v >= 16, "must be >= 16"),
    "scene.width": ("int", 32, lambda v: v >= 16, "must be >= 16"),
    "scene.classes": ("int", 4, lambda v: 2 <= v <= 8, "must be in 2..8"),
    "scene.regions": ("int", 12, _positive_int, "must be >= 1"),
    "scene.count": ("int", 50, _positive_int, "must be >= 1"),
    "scene.shading": ("float", 0.2, _unit, "must be in [0, 1]"),
    "scene.jitter": ("float", 0.02, _nonneg, "must be >= 0"),
    "scene.dominant_share": ("float", 0.6, lambda v: 0.0 <= v < 1.0, "must be in [0, 1)"),
    "degrade.blur_sigma": ("float", 0.0, _nonneg, "must be >= 0"),
    "degrade.noise_sigma": ("float", 0.0, _nonneg, "must be >= 0"),
    "degrade.attenuation_scale": ("float", 0.0, _nonneg, "must be >= 0"),
    "degrade.attenuation_depth": ("float", 1.0, _nonneg, "must be >= 0"),
    "degrade.attenuation_file": ("path", "", None, "must exist"),
    "reconstruction.noise_sigma": ("float", 0.01, _nonneg, "must be >= 0"),
    "reconstruction.camera": ("path", "", None, "must exist"),
    "reconstruction.gamma": ("choice:linear,srgb", "linear", None, "must be linear or srgb"),
    "reconstruction.training_samples": ("int", 2000, lambda v: v >= 2, "must be >= 2"),
    "reconstruction.exposure": ("float", 1.0, lambda v: v > 0, "must be > 0"),
    "patch.size": ("int", 7, lambda v: v >= 3 and v % 2 == 1, "must be odd and >= 3"),
    "patch.stride": ("int", 2, _positive_int, "must be >= 1"),
    "patch.k": ("int", 3, _positive_int, "must be >= 1"),
    "patch.max_patches": ("int", 4000, lambda v: v >= 10, "must be >= 10"),
    "patch.max_pca_samples": ("int", 512, lambda v: v >= 10, "must be >= 10"),
    "training.epochs": ("int", 30, _positive_int, "must be >= 1"),
    "training.batch_size": ("int", 4, _positive_int, "must be >= 1"),
    "training.optimizer": ("choice:sgd,adam", "sgd", None, "must be sgd or adam"),
    "training.lr": ("float", 0.001, lambda v: v > 0, "must be > 0"),
    "training.augment": ("bool", True, None, "must be a boolean"),
    "training.val_fraction": ("float", 0.2, _fraction, "must be in (0, 1)"),
    "training.base_filters": ("int", 8, _positive_int, "must be >= 1"),
    "training.dilation": ("int", 2, _positive_int, "must be >= 1"),
    "training.dropout": ("float", 0.1, lambda v: 0.0 <= v < 1.0, "must be in [0, 1)"),
    "paths.out": ("str", "out", None, ""),
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


@dataclass
class PipelineConfig:
    values: dict[str, object] = field(default_factory=dict)
    source: str = "<defaults>"

    def __post_init__(self):
        for key, (_, default, *_rest) in SCHEMA.items():
            self.values.setdefault(key, default)

    def __getitem__(self, key: str):
        return self.values[key]


def _parse_value(key: str, raw: str, base_dir: Path):
    kind = SCHEMA[key][0]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            word = raw.lower()
            if word not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[word]
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split(",")
            if raw not in options:
                raise ValueError(raw)
            return raw
        if kind == "path":
            return str((base_dir / raw) if not os.path.isabs(raw) else Path(raw))
        return raw
    except ValueError:
        raise ValidationError(key, f"cannot interpret {raw!r} as {kind}") from None


def load_config(path) -> PipelineConfig:
    """Parse and validate a config file; referenced files must exist."""
    text = Path(path).read_text()
    base_dir = Path(path).resolve().parent
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"expected 'section.key = value', got {body!r}", lineno)
        key, _, raw = body.partition("=")
        key = key.strip()
        raw = raw.strip()
        if not key or not raw:
            raise ParseError(f"expected 'section.key = value', got {body!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        if key not in SCHEMA:
            raise ValidationError(key, "unknown key")
        values[key] = _parse_value(key, raw, base_dir)

    config = PipelineConfig(values=values, source=str(path))
    for key, (kind, _default, validator, constraint) in SCHEMA.items():
        value = config.values[key]
        if validator is not None and not validator(value):
            raise ValidationError(key, f"value {value!r} invalid: {constraint}")
        if kind == "path" and value and not Path(value).is_file():
            raise ValidationError(key, f"referenced file {value!r} does not exist")
    return config


def default_config() -> PipelineConfig:
    return PipelineConfig()
