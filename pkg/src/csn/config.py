"""Plain-text run configuration: one ``key = value`` per line, ``#`` comments.

Unknown keys are errors (no silent typo acceptance); missing keys fall back
to the documented defaults. Parsing returns the model and training configs
together.
"""

from __future__ import annotations

from .model import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _parse_variant(v):
    return v.strip().upper()


def _parse_esc(v):
    return v.strip().lower()


_MODEL_KEYS = {
    "n": int,
    "m": int,
    "variant": _parse_variant,
    "channels": int,
    "growth": int,
    "scale": int,
    "in_channels": int,
    "esc_mode": _parse_esc,
    "residual_scale": float,
}

_TRAIN_KEYS = {
    "batch_size": int,
    "patch_lr": int,
    "iterations": int,
    "lr0": float,
    "lr_halve_period": int,
    "beta1": float,
    "beta2": float,
    "eps": float,
    "seed": int,
    "log_every": int,
    "validation_every": int,
    "checkpoint_every": int,
}


def parse_config_text(text, origin="<config>"):
    model_kwargs, train_kwargs = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _MODEL_KEYS:
                model_kwargs[key] = _MODEL_KEYS[key](value)
            elif key in _TRAIN_KEYS:
                train_kwargs[key] = _TRAIN_KEYS[key](value)
            else:
                raise ConfigError(f"{origin}:{lineno}: unknown key '{key}'")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: bad value for '{key}': {exc}") from exc
    try:
        return ModelConfig(**model_kwargs).validate(), TrainConfig(**train_kwargs).validate()
    except ValueError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def parse_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=str(path))
