"""Plain-text run configuration: "key = value" lines in [model], [train]
and [data] sections.

Every field of the model/train/data configurations is addressable; unknown
keys or sections are errors, and parse -> print -> parse is a fixpoint.
Required keys (no defaults): model.t_in, model.t_out, model.frame_shape,
model.latent_shape. Everything else falls back to the dataclass defaults.
"""

from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable

from .data import MovingConfig
from .errors import UsageError
from .model import MIXER_KINDS, SiamConfig
from .presets import RunSettings
from .train import TrainConfig


def _parse_int(s: str) -> int:
    return int(s)


def _parse_float(s: str) -> float:
    return float(s)


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _parse_opt_float(s: str):
    return None if s.strip().lower() == "none" else float(s)


def _int_tuple(n):
    def parse(s: str):
        parts = tuple(int(p) for p in s.split(","))
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated ints, got {s!r}")
        return parts
    return parse


def _float_tuple(n):
    def parse(s: str):
        parts = tuple(float(p) for p in s.split(","))
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated floats, got {s!r}")
        return parts
    return parse


def _bool_tuple(n):
    def parse(s: str):
        parts = tuple(_parse_bool(p) for p in s.split(","))
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated bools, got {s!r}")
        return parts
    return parse


def _parse_order(s: str):
    parts = tuple(p.strip() for p in s.split(","))
    if sorted(parts) != sorted(MIXER_KINDS):
        raise ValueError(
            f"mixer_order must be a permutation of {MIXER_KINDS}")
    return parts


def _parse_branches(s: str):
    out = []
    for item in s.split(";"):
        k = tuple(int(p) for p in item.strip().split("x"))
        if len(k) != 3:
            raise ValueError(f"branch kernel must be TxHxW, got {item!r}")
        out.append(k)
    return tuple(out)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):  # branch kernels
            return ";".join("x".join(map(str, k)) for k in v)
        if v and isinstance(v[0], bool):
            return ",".join(str(b).lower() for b in v)
        return ",".join(_fmt(x) for x in v)
    return str(v)


# key -> parser. Formatting is uniform via _fmt.
_MODEL_KEYS: dict[str, Callable[[str], Any]] = {
    "t_in": _parse_int,
    "t_out": _parse_int,
    "frame_shape": _int_tuple(3),
    "latent_shape": _int_tuple(3),
    "n_blocks": _parse_int,
    "mixer_dims": _int_tuple(3),
    "mixer_order": _parse_order,
    "mixer_enabled": _bool_tuple(3),
    "expansion_ratio": _parse_int,
    "norm_groups": _parse_int,
    "spatial_kernels": _int_tuple(3),
    "incep_branches": _parse_branches,
    "strict_channel_split": _parse_bool,
    "stage_depth": _parse_int,
    "dtype": str,
}
_MODEL_REQUIRED = ("t_in", "t_out", "frame_shape", "latent_shape")

_TRAIN_KEYS: dict[str, Callable[[str], Any]] = {
    "lr": _parse_float,
    "betas": _float_tuple(2),
    "eps": _parse_float,
    "weight_decay": _parse_float,
    "batch_size": _parse_int,
    "max_steps": _parse_int,
    "schedule": str,
    "warmup_frac": _parse_float,
    "grad_clip": _parse_opt_float,
    "seed": _parse_int,
    "checkpoint_every": _parse_int,
}

_DATA_KEYS: dict[str, Callable[[str], Any]] = {
    "canvas": _int_tuple(2),
    "n_digits": _parse_int,
    "t_total": _parse_int,
    "speed_min": _parse_float,
    "speed_max": _parse_float,
    "seed": _parse_int,
}

_SECTIONS = {"model": _MODEL_KEYS, "train": _TRAIN_KEYS, "data": _DATA_KEYS}


def _parse_section(section: str, items: dict[str, str]) -> dict[str, Any]:
    schema = _SECTIONS[section]
    out: dict[str, Any] = {}
    for key, raw in items.items():
        if key not in schema:
            raise UsageError(f"unknown config key {section}.{key}")
        try:
            out[key] = schema[key](raw)
        except (ValueError, TypeError) as e:
            raise UsageError(f"bad value for {section}.{key}: {e}") from e
    return out


def parse_runconfig(text: str) -> RunSettings:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise UsageError(f"config syntax error: {e}") from e
    for section in cp.sections():
        if section not in _SECTIONS:
            raise UsageError(f"unknown config section [{section}]")
    if not cp.has_section("model"):
        raise UsageError("missing config section [model]")
    model_raw = dict(cp.items("model"))
    for req in _MODEL_REQUIRED:
        if req not in model_raw:
            raise UsageError(f"missing config key model.{req}")
    model = SiamConfig(**_parse_section("model", model_raw)).validate()
    train = TrainConfig(**_parse_section(
        "train", dict(cp.items("train")) if cp.has_section("train") else {}))
    train.validate()
    data = MovingConfig(**_parse_section(
        "data", dict(cp.items("data")) if cp.has_section("data") else {}))
    return RunSettings(model=model, train=train, data=data)


def parse_model_text(text: str) -> SiamConfig:
    """Parse bare model key=value lines (as stored in checkpoints)."""
    return parse_runconfig("[model]\n" + text).model


def _section_text(section: str, obj) -> str:
    keys = _SECTIONS[section]
    lines = [f"[{section}]"]
    for f in fields(obj):
        if f.name not in keys:
            continue
        lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    return "\n".join(lines)


def print_runconfig(settings: RunSettings) -> str:
    parts = [
        _section_text("model", settings.model),
        _section_text("train", settings.train),
        _section_text("data", settings.data),
    ]
    return "\n\n".join(parts) + "\n"


def load_runconfig(path) -> RunSettings:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    return parse_runconfig(p.read_text())
