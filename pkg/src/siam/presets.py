"""Shipped configurations.

The four benchmark presets mirror the published experimental setups
(frame/latent shapes, mixer dims, N=8, r=4). ``micro`` is the desk-scale
testing preset; ``micro-gradcheck`` is the finite-difference config;
``ablation-a`` .. ``ablation-g`` are the seven mixer-subset variants at
benchmark dims, and the six ``order-*`` presets cover every serial mixer
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import permutations

from .data import MovingConfig
from .errors import UsageError
from .model import MIXER_KINDS, SiamConfig
from .train import TrainConfig


@dataclass
class RunSettings:
    model: SiamConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    data: MovingConfig = field(default_factory=MovingConfig)


_MMNIST = SiamConfig(
    t_in=10, t_out=10,
    frame_shape=(1, 64, 64), latent_shape=(64, 16, 16),
    n_blocks=8, mixer_dims=(256, 256, 640), norm_groups=8)

_TAXIBJ = SiamConfig(
    t_in=4, t_out=4,
    frame_shape=(2, 32, 32), latent_shape=(64, 16, 16),
    n_blocks=8, mixer_dims=(64, 64, 256), norm_groups=8)

_WEATHERBENCH = SiamConfig(
    t_in=12, t_out=12,
    frame_shape=(1, 32, 64), latent_shape=(32, 16, 32),
    n_blocks=8, mixer_dims=(32, 32, 384), norm_groups=8)

_HUMAN36M = SiamConfig(
    t_in=4, t_out=4,
    frame_shape=(3, 256, 256), latent_shape=(128, 64, 64),
    n_blocks=8, mixer_dims=(512, 512, 512), norm_groups=8)

_MICRO = SiamConfig(
    t_in=4, t_out=4,
    frame_shape=(1, 64, 64), latent_shape=(8, 16, 16),
    n_blocks=2, mixer_dims=(32, 32, 32), norm_groups=4, stage_depth=1)

_GRADCHECK = SiamConfig(
    t_in=3, t_out=3,
    frame_shape=(1, 12, 12), latent_shape=(10, 6, 6),
    n_blocks=1, mixer_dims=(10, 10, 12), expansion_ratio=2,
    norm_groups=2, stage_depth=1, dtype="float64")

_ABLATION_FLAGS = {
    "a": (True, False, False),
    "b": (False, True, False),
    "c": (False, False, True),
    "d": (True, True, False),
    "e": (True, False, True),
    "f": (False, True, True),
    "g": (True, True, True),
}


def _benchmark_train() -> TrainConfig:
    return TrainConfig(lr=1e-3, batch_size=4, max_steps=10000,
                       schedule="onecycle", checkpoint_every=1000)


def _presets() -> dict[str, RunSettings]:
    out = {
        "mmnist": RunSettings(
            _MMNIST, _benchmark_train(), MovingConfig(t_total=20)),
        "taxibj": RunSettings(_TAXIBJ, _benchmark_train()),
        "weatherbench": RunSettings(_WEATHERBENCH, _benchmark_train()),
        "human36m": RunSettings(_HUMAN36M, _benchmark_train()),
        "micro": RunSettings(
            _MICRO,
            TrainConfig(lr=2e-3, batch_size=4, max_steps=2000,
                        schedule="onecycle", checkpoint_every=500, seed=0),
            MovingConfig(t_total=8, seed=11)),
        "micro-gradcheck": RunSettings(
            _GRADCHECK,
            TrainConfig(lr=1e-3, batch_size=2, max_steps=10,
                        schedule="constant"),
            MovingConfig(t_total=6)),
    }
    for letter, flags in _ABLATION_FLAGS.items():
        out[f"ablation-{letter}"] = RunSettings(
            replace(_MMNIST, mixer_enabled=flags),
            _benchmark_train(), MovingConfig(t_total=20))
    for order in permutations(MIXER_KINDS):
        tag = "-".join(k[:2] for k in order)  # e.g. order-sp-st-te
        out[f"order-{tag}"] = RunSettings(
            replace(_MMNIST, mixer_order=order),
            _benchmark_train(), MovingConfig(t_total=20))
    return out


def preset_names() -> list[str]:
    return sorted(_presets())


def get_preset(name: str) -> RunSettings:
    presets = _presets()
    if name not in presets:
        raise UsageError(
            f"unknown preset {name!r}; available: {', '.join(sorted(presets))}")
    return presets[name]
