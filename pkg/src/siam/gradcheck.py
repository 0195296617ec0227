"""Sampled finite-difference verification of model gradients.

Used by the CLI; runs in float64. For each parameter a few entries are
probed with central differences and compared against the analytic gradient
from one backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SiamModel
from .rng import Xoshiro256, derive_seed, fill_uniform
from .tensor import Tape, Tensor
from .train import l2_loss


@dataclass
class GradCheckRow:
    name: str
    max_rel_err: float
    ok: bool


def finite_diff_check(model: SiamModel, tolerance: float = 1e-5,
                      samples_per_param: int = 3, seed: int = 0,
                      h: float = 1e-5) -> list[GradCheckRow]:
    cfg = model.config
    if cfg.dtype != "float64":
        raise ValueError("gradient checking requires a float64 model")
    shape = (1, cfg.t_in) + cfg.frame_shape
    n = int(np.prod(shape))
    x = Tensor(fill_uniform(derive_seed(seed, 1), n).reshape(shape))
    target = Tensor(fill_uniform(derive_seed(seed, 2), n).reshape(shape))

    def loss_value() -> float:
        return l2_loss(model(x), target).item()

    params = list(model.named_parameters())
    with Tape() as tape:
        loss = l2_loss(model(x), target)
        grads = tape.backward(loss, [p for _, p in params])

    rows = []
    rng = Xoshiro256(derive_seed(seed, 3))
    for name, p in params:
        flat = p.data.reshape(-1)
        g = grads[name].data.reshape(-1)
        worst = 0.0
        k = min(samples_per_param, flat.size)
        picked = set()
        while len(picked) < k:
            picked.add(rng.randint(flat.size))
        for i in picked:
            old = flat[i]
            flat[i] = old + h
            fp = loss_value()
            flat[i] = old - h
            fm = loss_value()
            flat[i] = old
            fd = (fp - fm) / (2.0 * h)
            denom = max(abs(fd), abs(g[i]), 1e-8)
            worst = max(worst, abs(fd - g[i]) / denom)
        rows.append(GradCheckRow(name, worst, worst < tolerance))
    return rows
