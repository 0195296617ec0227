"""Parameter and FLOP accounting per layer and per model.

Parameters are counted from the registered parameter tree, so the total is
exactly the number of values a checkpoint serialises. FLOPs come from an
instrumented forward pass at a given input shape: convolutions and linear
layers report multiply-accumulates, normalisation/activation/elementwise
ops report one operation per element. One MAC counts as one FLOP by
default (the convention under which published comparator numbers line up);
``flops_per_mac=2`` switches to the multiply+add convention. Data-movement
ops cost zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UsageError
from .model import SiamModel
from .tensor import Tensor, record_costs


@dataclass
class CostRow:
    path: str
    params: int = 0
    macs: int = 0
    elementwise: int = 0

    def flops(self, flops_per_mac: int = 1) -> int:
        return self.macs * flops_per_mac + self.elementwise


@dataclass
class CostReport:
    rows: list[CostRow]
    input_shape: Optional[tuple[int, ...]] = None
    flops_per_mac: int = 1

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops(self.flops_per_mac) for r in self.rows)

    def scope_flops(self, prefix: str) -> int:
        return sum(r.flops(self.flops_per_mac) for r in self.rows
                   if r.path.startswith(prefix))

    def scope_params(self, prefix: str) -> int:
        return sum(r.params for r in self.rows if r.path.startswith(prefix))

    def to_text(self) -> str:
        width = max([len(r.path) for r in self.rows] + [10])
        lines = [f"{'layer':<{width}} {'params':>12} {'flops':>16}"]
        for r in self.rows:
            lines.append(f"{r.path:<{width}} {r.params:>12,} "
                         f"{r.flops(self.flops_per_mac):>16,}")
        lines.append("-" * (width + 30))
        lines.append(f"{'total':<{width}} {self.total_params:>12,} "
                     f"{self.total_flops:>16,}")
        lines.append(
            f"params {self.total_params / 1e6:.2f}M   "
            f"flops {self.total_flops / 1e9:.2f}G "
            f"({self.flops_per_mac} flop/MAC"
            + (f", input {list(self.input_shape)}" if self.input_shape
               else "") + ")")
        return "\n".join(lines) + "\n"


def _param_rows(model: SiamModel) -> dict[str, int]:
    by_layer: dict[str, int] = {}
    for name, p in model.named_parameters():
        layer = name.rsplit(".", 1)[0] if "." in name else name
        by_layer[layer] = by_layer.get(layer, 0) + p.data.size
    return by_layer


def count_params(model: SiamModel) -> CostReport:
    rows = [CostRow(path=k, params=v)
            for k, v in sorted(_param_rows(model).items())]
    return CostReport(rows)


def count_flops(model: SiamModel, input_shape: tuple[int, ...],
                flops_per_mac: int = 1) -> CostReport:
    """Instrumented forward at the given [B, T, C, H, W] input shape."""
    cfg = model.config
    expect = (cfg.t_in,) + cfg.frame_shape
    if len(input_shape) != 5 or tuple(input_shape[1:]) != expect:
        raise UsageError(
            f"input shape must be [B, {expect[0]}, {expect[1]}, {expect[2]}, "
            f"{expect[3]}], got {tuple(input_shape)}")
    store: dict[str, list[int]] = {}
    x = Tensor(np.zeros(input_shape, dtype=cfg.dtype))
    with record_costs(store):
        model(x)
    params = _param_rows(model)
    paths = sorted(set(store) | set(params))
    rows = []
    for path in paths:
        macs, elem = store.get(path, (0, 0))
        rows.append(CostRow(path=path, params=params.get(path, 0),
                            macs=macs, elementwise=elem))
    return CostReport(rows, input_shape=tuple(input_shape),
                      flops_per_mac=flops_per_mac)


# Published complexity reference points for the shipped presets:
# (params in millions, flops in G at batch 1).
REFERENCE_COMPLEXITY: dict[str, tuple[float, float]] = {
    "mmnist": (34.6, 16.4),
    "taxibj": (4.0, 1.2),
    "weatherbench": (9.6, 6.0),
    "human36m": (24.0, 180.5),
}

DIM_MAPPING_NOTE = (
    "mixer dims are read as per-mixer hidden widths behind 1x1 projections; "
    "the temporal dim is the stacked time*channel width")


def compare_to_reference(report: CostReport, preset: str,
                         window: float = 0.25) -> str:
    """Readable comparison against the published reference numbers, with
    the +-window band and the dim-mapping assumption spelled out."""
    if preset not in REFERENCE_COMPLEXITY:
        return f"no published reference for preset {preset!r}\n"
    ref_p, ref_f = REFERENCE_COMPLEXITY[preset]
    p = report.total_params / 1e6
    f = report.total_flops / 1e9
    lines = [f"reference comparison for preset {preset!r} "
             f"(+-{window * 100:.0f}% window):"]
    for label, got, ref in (("params(M)", p, ref_p), ("flops(G)", f, ref_f)):
        delta = (got - ref) / ref
        ok = abs(delta) <= window
        lines.append(
            f"  {label:<10} {got:10.3f}  ref {ref:8.1f}  "
            f"delta {delta * 100:+6.1f}%  "
            f"{'within window' if ok else 'OUTSIDE window'}")
    lines.append(f"  assumption: {DIM_MAPPING_NOTE}")
    return "\n".join(lines) + "\n"
