"""The video-prediction architecture: encoder -> N mixing blocks -> decoder.

Layout conventions: video tensors are [B, T, C, H, W]. The encoder and
decoder are strictly frame-wise (time folded into the batch axis), so they
commute with any permutation of frames. Each mixing block alternates up to
three residual sub-mixers in a configurable serial order:

  spatial        per-frame depthwise -> dilated depthwise -> pointwise conv
  spatiotemporal five-way channel split, identity + four depthwise 3-d convs
  temporal       per-position MLP over the stacked time*channel axis

Every sub-mixer runs at its own hidden width, entered and left through 1x1
projections; the residual is added at latent width outside the projections.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .conv import conv2d, conv3d, same_padding
from .data import VideoBatch
from .errors import ShapeError, UsageError
from .rng import derive_seed, fill_uniform
from .tensor import Parameter, Tensor, cost_scope

MIXER_KINDS = ("spatial", "spatiotemporal", "temporal")


class InitStream:
    """Deterministic parameter initialiser; one substream per parameter."""

    def __init__(self, seed: int, dtype: np.dtype):
        self.seed = seed
        self.dtype = dtype
        self.counter = 0

    def _next_seed(self) -> int:
        s = derive_seed(self.seed, self.counter)
        self.counter += 1
        return s

    def uniform_fanin(self, shape: Sequence[int], fan_in: int) -> Parameter:
        bound = math.sqrt(1.0 / fan_in)
        n = int(np.prod(shape))
        vals = fill_uniform(self._next_seed(), n, -bound, bound,
                            dtype=self.dtype).reshape(shape)
        return Parameter(Tensor(vals),
                         init_spec=f"uniform(+-{bound:.6g}), fan_in={fan_in}")

    def zeros(self, shape: Sequence[int]) -> Parameter:
        self.counter += 1  # keep substream alignment independent of kind
        return Parameter(Tensor(np.zeros(shape, dtype=self.dtype)),
                         init_spec="zeros")

    def ones(self, shape: Sequence[int]) -> Parameter:
        self.counter += 1
        return Parameter(Tensor(np.ones(shape, dtype=self.dtype)),
                         init_spec="ones")


class Module:
    """Minimal parameter/submodule container with dotted-path naming."""

    def __init__(self):
        object.__setattr__(self, "_mods", {})
        object.__setattr__(self, "_pars", {})
        object.__setattr__(self, "_scope_name", None)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._mods[name] = value
        elif isinstance(value, Parameter):
            self._pars[name] = value
        object.__setattr__(self, name, value)

    def register_module(self, name: str, mod: "Module") -> "Module":
        self._mods[name] = mod
        return mod

    def named_parameters(self, prefix: str = ""):
        for name, p in self._pars.items():
            yield (prefix + name if not prefix else f"{prefix}.{name}"), p
        for name, m in self._mods.items():
            sub = name if not prefix else f"{prefix}.{name}"
            yield from m.named_parameters(sub)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def finalize_names(self, prefix: str = "") -> None:
        """Assign full dotted names to parameters and scope names to
        modules; enforces name uniqueness and dtype uniformity."""
        seen = set()
        dtypes = set()
        for name, p in self.named_parameters(prefix):
            if name in seen:
                raise UsageError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name
            dtypes.add(p.tensor.dtype)
        if len(dtypes) > 1:
            raise UsageError(f"mixed parameter dtypes: {sorted(map(str, dtypes))}")

        def assign(mod: Module, path: str):
            object.__setattr__(mod, "_scope_name", path or None)
            for name, sub in mod._mods.items():
                assign(sub, name if not path else f"{path}.{name}")

        assign(self, prefix)

    def _scope(self):
        return cost_scope(self._scope_name or type(self).__name__)

    def __call__(self, *args, **kwargs):
        with self._scope():
            return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class Conv2d(Module):
    def __init__(self, init: InitStream, c_in: int, c_out: int, kernel,
                 stride=1, padding=0, dilation=1, groups: int = 1,
                 bias: bool = True):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.stride, self.padding = stride, padding
        self.dilation, self.groups = dilation, groups
        fan_in = (c_in // groups) * kh * kw
        self.weight = init.uniform_fanin((c_out, c_in // groups, kh, kw),
                                         fan_in)
        self.bias = init.zeros((c_out,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight.tensor,
                      None if self.bias is None else self.bias.tensor,
                      self.stride, self.padding, self.dilation, self.groups)


class Conv3d(Module):
    def __init__(self, init: InitStream, c_in: int, c_out: int, kernel,
                 stride=1, padding=0, dilation=1, groups: int = 1,
                 bias: bool = True):
        super().__init__()
        kt, kh, kw = (kernel, kernel, kernel) if isinstance(kernel, int) \
            else kernel
        self.stride, self.padding = stride, padding
        self.dilation, self.groups = dilation, groups
        fan_in = (c_in // groups) * kt * kh * kw
        self.weight = init.uniform_fanin((c_out, c_in // groups, kt, kh, kw),
                                         fan_in)
        self.bias = init.zeros((c_out,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return conv3d(x, self.weight.tensor,
                      None if self.bias is None else self.bias.tensor,
                      self.stride, self.padding, self.dilation, self.groups)


class Linear(Module):
    def __init__(self, init: InitStream, d_in: int, d_out: int,
                 bias: bool = True):
        super().__init__()
        self.weight = init.uniform_fanin((d_out, d_in), d_in)
        self.bias = init.zeros((d_out,)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight.tensor,
                        None if self.bias is None else self.bias.tensor)


class GroupNorm(Module):
    def __init__(self, init: InitStream, groups: int, channels: int,
                 eps: float = 1e-5):
        super().__init__()
        self.groups, self.eps = groups, eps
        self.gamma = init.ones((channels,))
        self.beta = init.zeros((channels,))

    def forward(self, x: Tensor) -> Tensor:
        return T.group_norm(x, self.groups, self.gamma.tensor,
                            self.beta.tensor, self.eps)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SiamConfig:
    """Complete architecture description; see README for field semantics."""

    t_in: int
    t_out: int
    frame_shape: tuple[int, int, int]
    latent_shape: tuple[int, int, int]
    n_blocks: int = 8
    mixer_dims: tuple[int, int, int] = (64, 64, 256)
    mixer_order: tuple[str, str, str] = MIXER_KINDS
    mixer_enabled: tuple[bool, bool, bool] = (True, True, True)
    expansion_ratio: int = 4
    norm_groups: int = 8
    spatial_kernels: tuple[int, int, int] = (5, 7, 3)  # dw, dwd, dilation
    incep_branches: tuple[tuple[int, int, int], ...] = (
        (3, 3, 3), (3, 1, 1), (1, 1, 11), (1, 11, 1))
    strict_channel_split: bool = False
    stage_depth: int = 2  # convs per encoder/decoder stage
    dtype: str = "float32"

    def enabled(self, kind: str) -> bool:
        return self.mixer_enabled[MIXER_KINDS.index(kind)]

    def dim(self, kind: str) -> int:
        return self.mixer_dims[MIXER_KINDS.index(kind)]

    @property
    def n_stages(self) -> int:
        return int(math.log2(self.frame_shape[1] // self.latent_shape[1]))

    def validate(self) -> "SiamConfig":
        c, h, w = self.frame_shape
        cl, hl, wl = self.latent_shape
        if min(self.frame_shape + self.latent_shape) < 1:
            raise UsageError("frame/latent extents must be positive")
        if h % hl or w % wl:
            raise UsageError(
                f"frame {h}x{w} not divisible by latent {hl}x{wl}")
        rh, rw = h // hl, w // wl
        if rh != rw or rh & (rh - 1):
            raise UsageError(
                f"frame/latent ratio must be an equal power of two per axis, "
                f"got {rh}x{rw}")
        if self.t_out != self.t_in:
            raise UsageError(
                f"t_out ({self.t_out}) must equal t_in ({self.t_in}); use "
                "rollout for longer horizons")
        if self.n_blocks < 0:
            raise UsageError("n_blocks must be >= 0")
        if not any(self.mixer_enabled):
            raise UsageError("at least one mixer must be enabled")
        if tuple(sorted(self.mixer_order)) != tuple(sorted(MIXER_KINDS)):
            raise UsageError(
                f"mixer_order must be a permutation of {MIXER_KINDS}, "
                f"got {self.mixer_order}")
        if self.norm_groups < 1:
            raise UsageError("norm_groups must be >= 1")
        if cl % self.norm_groups:
            raise UsageError(
                f"latent channels {cl} not divisible by norm groups "
                f"{self.norm_groups}")
        if self.expansion_ratio < 1:
            raise UsageError("expansion_ratio must be >= 1")
        if self.stage_depth < 1:
            raise UsageError("stage_depth must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise UsageError(f"dtype must be float32/float64, got {self.dtype}")
        for kind in MIXER_KINDS:
            if not self.enabled(kind):
                continue
            d = self.dim(kind)
            if d % self.norm_groups:
                raise UsageError(
                    f"{kind} mixer dim {d} not divisible by norm groups "
                    f"{self.norm_groups}")
            if kind == "temporal" and d % self.t_in:
                raise UsageError(
                    f"temporal mixer dim {d} must be divisible by t_in "
                    f"{self.t_in} (it is the stacked time*channel width)")
            if kind == "spatiotemporal":
                if len(self.incep_branches) != 4:
                    raise UsageError(
                        "incep_branches must list exactly 4 kernels "
                        "(the fifth branch is the identity)")
                if self.strict_channel_split and d % 5:
                    raise UsageError(
                        f"spatiotemporal mixer dim {d} not divisible by 5 "
                        "(strict split)")
            if kind == "spatial":
                k_dw, k_dwd, _ = self.spatial_kernels
                if k_dw % 2 == 0 or k_dwd % 2 == 0:
                    raise UsageError("spatial mixer kernels must be odd")
        return self

    def canonical_text(self) -> str:
        order = ",".join(self.mixer_order)
        enabled = ",".join(str(b).lower() for b in self.mixer_enabled)
        branches = ";".join("x".join(map(str, k)) for k in self.incep_branches)
        lines = [
            f"t_in = {self.t_in}",
            f"t_out = {self.t_out}",
            "frame_shape = " + ",".join(map(str, self.frame_shape)),
            "latent_shape = " + ",".join(map(str, self.latent_shape)),
            f"n_blocks = {self.n_blocks}",
            "mixer_dims = " + ",".join(map(str, self.mixer_dims)),
            f"mixer_order = {order}",
            f"mixer_enabled = {enabled}",
            f"expansion_ratio = {self.expansion_ratio}",
            f"norm_groups = {self.norm_groups}",
            "spatial_kernels = " + ",".join(map(str, self.spatial_kernels)),
            f"incep_branches = {branches}",
            f"strict_channel_split = {str(self.strict_channel_split).lower()}",
            f"stage_depth = {self.stage_depth}",
            f"dtype = {self.dtype}",
        ]
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


# ---------------------------------------------------------------------------
# mixers


class SpatialMixer(Module):
    """Per-frame residual conv stack; input [N, dim, H, W]."""

    def __init__(self, init: InitStream, dim: int, kernels, norm_groups: int):
        super().__init__()
        k_dw, k_dwd, dil = kernels
        self.dw = Conv2d(init, dim, dim, k_dw, padding=same_padding(k_dw),
                         groups=dim)
        self.dwd = Conv2d(init, dim, dim, k_dwd,
                          padding=same_padding(k_dwd, dil), dilation=dil,
                          groups=dim)
        self.pw = Conv2d(init, dim, dim, 1)
        self.norm = GroupNorm(init, norm_groups, dim)

    def core(self, x: Tensor) -> Tensor:
        with self._scope():
            return T.relu(self.norm(self.pw(self.dwd(self.dw(x)))))

    def forward(self, x: Tensor) -> Tensor:
        return self.core(x) + x


class SpatioTemporalMixer(Module):
    """Five-way channel split: identity plus four depthwise 3-d convs.

    Input [B, T, dim, H, W]. When dim is not divisible by five the
    remainder joins the identity group (permissive mode; strict mode is
    rejected at config validation).
    """

    def __init__(self, init: InitStream, dim: int,
                 branches: Sequence[tuple[int, int, int]], norm_groups: int):
        super().__init__()
        base = dim // 5
        self.split_sizes = [dim - 4 * base] + [base] * 4
        if base == 0:
            raise UsageError(
                f"spatiotemporal mixer dim {dim} too small for a 5-way split")
        self.convs = []
        for i, k in enumerate(branches):
            conv = Conv3d(init, base, base, tuple(k),
                          padding=tuple(same_padding(kk) for kk in k),
                          groups=base)
            self.register_module(f"branch{i + 1}", conv)
            self.convs.append(conv)
        self.norm = GroupNorm(init, norm_groups, dim)

    def branch_outputs(self, x: Tensor) -> list[Tensor]:
        """Per-branch outputs in [B, C_part, T, H, W] layout (identity
        first); exposed for inspection and tests."""
        v = T.permute(x, (0, 2, 1, 3, 4))  # [B, C, T, H, W]
        parts = T.split(v, self.split_sizes, axis=1)
        return [parts[0]] + [conv(p) for conv, p in zip(self.convs, parts[1:])]

    def core(self, x: Tensor) -> Tensor:
        with self._scope():
            outs = self.branch_outputs(x)
            v = T.concat(outs, axis=1)
            v = T.relu(self.norm(v))
            return T.permute(v, (0, 2, 1, 3, 4))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 4:  # single clip [T, C, H, W]
            return T.reshape(self.core(T.reshape(x, (1,) + x.shape)) +
                             T.reshape(x, (1,) + x.shape), x.shape)
        return self.core(x) + x


class TemporalMixer(Module):
    """Per-position MLP over the stacked time*channel axis.

    Input [B, T, c, H, W]; the MLP maps (T*c) -> ratio*(T*c) -> (T*c) at
    every spatial location, followed by normalisation over the stacked
    channels.
    """

    def __init__(self, init: InitStream, t: int, c: int, ratio: int,
                 norm_groups: int):
        super().__init__()
        self.t, self.c = t, c
        d = t * c
        self.fc1 = Linear(init, d, ratio * d)
        self.fc2 = Linear(init, ratio * d, d)
        self.norm = GroupNorm(init, norm_groups, d)

    def core(self, x: Tensor) -> Tensor:
        with self._scope():
            b, t, c, h, w = x.shape
            d = t * c
            v = T.reshape(x, (b, d, h * w))
            v = T.permute(v, (0, 2, 1))  # [B, HW, d]
            v = self.fc2(T.relu(self.fc1(v)))
            v = T.permute(v, (0, 2, 1))
            v = T.reshape(v, (b, d, h, w))
            v = T.relu(self.norm(v))
            return T.reshape(v, (b, t, c, h, w))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim == 4:
            y = self.core(T.reshape(x, (1,) + x.shape))
            return T.reshape(y, x.shape) + x
        return self.core(x) + x


class DaMiBlock(Module):
    """One translation block: enabled mixers applied serially, each behind
    1x1 channel projections, with residuals at latent width."""

    def __init__(self, init: InitStream, cfg: SiamConfig):
        super().__init__()
        cl = cfg.latent_shape[0]
        self.order = [k for k in cfg.mixer_order if cfg.enabled(k)]
        self.parts: dict[str, tuple[Conv2d, Module, Conv2d]] = {}
        for kind in self.order:
            d = cfg.dim(kind)
            if kind == "spatial":
                width = d
                mixer = SpatialMixer(init, d, cfg.spatial_kernels,
                                     cfg.norm_groups)
            elif kind == "spatiotemporal":
                width = d
                mixer = SpatioTemporalMixer(init, d, cfg.incep_branches,
                                            cfg.norm_groups)
            else:
                width = d // cfg.t_in
                mixer = TemporalMixer(init, cfg.t_in, width,
                                      cfg.expansion_ratio, cfg.norm_groups)
            proj_in = Conv2d(init, cl, width, 1)
            proj_out = Conv2d(init, width, cl, 1)
            self.register_module(f"{kind}.proj_in", proj_in)
            self.register_module(f"{kind}.mixer", mixer)
            self.register_module(f"{kind}.proj_out", proj_out)
            self.parts[kind] = (proj_in, mixer, proj_out)

    def forward(self, x: Tensor) -> Tensor:
        b, t, cl, h, w = x.shape
        for kind in self.order:
            proj_in, mixer, proj_out = self.parts[kind]
            frames = T.reshape(x, (b * t, cl, h, w))
            p = proj_in(frames)
            width = p.shape[1]
            if kind == "spatial":
                y = mixer.core(p)
            else:
                y = mixer.core(T.reshape(p, (b, t, width, h, w)))
                y = T.reshape(y, (b * t, width, h, w))
            q = proj_out(y)
            x = x + T.reshape(q, (b, t, cl, h, w))
        return x


# ---------------------------------------------------------------------------
# encoder / decoder


class Encoder(Module):
    """Frame-wise downsampling stack; input [N, C, H, W]."""

    def __init__(self, init: InitStream, cfg: SiamConfig):
        super().__init__()
        c, cl = cfg.frame_shape[0], cfg.latent_shape[0]
        g = cfg.norm_groups
        self.layers: list[tuple[Conv2d, GroupNorm]] = []
        stages = cfg.n_stages
        idx = 0
        if stages == 0:
            self._add(init, idx, c, cl, stride=1, groups=g)
            idx += 1
        for s in range(stages):
            self._add(init, idx, c if s == 0 else cl, cl, stride=2, groups=g)
            idx += 1
            for _ in range(cfg.stage_depth - 1):
                self._add(init, idx, cl, cl, stride=1, groups=g)
                idx += 1

    def _add(self, init, idx, c_in, c_out, stride, groups):
        conv = Conv2d(init, c_in, c_out, 3, stride=stride, padding=1)
        norm = GroupNorm(init, groups, c_out)
        self.register_module(f"conv{idx}", conv)
        self.register_module(f"norm{idx}", norm)
        self.layers.append((conv, norm))

    def forward(self, x: Tensor) -> Tensor:
        for conv, norm in self.layers:
            x = T.relu(norm(conv(x)))
        return x


class Decoder(Module):
    """Frame-wise upsampling stack mirroring the encoder, linear head."""

    def __init__(self, init: InitStream, cfg: SiamConfig):
        super().__init__()
        c, cl = cfg.frame_shape[0], cfg.latent_shape[0]
        g = cfg.norm_groups
        self.stages: list[tuple[Optional[int], Conv2d, GroupNorm]] = []
        n = cfg.n_stages
        idx = 0
        if n == 0:
            self._add(init, idx, cl, cl, upsample=None, groups=g)
            idx += 1
        for _ in range(n):
            self._add(init, idx, cl, cl, upsample=2, groups=g)
            idx += 1
            for _ in range(cfg.stage_depth - 1):
                self._add(init, idx, cl, cl, upsample=None, groups=g)
                idx += 1
        self.head = Conv2d(init, cl, c, 3, stride=1, padding=1)

    def _add(self, init, idx, c_in, c_out, upsample, groups):
        conv = Conv2d(init, c_in, c_out, 3, stride=1, padding=1)
        norm = GroupNorm(init, groups, c_out)
        self.register_module(f"conv{idx}", conv)
        self.register_module(f"norm{idx}", norm)
        self.stages.append((upsample, conv, norm))

    def forward(self, x: Tensor) -> Tensor:
        for upsample, conv, norm in self.stages:
            if upsample:
                x = T.upsample_nearest2d(x, upsample)
            x = T.relu(norm(conv(x)))
        return self.head(x)


# ---------------------------------------------------------------------------
# full model


class SiamModel(Module):
    def __init__(self, config: SiamConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        self.forward_count = 0
        init = InitStream(seed, np.dtype(config.dtype))
        self.encoder = Encoder(init, config)
        self.blocks: list[DaMiBlock] = []
        for i in range(config.n_blocks):
            blk = DaMiBlock(init, config)
            self.register_module(f"blocks.{i}", blk)
            self.blocks.append(blk)
        self.decoder = Decoder(init, config)
        self.finalize_names()

    def _check_input(self, x: Tensor) -> None:
        c, h, w = self.config.frame_shape
        expect = (self.config.t_in, c, h, w)
        if x.ndim != 5 or x.shape[1:] != expect:
            raise ShapeError(
                f"model input must be [B, {expect[0]}, {c}, {h}, {w}], "
                f"got {x.shape}")

    def encode(self, x: Tensor) -> Tensor:
        self._check_input(x)
        b, t = x.shape[0], x.shape[1]
        frames = T.reshape(x, (b * t,) + x.shape[2:])
        z = self.encoder(frames)
        return T.reshape(z, (b, t) + z.shape[1:])

    def translate(self, z: Tensor) -> Tensor:
        cl, hl, wl = self.config.latent_shape
        if z.ndim != 5 or z.shape[2:] != (cl, hl, wl):
            raise ShapeError(
                f"translator input must end in {(cl, hl, wl)}, got {z.shape}")
        for blk in self.blocks:
            z = blk(z)
        return z

    def decode(self, z: Tensor) -> Tensor:
        b, t = z.shape[0], z.shape[1]
        frames = T.reshape(z, (b * t,) + z.shape[2:])
        y = self.decoder(frames)
        return T.reshape(y, (b, t) + y.shape[1:])

    def forward(self, x: Tensor) -> Tensor:
        self.forward_count += 1
        return self.decode(self.translate(self.encode(x)))

    def predict(self, batch: VideoBatch) -> VideoBatch:
        """Untracked forward on a video batch; raw linear-head output."""
        x = Tensor(np.asarray(batch.data, dtype=self.config.dtype))
        return VideoBatch(self(x).data)


def build_model(config: SiamConfig, seed: int = 0) -> SiamModel:
    return SiamModel(config, seed=seed)


def rollout(model: SiamModel, batch: VideoBatch, horizon: int) -> VideoBatch:
    """Autoregressive prediction of `horizon` frames; predictions are
    clamped to [0, 1] before being fed back."""
    if horizon < 1:
        raise UsageError(f"rollout horizon must be >= 1, got {horizon}")
    cfg = model.config
    window = np.asarray(batch.data, dtype=cfg.dtype)
    if window.shape[1] < cfg.t_in:
        raise ShapeError(
            f"rollout needs at least {cfg.t_in} seed frames, "
            f"got {window.shape[1]}")
    window = window[:, -cfg.t_in:]
    chunks = []
    produced = 0
    while produced < horizon:
        pred = model(Tensor(window)).data
        pred = np.clip(pred, 0.0, 1.0)
        chunks.append(pred)
        produced += pred.shape[1]
        tail = np.concatenate([window, pred], axis=1)[:, -cfg.t_in:]
        window = np.ascontiguousarray(tail)
    out = np.concatenate(chunks, axis=1)[:, :horizon]
    return VideoBatch(np.ascontiguousarray(out))


def set_identity_residuals(obj: Module) -> None:
    """Apply the documented zero recipe: a mixer's terminal norm affine is
    zeroed (so its core output is exactly zero) and, inside a block, the
    output projections are zeroed too. Each mixer and each block then
    computes the exact identity map."""
    if isinstance(obj, (SpatialMixer, SpatioTemporalMixer, TemporalMixer)):
        obj.norm.gamma.tensor.data[:] = 0
        obj.norm.beta.tensor.data[:] = 0
    elif isinstance(obj, DaMiBlock):
        for _, mixer, proj_out in obj.parts.values():
            set_identity_residuals(mixer)
            proj_out.weight.tensor.data[:] = 0
            if proj_out.bias is not None:
                proj_out.bias.tensor.data[:] = 0
    elif isinstance(obj, SiamModel):
        for blk in obj.blocks:
            set_identity_residuals(blk)
    else:
        raise UsageError(f"no identity recipe for {type(obj).__name__}")
