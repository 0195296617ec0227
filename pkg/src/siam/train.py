"""Training: L2 loss, Adam with decoupled weight decay, checkpointing.

Checkpoints are a single little-endian binary file: an 8-byte magic, a
version word, a JSON manifest (sorted keys, so serialisation is
deterministic), then the raw parameter and optimizer-moment arrays in
manifest order. Save -> load -> save is byte-identical.

Data order is a pure function of (seed, epoch): each epoch shuffles clip
indices with its own derived RNG stream, so resuming from a checkpoint
reproduces the exact remaining batch sequence.
"""

from __future__ import annotations

import json
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .data import VideoBatch, split_io
from .errors import DataError, NumericError, UsageError
from .model import SiamModel
from .rng import Xoshiro256, derive_seed
from .tensor import Parameter, Tape, Tensor

CKPT_MAGIC = b"SIAMCKPT"
CKPT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 4
    max_steps: int = 2000
    schedule: str = "onecycle"  # or "constant"
    warmup_frac: float = 0.1
    grad_clip: Optional[float] = None
    seed: int = 0
    checkpoint_every: int = 500

    def validate(self) -> "TrainConfig":
        if self.lr <= 0:
            raise UsageError("lr must be > 0")
        b1, b2 = self.betas
        if not (0 < b1 < 1 and 0 < b2 < 1):
            raise UsageError("betas must lie in (0, 1)")
        if self.eps <= 0:
            raise UsageError("eps must be > 0")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.max_steps < 1:
            raise UsageError("max_steps must be >= 1")
        if self.schedule not in ("constant", "onecycle"):
            raise UsageError(f"unknown schedule {self.schedule!r}")
        if not (0 <= self.warmup_frac < 1):
            raise UsageError("warmup_frac must lie in [0, 1)")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise UsageError("grad_clip must be positive or omitted")
        if self.checkpoint_every < 1:
            raise UsageError("checkpoint_every must be >= 1")
        return self


def l2_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    d = T.sub(pred, target)
    return T.mean_all(T.mul(d, d))


def lr_at(conf: TrainConfig, step: int) -> float:
    """Learning rate for 0-based step index."""
    if conf.schedule == "constant":
        return conf.lr
    warmup = max(int(round(conf.warmup_frac * conf.max_steps)), 1)
    if step < warmup:
        return conf.lr * (step + 1) / warmup
    span = max(conf.max_steps - warmup, 1)
    progress = min((step - warmup) / span, 1.0)
    return conf.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def adam_init(params: list[Parameter]) -> AdamState:
    return AdamState(
        m={p.name: np.zeros_like(p.data) for p in params},
        v={p.name: np.zeros_like(p.data) for p in params},
    )


def adam_step(params: list[Parameter], grads: dict[str, np.ndarray],
              state: AdamState, conf: TrainConfig,
              lr: Optional[float] = None) -> AdamState:
    """Textbook bias-corrected update; decoupled weight decay is applied
    to the parameter before the moment update."""
    if lr is None:
        lr = conf.lr
    b1, b2 = conf.betas
    if set(grads) != set(state.m):
        raise UsageError("gradient names do not match optimizer state")
    state.t += 1
    t = state.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p in params:
        g = grads[p.name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {p.name}")
        theta = p.tensor.data
        if conf.weight_decay:
            theta *= (1.0 - lr * conf.weight_decay)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + conf.eps)
    return state


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Global max-norm clipping; returns the pre-clip norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    version: int
    fingerprint: str
    config_text: str
    step: int
    seed: int
    params: dict[str, np.ndarray]
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    adam_t: int


def save_checkpoint(path, model: SiamModel, state: Optional[AdamState],
                    step: int, seed: int) -> None:
    named = list(model.named_parameters())
    entries = [{"name": n, "shape": list(p.data.shape),
                "dtype": str(p.data.dtype)} for n, p in named]
    manifest = {
        "fingerprint": model.config.fingerprint(),
        "config_text": model.config.canonical_text(),
        "step": step,
        "seed": seed,
        "params": entries,
        "adam_t": state.t if state is not None else 0,
        "has_moments": state is not None,
    }
    blob = json.dumps(manifest, sort_keys=True,
                      separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(blob)))
        f.write(blob)
        for n, p in named:
            f.write(np.ascontiguousarray(
                p.data, dtype=p.data.dtype.newbyteorder("<")).tobytes())
        if state is not None:
            for n, _ in named:
                f.write(np.ascontiguousarray(state.m[n]).astype(
                    state.m[n].dtype.newbyteorder("<")).tobytes())
            for n, _ in named:
                f.write(np.ascontiguousarray(state.v[n]).astype(
                    state.v[n].dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != CKPT_MAGIC:
        raise DataError(f"not a checkpoint file: {path}")
    version, mlen = struct.unpack("<II", raw[8:16])
    if version != CKPT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    if len(raw) < 16 + mlen:
        raise DataError("truncated checkpoint manifest")
    manifest = json.loads(raw[16:16 + mlen].decode())
    offset = 16 + mlen

    def take(entries):
        nonlocal offset
        out = {}
        for e in entries:
            dt = np.dtype(e["dtype"]).newbyteorder("<")
            count = int(np.prod(e["shape"])) if e["shape"] else 1
            nbytes = count * dt.itemsize
            if offset + nbytes > len(raw):
                raise DataError("truncated checkpoint payload")
            arr = np.frombuffer(raw, dtype=dt, count=count, offset=offset)
            out[e["name"]] = arr.astype(dt.newbyteorder("=")).reshape(
                e["shape"])
            offset += nbytes
        return out

    params = take(manifest["params"])
    m = v = {}
    if manifest["has_moments"]:
        m = take(manifest["params"])
        v = take(manifest["params"])
    if offset != len(raw):
        raise DataError("checkpoint has trailing bytes")
    return Checkpoint(
        version=version,
        fingerprint=manifest["fingerprint"],
        config_text=manifest["config_text"],
        step=manifest["step"],
        seed=manifest["seed"],
        params=params,
        m=m,
        v=v,
        adam_t=manifest["adam_t"],
    )


def apply_checkpoint(model: SiamModel, ckpt: Checkpoint
                     ) -> tuple[AdamState, int]:
    """Restore parameters (and moments) onto a model built from the same
    config; returns (adam state, step)."""
    if ckpt.fingerprint != model.config.fingerprint():
        raise DataError(
            "checkpoint fingerprint does not match the model config "
            f"({ckpt.fingerprint[:12]} vs {model.config.fingerprint()[:12]})")
    named = dict(model.named_parameters())
    if set(named) != set(ckpt.params):
        raise DataError("checkpoint parameter names do not match the model")
    for n, p in named.items():
        if p.data.shape != ckpt.params[n].shape:
            raise DataError(f"checkpoint shape mismatch for {n}")
        p.data[...] = ckpt.params[n]
    if ckpt.m:
        state = AdamState(
            m={n: ckpt.m[n].copy() for n in named},
            v={n: ckpt.v[n].copy() for n in named},
            t=ckpt.adam_t)
    else:
        state = adam_init(list(named.values()))
    return state, ckpt.step


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class StepRecord:
    step: int
    lr: float
    loss: float
    wall_ms: float

    def line(self) -> str:
        return f"{self.step},{self.lr:.8g},{self.loss:.8g},{self.wall_ms:.2f}"


@dataclass
class TrainResult:
    records: list[StepRecord]
    final_checkpoint: Optional[Path]
    log_path: Optional[Path]
    stopped_early: bool = False


def epoch_order(seed: int, epoch: int, n: int) -> list[int]:
    idx = list(range(n))
    Xoshiro256(derive_seed(seed, epoch)).shuffle(idx)
    return idx


def train_run(model: SiamModel, dataset: VideoBatch, conf: TrainConfig,
              out_dir: Optional[Path] = None,
              resume: Optional[Checkpoint] = None,
              stop_loss: Optional[float] = None,
              on_step: Optional[Callable[[StepRecord], None]] = None
              ) -> TrainResult:
    """Run Adam on L2 loss until max_steps (or stop_loss is reached)."""
    conf.validate()
    dataset.validate()
    cfg = model.config
    n_clips = dataset.shape[0]
    if dataset.shape[1] < cfg.t_in + cfg.t_out:
        raise DataError(
            f"dataset clips have {dataset.shape[1]} frames; the model needs "
            f"{cfg.t_in + cfg.t_out}")
    params = model.parameters()
    if resume is not None:
        state, start_step = apply_checkpoint(model, resume)
        seed = resume.seed
    else:
        state, start_step = adam_init(params), 0
        seed = conf.seed

    out_dir = Path(out_dir) if out_dir is not None else None
    log_f = None
    log_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.csv"
        mode = "a" if (resume is not None and log_path.exists()) else "w"
        log_f = open(log_path, mode)
        if mode == "w":
            log_f.write("step,lr,loss,wall_ms\n")

    steps_per_epoch = -(-n_clips // conf.batch_size)
    records: list[StepRecord] = []
    stopped_early = False

    def checkpoint(step: int, name: Optional[str] = None) -> Optional[Path]:
        if out_dir is None:
            return None
        p = out_dir / (name or f"ckpt_step{step:06d}.bin")
        save_checkpoint(p, model, state, step, seed)
        return p

    try:
        for step in range(start_step, conf.max_steps):
            t0 = time.perf_counter()
            epoch = step // steps_per_epoch
            pos = step % steps_per_epoch
            order = epoch_order(seed, epoch, n_clips)
            idx = order[pos * conf.batch_size:(pos + 1) * conf.batch_size]
            clips = VideoBatch(np.ascontiguousarray(dataset.data[idx]))
            xin, target = split_io(clips, cfg.t_in, cfg.t_out)
            lr = lr_at(conf, step)

            with Tape() as tape:
                pred = model(Tensor(np.asarray(xin.data, dtype=cfg.dtype)))
                loss = l2_loss(pred, Tensor(
                    np.asarray(target.data, dtype=cfg.dtype)))
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise NumericError(
                        f"non-finite loss {loss_val} at step {step}; "
                        "last periodic checkpoint retained")
                grads = tape.backward(loss, params)
            garr = {n: g.data for n, g in grads.items()}
            if conf.grad_clip is not None:
                clip_gradients(garr, conf.grad_clip)
            adam_step(params, garr, state, conf, lr=lr)

            rec = StepRecord(step, lr, loss_val,
                             (time.perf_counter() - t0) * 1e3)
            records.append(rec)
            if log_f is not None:
                log_f.write(rec.line() + "\n")
                log_f.flush()
            if on_step is not None:
                on_step(rec)
            done = step + 1
            if done % conf.checkpoint_every == 0 and done < conf.max_steps:
                checkpoint(done)
            if stop_loss is not None and loss_val <= stop_loss:
                stopped_early = True
                final = checkpoint(done, "ckpt_final.bin")
                return TrainResult(records, final, log_path, True)
        final = checkpoint(conf.max_steps, "ckpt_final.bin")
        return TrainResult(records, final, log_path, stopped_early)
    finally:
        if log_f is not None:
            log_f.close()
