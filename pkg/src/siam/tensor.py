"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a contiguous numpy array (float32 or float64). Gradient
tracking is explicit: operations record backward rules onto the innermost
active Tape, and only while one is active. Entries are appended in creation
order, so the tape is already topologically sorted and a single reverse
sweep computes all gradients.

Movement ops (reshape/permute/concat/split) transpose their own data
movement on the way back, so they are exact. Dtype is a global run setting;
float32 for training, float64 for gradient checking.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import DivisibilityError, ShapeError, TapeError

_DTYPES = {"float32": np.float32, "float64": np.float64}
_default_dtype = np.float32

# Debug runs assert every op output is finite (SIAM_DEBUG=1 or toggle below).
debug_checks = os.environ.get("SIAM_DEBUG", "") not in ("", "0")


def set_default_dtype(name: str) -> None:
    global _default_dtype
    if name not in _DTYPES:
        raise ValueError(f"unsupported dtype {name!r}; use float32 or float64")
    _default_dtype = _DTYPES[name]


def get_default_dtype() -> np.dtype:
    return np.dtype(_default_dtype)


@contextlib.contextmanager
def default_dtype(name: str):
    old = get_default_dtype().name
    set_default_dtype(name)
    try:
        yield
    finally:
        set_default_dtype(old)


class Tensor:
    """Dense N-d value, optionally tracked on the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_nid")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tape: Optional[Tape] = None
        self._nid: int = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


@dataclass
class Parameter:
    """A named, gradient-tracked leaf tensor."""

    tensor: Tensor
    name: str = ""
    init_spec: str = ""

    def __post_init__(self):
        self.tensor.requires_grad = True

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data


@dataclass
class _Entry:
    out_id: int
    in_ids: tuple[int, ...]
    backward: Callable[[np.ndarray, dict], None]


class Tape:
    """Ordered record of tracked operations; context manager activates it."""

    def __init__(self):
        self._entries: list[_Entry] = []
        self._next_id = 0
        self.consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    def __len__(self) -> int:
        return len(self._entries)

    def _ensure_id(self, t: Tensor) -> int:
        if t._tape is not self:
            t._tape = self
            t._nid = self._next_id
            self._next_id += 1
        return t._nid

    def record(self, out: Tensor, inputs: Sequence[Tensor],
               backward: Callable[[np.ndarray, dict], None]) -> None:
        in_ids = tuple(self._ensure_id(t) for t in inputs)
        out.requires_grad = True
        out_id = self._ensure_id(out)
        self._entries.append(_Entry(out_id, in_ids, backward))

    def gradient(self, loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        """Reverse sweep; returns one gradient array per tensor in `wrt`
        (zeros when unreachable). Consumes the tape."""
        if self.consumed:
            raise TapeError("backward called twice on a consumed tape")
        if loss.data.size != 1:
            raise TapeError(f"loss must be scalar, got shape {loss.shape}")
        if loss._tape is not self:
            raise TapeError("loss is not tracked on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {
            loss._nid: np.ones_like(loss.data)
        }
        for entry in reversed(self._entries):
            g = grads.pop(entry.out_id, None)
            if g is None:
                continue
            entry.backward(g, grads)
        out = []
        for t in wrt:
            if t._tape is self and t._nid in grads:
                out.append(grads[t._nid])
            else:
                out.append(np.zeros_like(t.data))
        return out

    def backward(self, loss: Tensor,
                 params: Iterable[Parameter]) -> dict[str, Tensor]:
        """Gradients for every parameter; untouched ones get zeros. Also
        fills each parameter tensor's .grad."""
        plist = list(params)
        gs = self.gradient(loss, [p.tensor for p in plist])
        result: dict[str, Tensor] = {}
        for p, g in zip(plist, gs):
            p.tensor.grad = g
            result[p.name] = Tensor(g)
        if len(result) != len(plist):
            raise TapeError("duplicate parameter names in backward")
        return result


_TAPE_STACK: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def backward(loss: Tensor, params: Iterable[Parameter]) -> dict[str, Tensor]:
    tape = loss._tape
    if tape is None:
        raise TapeError("loss is not tracked on any tape")
    return tape.backward(loss, params)


# ---------------------------------------------------------------------------
# cost accounting hooks (used by the analysis module)

_SCOPE_STACK: list[str] = []
_RECORDER: Optional[dict] = None


@contextlib.contextmanager
def cost_scope(name: str):
    if _RECORDER is None:
        yield
        return
    _SCOPE_STACK.append(name)
    try:
        yield
    finally:
        _SCOPE_STACK.pop()


@contextlib.contextmanager
def record_costs(store: dict):
    """store: path -> [macs, elementwise_ops], filled during forward."""
    global _RECORDER
    if _RECORDER is not None:
        raise RuntimeError("cost recording is not reentrant")
    _RECORDER = store
    try:
        yield store
    finally:
        _RECORDER = None


def _account(macs: int = 0, elementwise: int = 0) -> None:
    if _RECORDER is None:
        return
    # Scope names are full dotted module paths; the innermost one wins.
    path = _SCOPE_STACK[-1] if _SCOPE_STACK else "(top)"
    cell = _RECORDER.setdefault(path, [0, 0])
    cell[0] += macs
    cell[1] += elementwise


# ---------------------------------------------------------------------------
# op plumbing


def _finalize(out: Tensor, inputs: Sequence[Tensor], backward) -> Tensor:
    if debug_checks and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite values produced by an op")
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, [t for t in inputs if t.requires_grad], backward)
    return out


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _acc(grads: dict, t: Tensor, g: np.ndarray) -> None:
    # Accumulation is out-of-place: one gradient array may be handed to
    # several inputs (e.g. both sides of an add), so in-place += would
    # corrupt siblings through aliasing.
    nid = t._nid
    cur = grads.get(nid)
    grads[nid] = g if cur is None else cur + g


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):  # scalar offset
        s = float(b)
        out = Tensor(a.data + s)
        _account(elementwise=out.size)

        def back_s(g, grads):
            _acc(grads, a, g)

        return _finalize(out, [a], back_s)
    if a.shape != b.shape:
        raise ShapeError(f"add operands differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    _account(elementwise=out.size)

    def back(g, grads):
        if a.requires_grad:
            _acc(grads, a, g)
        if b.requires_grad:
            _acc(grads, b, g)

    return _finalize(out, [a, b], back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub operands differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)
    _account(elementwise=out.size)

    def back(g, grads):
        if a.requires_grad:
            _acc(grads, a, g)
        if b.requires_grad:
            _acc(grads, b, -g)

    return _finalize(out, [a, b], back)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        s = float(b)
        out = Tensor(a.data * s)
        _account(elementwise=out.size)

        def back_s(g, grads):
            _acc(grads, a, g * s)

        return _finalize(out, [a], back_s)
    if a.shape != b.shape:
        raise ShapeError(f"mul operands differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    _account(elementwise=out.size)
    a_data, b_data = a.data, b.data

    def back(g, grads):
        if a.requires_grad:
            _acc(grads, a, g * b_data)
        if b.requires_grad:
            _acc(grads, b, g * a_data)

    return _finalize(out, [a, b], back)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))
    _account(elementwise=out.size)
    mask = x.data > 0  # subgradient at 0 is 0

    def back(g, grads):
        _acc(grads, x, g * mask)

    return _finalize(out, [x], back)


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(np.asarray(x.data.sum(), dtype=x.data.dtype))
    _account(elementwise=x.size)

    def back(g, grads):
        _acc(grads, x, np.broadcast_to(g, x.shape).astype(x.data.dtype))

    return _finalize(out, [x], back)


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    out = Tensor(np.asarray(x.data.mean(), dtype=x.data.dtype))
    _account(elementwise=x.size)

    def back(g, grads):
        _acc(grads, x, np.broadcast_to(g / n, x.shape).astype(x.data.dtype))

    return _finalize(out, [x], back)


# ---------------------------------------------------------------------------
# data movement


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape {x.shape} -> {shape} changes element count")
    out = Tensor(x.data.reshape(shape))
    in_shape = x.shape

    def back(g, grads):
        _acc(grads, x, g.reshape(in_shape))

    return _finalize(out, [x], back)


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"invalid axis permutation {axes} for rank {x.ndim}")
    out = Tensor(np.ascontiguousarray(x.data.transpose(axes)))
    inverse = np.argsort(axes)

    def back(g, grads):
        _acc(grads, x, np.ascontiguousarray(g.transpose(inverse)))

    return _finalize(out, [x], back)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    ref = tensors[0].shape
    for t in tensors[1:]:
        for ax, (a, b) in enumerate(zip(ref, t.shape)):
            if ax != axis and a != b:
                raise ShapeError(
                    f"concat extent mismatch on axis {ax}: {a} vs {b}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g, grads):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _acc(grads, t, np.ascontiguousarray(g[tuple(idx)]))

    return _finalize(out, list(tensors), back)


def split(x: Tensor, sizes: Sequence[int], axis: int) -> list[Tensor]:
    if sum(sizes) != x.shape[axis]:
        raise ShapeError(
            f"split sizes {tuple(sizes)} do not cover axis {axis} "
            f"extent {x.shape[axis]}")
    outs = []
    lo = 0
    for sz in sizes:
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(lo, lo + sz)
        piece = Tensor(np.ascontiguousarray(x.data[tuple(idx)]))
        sl = (tuple(idx), x.shape)

        def back(g, grads, sl=sl):
            idx_, full_shape = sl
            buf = np.zeros(full_shape, dtype=g.dtype)
            buf[idx_] = g
            _acc(grads, x, buf)

        outs.append(_finalize(piece, [x], back))
        lo += sz
    return outs


def upsample_nearest2d(x: Tensor, scale: int) -> Tensor:
    """Nearest-neighbour upsampling of the two trailing axes."""
    if scale < 1:
        raise ShapeError("upsample scale must be >= 1")
    d = x.data
    out = Tensor(np.ascontiguousarray(
        d.repeat(scale, axis=-2).repeat(scale, axis=-1)))
    h, w = x.shape[-2], x.shape[-1]

    def back(g, grads):
        g4 = g.reshape(*g.shape[:-2], h, scale, w, scale)
        _acc(grads, x, g4.sum(axis=(-3, -1)))

    return _finalize(out, [x], back)


# ---------------------------------------------------------------------------
# linear and normalisation


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """y[..., o] = sum_i x[..., i] * weight[o, i] (+ bias[o])."""
    d_out, d_in = weight.shape
    if x.shape[-1] != d_in:
        raise ShapeError(
            f"linear input axis -1 has {x.shape[-1]}, weight wants {d_in}")
    y = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (d_out,):
            raise ShapeError(f"linear bias shape {bias.shape} != ({d_out},)")
        y = y + bias.data
    out = Tensor(y)
    _account(macs=(x.size // d_in) * d_in * d_out)
    x_data = x.data

    def back(g, grads):
        if x.requires_grad:
            _acc(grads, x, g @ weight.data)
        if weight.requires_grad:
            g2 = g.reshape(-1, d_out)
            x2 = x_data.reshape(-1, d_in)
            _acc(grads, weight, g2.T @ x2)
        if bias is not None and bias.requires_grad:
            _acc(grads, bias, g.reshape(-1, d_out).sum(axis=0))

    inputs = [x, weight] if bias is None else [x, weight, bias]
    return _finalize(out, inputs, back)


def group_norm(x: Tensor, num_groups: int, gamma: Tensor, beta: Tensor,
               eps: float = 1e-5) -> Tensor:
    """Per-sample, per-group standardisation over channel+spatial extents,
    then per-channel affine. x is [N, C, ...]."""
    if eps <= 0:
        raise ValueError(f"group_norm eps must be > 0, got {eps}")
    n, c = x.shape[0], x.shape[1]
    if c % num_groups != 0:
        raise DivisibilityError(
            f"channels {c} not divisible by {num_groups} norm groups")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"affine shapes {gamma.shape}/{beta.shape} do not match C={c}")
    spatial = x.shape[2:]
    m = int(np.prod(spatial)) * (c // num_groups)

    xg = x.data.reshape(n, num_groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(x.shape)
    gshape = (1, c) + (1,) * len(spatial)
    out = Tensor(xhat * gamma.data.reshape(gshape) + beta.data.reshape(gshape))
    _account(elementwise=x.size)  # norm counted at one op per element

    def back(g, grads):
        gamma_b = gamma.data.reshape(gshape)
        if gamma.requires_grad:
            axes = (0,) + tuple(range(2, x.ndim))
            _acc(grads, gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            axes = (0,) + tuple(range(2, x.ndim))
            _acc(grads, beta, g.sum(axis=axes))
        if x.requires_grad:
            dxhat = (g * gamma_b).reshape(n, num_groups, m)
            xh = xhat.reshape(n, num_groups, m)
            t1 = dxhat.mean(axis=2, keepdims=True)
            t2 = (dxhat * xh).mean(axis=2, keepdims=True)
            dx = inv * (dxhat - t1 - xh * t2)
            _acc(grads, x, dx.reshape(x.shape))

    return _finalize(out, [x, gamma, beta], back)
