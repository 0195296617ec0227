"""Datasets: synthetic bouncing-digit clips, IDX digit files, SVT containers.

The generator reproduces the usual two-digit bouncing-MNIST setup: 28x28
glyphs placed uniformly inside a 64x64 canvas, moving with a uniformly
random direction and speed, reflecting off the walls elastically, and
composited with a per-pixel max. Every sequence derives its own RNG stream
from (seed, index), so generation order and parallelism cannot change the
output.

A small procedural glyph set ships in-code so nothing has to be downloaded;
real MNIST digits can be substituted via the IDX parser.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError
from .rng import Xoshiro256, derive_seed


class IdxError(DataError):
    pass


class IdxBadMagic(IdxError):
    pass


class IdxTruncated(IdxError):
    pass


class IdxUnsupportedDtype(IdxError):
    pass


class SvtError(DataError):
    pass


class SvtBadMagic(SvtError):
    pass


class SvtBadVersion(SvtError):
    pass


class SvtTruncated(SvtError):
    pass


class SvtBadDtype(SvtError):
    pass


class SvtNonFinite(SvtError):
    pass


# ---------------------------------------------------------------------------
# video batches


@dataclass
class VideoBatch:
    """[B, T, C, H, W] pixel clips; nominal value range [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 5:
            raise DataError(
                f"video batch must have 5 axes [B,T,C,H,W], got {arr.shape}")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def validate(self) -> "VideoBatch":
        if not np.all(np.isfinite(self.data)):
            raise DataError("video batch contains non-finite values")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise DataError(
                f"video batch values outside [0, 1]: min {lo}, max {hi}")
        return self

    def clipped(self) -> "VideoBatch":
        return VideoBatch(np.clip(self.data, 0.0, 1.0))


def split_io(batch: VideoBatch, t_in: int, t_out: int
             ) -> tuple[VideoBatch, VideoBatch]:
    """Contiguous prefix / next-window split along the time axis."""
    t_total = batch.data.shape[1]
    if t_in < 1 or t_out < 1:
        raise DataError("t_in and t_out must be >= 1")
    if t_in + t_out > t_total:
        raise DataError(
            f"insufficient frames: need t_in+t_out = {t_in + t_out}, "
            f"batch has {t_total}")
    return (VideoBatch(np.ascontiguousarray(batch.data[:, :t_in])),
            VideoBatch(np.ascontiguousarray(batch.data[:, t_in:t_in + t_out])))


# ---------------------------------------------------------------------------
# IDX (big-endian MNIST container)

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {np.dtype(k.newbyteorder("=")): c
              for c, k in _IDX_DTYPES.items()}


@dataclass
class IdxMeta:
    dtype_code: int
    shape: tuple[int, ...]


def parse_idx(raw: bytes, rescale: bool = False
              ) -> tuple[np.ndarray, IdxMeta]:
    """Decode an IDX byte string. With rescale=True, u8 payloads are mapped
    to float32 in [0, 1]."""
    if len(raw) < 4:
        raise IdxTruncated(f"header needs 4 bytes, got {len(raw)}")
    if raw[0] != 0 or raw[1] != 0:
        raise IdxBadMagic(
            f"first two magic bytes must be zero, got {raw[0]:#x} {raw[1]:#x}")
    code, rank = raw[2], raw[3]
    if code not in _IDX_DTYPES:
        raise IdxUnsupportedDtype(f"unsupported dtype code {code:#x}")
    header_len = 4 + 4 * rank
    if len(raw) < header_len:
        raise IdxTruncated(
            f"header with rank {rank} needs {header_len} bytes, "
            f"got {len(raw)}")
    shape = struct.unpack(f">{rank}I", raw[4:header_len]) if rank else ()
    dtype = _IDX_DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape \
        else dtype.itemsize
    actual = len(raw) - header_len
    if actual != expected:
        raise IdxTruncated(
            f"payload length mismatch: expected {expected} bytes, "
            f"got {actual}")
    arr = np.frombuffer(raw, dtype=dtype, count=max(expected // dtype.itemsize, 1),
                        offset=header_len).reshape(shape)
    arr = arr.astype(dtype.newbyteorder("="))
    if rescale:
        if code != 0x08:
            raise IdxUnsupportedDtype(
                "rescale to [0,1] is defined for u8 payloads only")
        arr = arr.astype(np.float32) / 255.0
    return arr, IdxMeta(code, tuple(shape))


def write_idx(arr: np.ndarray) -> bytes:
    dt = np.dtype(arr.dtype).newbyteorder("=")
    if dt not in _IDX_CODES:
        raise IdxUnsupportedDtype(f"no IDX code for dtype {arr.dtype}")
    code = _IDX_CODES[dt]
    head = bytes([0, 0, code, arr.ndim])
    head += struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(
        arr, dtype=_IDX_DTYPES[code]).tobytes()


# ---------------------------------------------------------------------------
# SVT (little-endian raw clip container)

SVT_MAGIC = b"SVT1"
_SVT_F32 = 1  # only defined payload dtype


def svt_bytes(batch: VideoBatch) -> bytes:
    data = np.ascontiguousarray(batch.data, dtype="<f4")
    head = SVT_MAGIC + bytes([_SVT_F32])
    head += struct.pack("<5I", *data.shape)
    return head + data.tobytes()


def parse_svt(raw: bytes) -> VideoBatch:
    if len(raw) < 4:
        raise SvtTruncated(f"file shorter than the 4-byte magic ({len(raw)})")
    if raw[:3] != b"SVT":
        raise SvtBadMagic(f"bad magic {raw[:4]!r}")
    if raw[:4] != SVT_MAGIC:
        raise SvtBadVersion(f"unsupported container version {raw[:4]!r}")
    if len(raw) < 25:
        raise SvtTruncated(
            f"header needs 25 bytes (magic+dtype+5 extents), got {len(raw)}")
    if raw[4] != _SVT_F32:
        raise SvtBadDtype(f"unsupported payload dtype code {raw[4]}")
    shape = struct.unpack("<5I", raw[5:25])
    expected = int(np.prod(shape, dtype=np.int64)) * 4
    actual = len(raw) - 25
    if actual != expected:
        raise SvtTruncated(
            f"payload length mismatch for extents {shape}: expected "
            f"{expected} bytes, got {actual}")
    arr = np.frombuffer(raw, dtype="<f4", count=expected // 4,
                        offset=25).reshape(shape)
    arr = arr.astype(np.float32)
    if not np.all(np.isfinite(arr)):
        raise SvtNonFinite("payload contains non-finite values")
    return VideoBatch(arr)


def write_svt(path, batch: VideoBatch) -> None:
    with open(path, "wb") as f:
        f.write(svt_bytes(batch))


def read_svt(path) -> VideoBatch:
    with open(path, "rb") as f:
        return parse_svt(f.read())


# ---------------------------------------------------------------------------
# digit glyphs


@dataclass
class DigitSet:
    """Grayscale glyph stack [n, 28, 28] in [0, 1]."""

    glyphs: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        g = np.asarray(self.glyphs, dtype=np.float32)
        if g.ndim != 3 or g.shape[1:] != (28, 28):
            raise DataError(f"glyphs must be [n, 28, 28], got {g.shape}")
        if g.size and (g.min() < 0 or g.max() > 1):
            raise DataError("glyph values must lie in [0, 1]")
        self.glyphs = g

    def __len__(self) -> int:
        return self.glyphs.shape[0]


def digits_from_idx(images_raw: bytes,
                    labels_raw: Optional[bytes] = None) -> DigitSet:
    """Build a DigitSet from IDX image (and optional label) bytes."""
    imgs, meta = parse_idx(images_raw, rescale=True)
    if len(meta.shape) != 3 or meta.shape[1:] != (28, 28):
        raise DataError(f"expected [n,28,28] u8 images, got {meta.shape}")
    labels = None
    if labels_raw is not None:
        lab, lmeta = parse_idx(labels_raw)
        if len(lmeta.shape) != 1 or lmeta.shape[0] != meta.shape[0]:
            raise DataError("label count does not match image count")
        labels = lab
    return DigitSet(imgs, labels)


# Stroke tables for the built-in glyphs: per digit, a list of polylines in
# 28x28 pixel coordinates (x right, y down). Curves are polygonal.
def _arc(cx, cy, rx, ry, a0, a1, n=14, close=False):
    ts = np.linspace(a0, a1, n)
    pts = [(cx + rx * math.cos(t), cy + ry * math.sin(t)) for t in ts]
    if close:
        pts.append(pts[0])
    return pts


_STROKES: dict[int, list] = {
    0: [_arc(14, 14, 5.5, 8.5, 0, 2 * math.pi, 20, close=True)],
    1: [[(10.5, 8.5), (14.5, 5), (14.5, 23)], [(10, 23), (19, 23)]],
    2: [_arc(14, 9.5, 5.5, 4.5, math.pi, 2 * math.pi, 10)
        + [(19.5, 12.5), (8.5, 23), (20.5, 23)]],
    3: [_arc(13.5, 9, 5, 4, math.pi * 0.95, math.pi * 2.25, 10)
        + _arc(13.5, 18.5, 5.5, 4.7, -math.pi * 0.25, math.pi * 1.05, 12)],
    4: [[(16.5, 5), (7.5, 17.5), (21.5, 17.5)], [(16.5, 5), (16.5, 23)]],
    5: [[(19.5, 5), (9.5, 5), (9, 12.5)]
        + _arc(13.5, 17, 5.8, 5.5, -math.pi * 0.45, math.pi * 0.85, 12)],
    6: [_arc(13.5, 17.5, 5.2, 5.2, 0, 2 * math.pi, 16, close=True),
        _arc(16.5, 9, 9, 11.5, math.pi * 0.75, math.pi * 1.2, 8)],
    7: [[(8, 5.5), (20.5, 5.5), (12.5, 23)]],
    8: [_arc(14, 9.3, 4.3, 4.3, 0, 2 * math.pi, 14, close=True),
        _arc(14, 18.3, 5.2, 4.9, 0, 2 * math.pi, 14, close=True)],
    9: [_arc(14.2, 10.2, 5.0, 5.0, 0, 2 * math.pi, 16, close=True),
        _arc(11.5, 19, 9, 11, -math.pi * 0.2, math.pi * 0.25, 8)],
}


def _render_strokes(polylines, width=1.35, falloff=1.1) -> np.ndarray:
    """Anti-aliased stroke rendering via distance to segments."""
    ys, xs = np.mgrid[0:28, 0:28]
    px = xs + 0.5
    py = ys + 0.5
    dist = np.full((28, 28), np.inf)
    for line in polylines:
        for (x0, y0), (x1, y1) in zip(line[:-1], line[1:]):
            dx, dy = x1 - x0, y1 - y0
            den = dx * dx + dy * dy
            if den == 0:
                t = np.zeros_like(px)
            else:
                t = np.clip(((px - x0) * dx + (py - y0) * dy) / den, 0, 1)
            qx = x0 + t * dx
            qy = y0 + t * dy
            d = np.hypot(px - qx, py - qy)
            dist = np.minimum(dist, d)
    return np.clip(1.0 - (dist - width) / falloff, 0.0, 1.0).astype(np.float32)


_BUILTIN_CACHE: Optional[DigitSet] = None


def builtin_digits() -> DigitSet:
    """Procedural glyphs for the ten digits; no external files needed."""
    global _BUILTIN_CACHE
    if _BUILTIN_CACHE is None:
        glyphs = np.stack([_render_strokes(_STROKES[d]) for d in range(10)])
        _BUILTIN_CACHE = DigitSet(glyphs, labels=np.arange(10, dtype=np.uint8))
    return _BUILTIN_CACHE


# ---------------------------------------------------------------------------
# moving-digit generator


@dataclass
class MovingConfig:
    canvas: tuple[int, int] = (64, 64)
    n_digits: int = 2
    t_total: int = 20
    speed_min: float = 2.0
    speed_max: float = 5.0
    seed: int = 0

    def validate(self) -> "MovingConfig":
        if self.t_total < 1:
            raise DataError("t_total must be >= 1")
        if self.n_digits < 1:
            raise DataError("n_digits must be >= 1")
        if not (0 < self.speed_min <= self.speed_max):
            raise DataError("need 0 < speed_min <= speed_max")
        if self.canvas[0] < 28 or self.canvas[1] < 28:
            raise DataError(f"canvas {self.canvas} smaller than 28x28 glyphs")
        return self


@dataclass
class BounceEvent:
    sequence: int
    frame: int
    axis: str  # "x" or "y"
    speed_before: float
    speed_after: float


def generate_moving(conf: MovingConfig, digits: DigitSet, n_sequences: int,
                    bounce_log: Optional[list] = None) -> VideoBatch:
    """n_sequences independent clips [n, T, 1, H, W]; deterministic in
    (conf.seed, sequence index)."""
    conf.validate()
    if len(digits) == 0:
        raise DataError("empty digit set")
    if n_sequences < 1:
        raise DataError("empty dataset: n_sequences must be >= 1")
    hc, wc = conf.canvas
    ymax, xmax = float(hc - 28), float(wc - 28)
    out = np.zeros((n_sequences, conf.t_total, 1, hc, wc), dtype=np.float32)

    for i in range(n_sequences):
        rng = Xoshiro256(derive_seed(conf.seed, i))
        sprites = []
        for _ in range(conf.n_digits):
            glyph = digits.glyphs[rng.randint(len(digits))]
            x = rng.uniform(0.0, xmax) if xmax > 0 else 0.0
            y = rng.uniform(0.0, ymax) if ymax > 0 else 0.0
            angle = rng.uniform(0.0, 2.0 * math.pi)
            speed = rng.uniform(conf.speed_min, conf.speed_max)
            vx = speed * math.cos(angle) if xmax > 0 else 0.0
            vy = speed * math.sin(angle) if ymax > 0 else 0.0
            sprites.append([glyph, x, y, vx, vy])

        for t in range(conf.t_total):
            frame = out[i, t, 0]
            for s in sprites:
                glyph, x, y, _, _ = s
                px, py = int(round(x)), int(round(y))
                if not (0 <= px <= wc - 28 and 0 <= py <= hc - 28):
                    raise AssertionError(
                        f"digit placed out of bounds at ({px}, {py})")
                region = frame[py:py + 28, px:px + 28]
                np.maximum(region, glyph, out=region)
            for s in sprites:
                s[1] += s[3]
                s[2] += s[4]
                for axis, pos_idx, vel_idx, limit in (
                        ("x", 1, 3, xmax), ("y", 2, 4, ymax)):
                    while s[pos_idx] < 0 or s[pos_idx] > limit:
                        speed_before = math.hypot(s[3], s[4])
                        if s[pos_idx] < 0:
                            s[pos_idx] = -s[pos_idx]
                        else:
                            s[pos_idx] = 2 * limit - s[pos_idx]
                        s[vel_idx] = -s[vel_idx]
                        if bounce_log is not None:
                            bounce_log.append(BounceEvent(
                                i, t, axis, speed_before,
                                math.hypot(s[3], s[4])))
                        if limit == 0:
                            break
    return VideoBatch(out)
