"""Portable graymap/pixmap output (binary P5/P6, maxval 255).

No image library needed; the files are diffable and every viewer reads
them. Values are expected in [0, 1] and are clipped on write.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError


def _to_u8(arr: np.ndarray) -> np.ndarray:
    return (np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> None:
    """gray: [H, W] in [0, 1]."""
    if gray.ndim != 2:
        raise DataError(f"PGM wants [H, W], got {gray.shape}")
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(_to_u8(gray).tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    """rgb: [3, H, W] in [0, 1]."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise DataError(f"PPM wants [3, H, W], got {rgb.shape}")
    h, w = rgb.shape[1:]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(_to_u8(rgb.transpose(1, 2, 0)).tobytes())


def write_frame(path_base: Path, frame: np.ndarray) -> list[Path]:
    """Write one [C, H, W] frame; PGM for C=1, PPM for C=3, one PGM per
    channel otherwise. Returns the written paths."""
    c = frame.shape[0]
    if c == 1:
        p = path_base.with_suffix(".pgm")
        write_pgm(p, frame[0])
        return [p]
    if c == 3:
        p = path_base.with_suffix(".ppm")
        write_ppm(p, frame)
        return [p]
    out = []
    for ch in range(c):
        p = path_base.parent / f"{path_base.name}_c{ch}.pgm"
        write_pgm(p, frame[ch])
        out.append(p)
    return out


def tile_rows(rows: list[list[np.ndarray]], pad: int = 2) -> np.ndarray:
    """Tile [C, H, W] frames into one [C, H', W'] grid image; rows of
    frames separated by `pad` pixels of mid-gray."""
    c, h, w = rows[0][0].shape
    n_cols = max(len(r) for r in rows)
    gh = len(rows) * h + (len(rows) - 1) * pad
    gw = n_cols * w + (n_cols - 1) * pad
    grid = np.full((c, gh, gw), 0.5, dtype=np.float64)
    for ri, row in enumerate(rows):
        for ci, frame in enumerate(row):
            y = ri * (h + pad)
            x = ci * (w + pad)
            grid[:, y:y + h, x:x + w] = np.clip(frame, 0.0, 1.0)
    return grid
