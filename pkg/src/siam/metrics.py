"""Evaluation metrics: frame-wise MSE/MAE (per-frame sum convention) and
windowed SSIM.

MSE and MAE are reported as the SUM of the error over all pixels of a
frame, averaged over frames and samples. With 64x64 single-channel frames
this puts values in the tens-to-hundreds range; the per-pixel means are
also carried in reports since the sum convention is a reporting choice,
not a property of the data.

SSIM uses the standard 11x11 Gaussian window (sigma 1.5), K1=0.01,
K2=0.03, data range 1.0, evaluated per channel on 'valid' window positions
and averaged. Frames smaller than the window fall back to global-statistics
SSIM and set a flag in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(pred: np.ndarray, target: np.ndarray, rank: int) -> None:
    if pred.shape != target.shape:
        raise ShapeError(
            f"metric operands differ: {pred.shape} vs {target.shape}")
    if pred.ndim != rank:
        raise ShapeError(f"expected rank {rank}, got shape {pred.shape}")


def mse_framewise(pred: np.ndarray, target: np.ndarray
                  ) -> tuple[np.ndarray, float]:
    """Per-frame sum of squared error, averaged over samples; returns the
    [T] curve and its mean. Inputs are [B, T, C, H, W]."""
    _check_pair(pred, target, 5)
    d = (pred.astype(np.float64) - target.astype(np.float64)) ** 2
    per_frame = d.sum(axis=(2, 3, 4)).mean(axis=0)
    return per_frame, float(per_frame.mean())


def mae_framewise(pred: np.ndarray, target: np.ndarray
                  ) -> tuple[np.ndarray, float]:
    """Per-frame sum of absolute error, averaged over samples."""
    _check_pair(pred, target, 5)
    d = np.abs(pred.astype(np.float64) - target.astype(np.float64))
    per_frame = d.sum(axis=(2, 3, 4)).mean(axis=0)
    return per_frame, float(per_frame.mean())


def gaussian_window(size: int = SSIM_WINDOW,
                    sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pred_frame: np.ndarray, target_frame: np.ndarray,
         data_range: float = 1.0) -> float:
    """SSIM between two [C, H, W] frames (or [H, W] single channel)."""
    a = np.asarray(pred_frame, dtype=np.float64)
    b = np.asarray(target_frame, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim operands differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ShapeError(f"ssim expects [C,H,W] frames, got {a.shape}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    h, w = a.shape[1:]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        return _ssim_global(a, b, c1, c2)
    win = gaussian_window()
    vals = []
    for ch in range(a.shape[0]):
        vals.append(_ssim_channel(a[ch], b[ch], win, c1, c2))
    return float(np.mean(vals))


def ssim_window_applies(shape: tuple[int, ...]) -> bool:
    return shape[-2] >= SSIM_WINDOW and shape[-1] >= SSIM_WINDOW


def _filter(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    view = sliding_window_view(img, win.shape)
    return np.tensordot(view, win, axes=([2, 3], [0, 1]))


def _ssim_channel(a, b, win, c1, c2) -> float:
    mu_a = _filter(a, win)
    mu_b = _filter(b, win)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = _filter(a * a, win) - mu_aa
    var_b = _filter(b * b, win) - mu_bb
    cov = _filter(a * b, win) - mu_ab
    num = (2 * mu_ab + c1) * (2 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


def _ssim_global(a, b, c1, c2) -> float:
    vals = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cov = ((x - mx) * (y - my)).mean()
        num = (2 * mx * my + c1) * (2 * cov + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(num / den)
    return float(np.mean(vals))


def ssim_framewise(pred: np.ndarray, target: np.ndarray
                   ) -> tuple[np.ndarray, float, bool]:
    """Mean SSIM per frame index over a [B,T,C,H,W] batch; also reports
    whether the global-statistics fallback was used."""
    _check_pair(pred, target, 5)
    b, t = pred.shape[:2]
    fallback = not ssim_window_applies(pred.shape)
    per_frame = np.empty(t, dtype=np.float64)
    for ti in range(t):
        per_frame[ti] = np.mean(
            [ssim(pred[bi, ti], target[bi, ti]) for bi in range(b)])
    return per_frame, float(per_frame.mean()), fallback


@dataclass
class EvalReport:
    """Per-frame curves plus aggregates for one evaluation run."""

    per_frame_mse: np.ndarray
    per_frame_mae: np.ndarray
    per_frame_ssim: np.ndarray
    mse: float
    mae: float
    ssim: float
    n_samples: int
    pixels_per_frame: int
    config_fingerprint: str = ""
    ssim_global_fallback: bool = False

    @property
    def mse_per_pixel(self) -> float:
        return self.mse / self.pixels_per_frame

    @property
    def mae_per_pixel(self) -> float:
        return self.mae / self.pixels_per_frame

    def to_text(self) -> str:
        lines = [
            "frame    MSE(sum)     MAE(sum)    SSIM",
        ]
        for i, (m, a, s) in enumerate(zip(self.per_frame_mse,
                                          self.per_frame_mae,
                                          self.per_frame_ssim), start=1):
            lines.append(f"{i:5d} {m:11.4f} {a:12.4f} {s:7.4f}")
        lines += [
            f"aggregate over {self.n_samples} samples:",
            f"  MSE  sum-per-frame {self.mse:.4f}   "
            f"per-pixel {self.mse_per_pixel:.6f}",
            f"  MAE  sum-per-frame {self.mae:.4f}   "
            f"per-pixel {self.mae_per_pixel:.6f}",
            f"  SSIM {self.ssim:.4f}",
        ]
        if self.ssim_global_fallback:
            lines.append("  note: frames smaller than the SSIM window; "
                         "global-statistics SSIM used")
        if self.config_fingerprint:
            lines.append(f"  config fingerprint {self.config_fingerprint}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "per_frame_mse": self.per_frame_mse.tolist(),
            "per_frame_mae": self.per_frame_mae.tolist(),
            "per_frame_ssim": self.per_frame_ssim.tolist(),
            "mse_sum_per_frame": self.mse,
            "mae_sum_per_frame": self.mae,
            "mse_per_pixel": self.mse_per_pixel,
            "mae_per_pixel": self.mae_per_pixel,
            "ssim": self.ssim,
            "n_samples": self.n_samples,
            "pixels_per_frame": self.pixels_per_frame,
            "config_fingerprint": self.config_fingerprint,
            "ssim_global_fallback": self.ssim_global_fallback,
        }, indent=2, sort_keys=True)


def evaluate(pred: np.ndarray, target: np.ndarray,
             config_fingerprint: str = "") -> EvalReport:
    mse_curve, mse_mean = mse_framewise(pred, target)
    mae_curve, mae_mean = mae_framewise(pred, target)
    ssim_curve, ssim_mean, fallback = ssim_framewise(pred, target)
    return EvalReport(
        per_frame_mse=mse_curve,
        per_frame_mae=mae_curve,
        per_frame_ssim=ssim_curve,
        mse=mse_mean,
        mae=mae_mean,
        ssim=ssim_mean,
        n_samples=pred.shape[0],
        pixels_per_frame=int(np.prod(pred.shape[2:])),
        config_fingerprint=config_fingerprint,
        ssim_global_fallback=fallback,
    )
