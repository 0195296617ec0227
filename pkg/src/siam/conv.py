"""Grouped N-d convolutions: a vectorised path and a naive reference.

The fast path decomposes the convolution into one matmul per kernel
position: for offset (dy, dx) the strided input slice [N, C_in, H_out,
W_out] is contracted with weight[:, :, dy, dx]. This handles any
stride/padding/dilation/groups combination with no im2col buffer, and the
backward pass reuses the same decomposition (the scatter back into the
padded input is a plain strided slice add).

The *_reference functions are deliberately written as nested loops over
the output definition and exist to cross-check the fast path; they share
no helper code with it.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

from .errors import DivisibilityError, ShapeError
from .tensor import Tensor, _account, _acc, _finalize


def _zero_pad(x: np.ndarray, pads: tuple[int, ...]) -> np.ndarray:
    """Zero-pad the trailing len(pads) axes symmetrically (faster than
    np.pad for this access pattern)."""
    if not any(pads):
        return x
    lead = x.shape[:-len(pads)]
    padded_shape = lead + tuple(s + 2 * p
                                for s, p in zip(x.shape[-len(pads):], pads))
    buf = np.zeros(padded_shape, dtype=x.dtype)
    idx = (Ellipsis,) + tuple(slice(p, p + s)
                              for s, p in zip(x.shape[-len(pads):], pads))
    buf[idx] = x
    return buf


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def _triple(v) -> tuple[int, int, int]:
    if isinstance(v, int):
        return (v, v, v)
    a, b, c = v
    return (int(a), int(b), int(c))


_PLAIN_MAX_BYTES = 512 * 1024 * 1024


def out_extent(size: int, k: int, stride: int, pad: int, dilation: int) -> int:
    return (size + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def same_padding(kernel: int, dilation: int = 1) -> int:
    """Padding that preserves the extent at stride 1; odd kernels only."""
    if kernel % 2 == 0:
        raise ShapeError(
            f"same-padding requires an odd kernel, got {kernel}")
    return dilation * (kernel - 1) // 2


def _check_groups(c_in: int, c_out: int, w_cin: int, groups: int) -> None:
    if groups < 1:
        raise DivisibilityError(f"groups must be positive, got {groups}")
    if c_in % groups != 0:
        raise DivisibilityError(
            f"input channels {c_in} not divisible by groups {groups}")
    if c_out % groups != 0:
        raise DivisibilityError(
            f"output channels {c_out} not divisible by groups {groups}")
    if w_cin != c_in // groups:
        raise ShapeError(
            f"weight channel axis has {w_cin}, expected "
            f"{c_in // groups} (= C_in/groups)")


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride=1, padding=0, dilation=1, groups: int = 1) -> Tensor:
    """x [N,C_in,H,W], weight [C_out, C_in/groups, kH, kW] -> [N,C_out,H',W']."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be rank 4, got {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be rank 4, got {weight.shape}")
    n, c_in, h, w = x.shape
    c_out, w_cin, kh, kw = weight.shape
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    dh, dw = _pair(dilation)
    _check_groups(c_in, c_out, w_cin, groups)
    h_out = out_extent(h, kh, sh, ph, dh)
    w_out = out_extent(w, kw, sw, pw, dw)
    if h_out < 1 or w_out < 1:
        raise ShapeError(
            f"kernel ({kh}x{kw}, dilation {dh}x{dw}) does not fit padded "
            f"input height/width ({h + 2 * ph}x{w + 2 * pw})")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")

    xp = _zero_pad(x.data, (ph, pw))
    cig = c_in // groups
    cog = c_out // groups
    l = h_out * w_out
    # The windowed path materialises kh*kw copies of the input; cap it so
    # high-resolution frames fall back to the per-position loop.
    win_bytes = n * c_in * l * kh * kw * x.data.dtype.itemsize
    plain = (sh == sw == 1 and dh == dw == 1 and groups == 1
             and win_bytes <= _PLAIN_MAX_BYTES)

    if plain:
        # One tensordot over sliding windows: fastest for the stride-1
        # dense convs that dominate the encoder/decoder.
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        y = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3]))
        y = np.ascontiguousarray(y.transpose(0, 3, 1, 2))
    else:
        wg = weight.data.reshape(groups, cog, cig, kh, kw)
        acc = np.zeros((n, groups, cog, l), dtype=x.data.dtype)
        for dy in range(kh):
            for dx in range(kw):
                ys, xs = dy * dh, dx * dw
                sl = xp[:, :, ys:ys + sh * h_out:sh, xs:xs + sw * w_out:sw]
                acc += wg[:, :, :, dy, dx] @ sl.reshape(n, groups, cig, l)
        y = acc.reshape(n, c_out, h_out, w_out)
    if bias is not None:
        y = y + bias.data.reshape(1, c_out, 1, 1)
    out = Tensor(y)
    _account(macs=n * c_out * cig * kh * kw * l)

    def back(g, grads):
        if x.requires_grad:
            if plain:
                gp = _zero_pad(g, (kh - 1, kw - 1))
                gwin = sliding_window_view(gp, (kh, kw), axis=(2, 3))
                wflip = weight.data[:, :, ::-1, ::-1]
                gxp = np.tensordot(gwin, wflip, axes=([1, 4, 5], [0, 2, 3]))
                gxp = gxp.transpose(0, 3, 1, 2)
            else:
                go = g.reshape(n, groups, cog, l)
                wg_ = weight.data.reshape(groups, cog, cig, kh, kw)
                gxp = np.zeros_like(xp)
                for dy in range(kh):
                    for dx in range(kw):
                        ys, xs = dy * dh, dx * dw
                        contrib = wg_[:, :, :, dy, dx].transpose(0, 2, 1) @ go
                        gxp[:, :, ys:ys + sh * h_out:sh,
                            xs:xs + sw * w_out:sw] += contrib.reshape(
                                n, c_in, h_out, w_out)
            gx = gxp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else gxp
            _acc(grads, x, np.ascontiguousarray(gx))
        if weight.requires_grad:
            if plain:
                win_ = sliding_window_view(xp, (kh, kw), axis=(2, 3))
                gw = np.tensordot(g, win_, axes=([0, 2, 3], [0, 2, 3]))
            else:
                go = g.reshape(n, groups, cog, l)
                wg_shape = (groups, cog, cig, kh, kw)
                gw = np.empty(wg_shape, dtype=g.dtype)
                for dy in range(kh):
                    for dx in range(kw):
                        ys, xs = dy * dh, dx * dw
                        sl = xp[:, :, ys:ys + sh * h_out:sh,
                                xs:xs + sw * w_out:sw].reshape(
                                    n, groups, cig, l)
                        gw[:, :, :, dy, dx] = np.matmul(
                            go, sl.transpose(0, 1, 3, 2)).sum(axis=0)
            _acc(grads, weight, np.ascontiguousarray(gw.reshape(weight.shape)))
        if bias is not None and bias.requires_grad:
            _acc(grads, bias, g.sum(axis=(0, 2, 3)))

    inputs = [x, weight] if bias is None else [x, weight, bias]
    return _finalize(out, inputs, back)


def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride=1, padding=0, dilation=1, groups: int = 1) -> Tensor:
    """x [N,C_in,T,H,W], weight [C_out, C_in/groups, kT, kH, kW]."""
    if x.ndim != 5:
        raise ShapeError(f"conv3d input must be rank 5, got {x.shape}")
    if weight.ndim != 5:
        raise ShapeError(f"conv3d weight must be rank 5, got {weight.shape}")
    n, c_in, t, h, w = x.shape
    c_out, w_cin, kt, kh, kw = weight.shape
    st, sh, sw = _triple(stride)
    pt, ph, pw = _triple(padding)
    dt, dh, dw = _triple(dilation)
    _check_groups(c_in, c_out, w_cin, groups)
    t_out = out_extent(t, kt, st, pt, dt)
    h_out = out_extent(h, kh, sh, ph, dh)
    w_out = out_extent(w, kw, sw, pw, dw)
    if min(t_out, h_out, w_out) < 1:
        raise ShapeError(
            f"kernel ({kt}x{kh}x{kw}) does not fit padded input "
            f"({t + 2 * pt}x{h + 2 * ph}x{w + 2 * pw})")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"bias shape {bias.shape} != ({c_out},)")

    xp = _zero_pad(x.data, (pt, ph, pw))
    cig = c_in // groups
    cog = c_out // groups
    wg = weight.data.reshape(groups, cog, cig, kt, kh, kw)
    l = t_out * h_out * w_out
    acc = np.zeros((n, groups, cog, l), dtype=x.data.dtype)
    for dz in range(kt):
        for dy in range(kh):
            for dx in range(kw):
                zs, ys, xs = dz * dt, dy * dh, dx * dw
                sl = xp[:, :, zs:zs + st * t_out:st, ys:ys + sh * h_out:sh,
                        xs:xs + sw * w_out:sw]
                acc += wg[:, :, :, dz, dy, dx] @ sl.reshape(n, groups, cig, l)
    y = acc.reshape(n, c_out, t_out, h_out, w_out)
    if bias is not None:
        y = y + bias.data.reshape(1, c_out, 1, 1, 1)
    out = Tensor(y)
    _account(macs=n * c_out * cig * kt * kh * kw * l)

    def back(g, grads):
        go = g.reshape(n, groups, cog, l)
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for dz in range(kt):
                for dy in range(kh):
                    for dx in range(kw):
                        zs, ys, xs = dz * dt, dy * dh, dx * dw
                        contrib = wg[:, :, :, dz, dy, dx].transpose(0, 2, 1) @ go
                        gxp[:, :, zs:zs + st * t_out:st,
                            ys:ys + sh * h_out:sh,
                            xs:xs + sw * w_out:sw] += contrib.reshape(
                                n, c_in, t_out, h_out, w_out)
            if pt or ph or pw:
                gx = gxp[:, :, pt:pt + t, ph:ph + h, pw:pw + w]
            else:
                gx = gxp
            _acc(grads, x, np.ascontiguousarray(gx))
        if weight.requires_grad:
            gw = np.empty_like(wg)
            for dz in range(kt):
                for dy in range(kh):
                    for dx in range(kw):
                        zs, ys, xs = dz * dt, dy * dh, dx * dw
                        sl = xp[:, :, zs:zs + st * t_out:st,
                                ys:ys + sh * h_out:sh,
                                xs:xs + sw * w_out:sw].reshape(
                                    n, groups, cig, l)
                        gw[:, :, :, dz, dy, dx] = np.matmul(
                            go, sl.transpose(0, 1, 3, 2)).sum(axis=0)
            _acc(grads, weight, gw.reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _acc(grads, bias, g.sum(axis=(0, 2, 3, 4)))

    inputs = [x, weight] if bias is None else [x, weight, bias]
    return _finalize(out, inputs, back)


# ---------------------------------------------------------------------------
# naive references (test oracles; keep loop-literal, do not "optimise")


def conv2d_reference(x: np.ndarray, weight: np.ndarray,
                     bias: Optional[np.ndarray] = None,
                     stride=(1, 1), padding=(0, 0), dilation=(1, 1),
                     groups: int = 1) -> np.ndarray:
    n, c_in, h, w = x.shape
    c_out, cig, kh, kw = weight.shape
    sh, sw = stride
    ph, pw = padding
    dh, dw = dilation
    cog = c_out // groups
    h_out = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    w_out = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    y = np.zeros((n, c_out, h_out, w_out), dtype=x.dtype)
    for b in range(n):
        for co in range(c_out):
            g = co // cog
            for oy in range(h_out):
                for ox in range(w_out):
                    s = 0.0
                    for ci in range(cig):
                        for ky in range(kh):
                            iy = oy * sh - ph + ky * dh
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * sw - pw + kx * dw
                                if ix < 0 or ix >= w:
                                    continue
                                s += (x[b, g * cig + ci, iy, ix]
                                      * weight[co, ci, ky, kx])
                    if bias is not None:
                        s += bias[co]
                    y[b, co, oy, ox] = s
    return y


def conv3d_reference(x: np.ndarray, weight: np.ndarray,
                     bias: Optional[np.ndarray] = None,
                     stride=(1, 1, 1), padding=(0, 0, 0),
                     dilation=(1, 1, 1), groups: int = 1) -> np.ndarray:
    n, c_in, t, h, w = x.shape
    c_out, cig, kt, kh, kw = weight.shape
    st, sh, sw = stride
    pt, ph, pw = padding
    dt, dh, dw = dilation
    cog = c_out // groups
    t_out = (t + 2 * pt - dt * (kt - 1) - 1) // st + 1
    h_out = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    w_out = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    y = np.zeros((n, c_out, t_out, h_out, w_out), dtype=x.dtype)
    for b in range(n):
        for co in range(c_out):
            g = co // cog
            for oz in range(t_out):
                for oy in range(h_out):
                    for ox in range(w_out):
                        s = 0.0
                        for ci in range(cig):
                            for kz in range(kt):
                                iz = oz * st - pt + kz * dt
                                if iz < 0 or iz >= t:
                                    continue
                                for ky in range(kh):
                                    iy = oy * sh - ph + ky * dh
                                    if iy < 0 or iy >= h:
                                        continue
                                    for kx in range(kw):
                                        ix = ox * sw - pw + kx * dw
                                        if ix < 0 or ix >= w:
                                            continue
                                        s += (x[b, g * cig + ci, iz, iy, ix]
                                              * weight[co, ci, kz, ky, kx])
                        if bias is not None:
                            s += bias[co]
                        y[b, co, oz, oy, ox] = s
    return y
