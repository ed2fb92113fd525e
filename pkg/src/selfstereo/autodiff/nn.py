"""Image and volume kernels: convolutions, resampling, warping, SSIM, attention."""
from __future__ import annotations

from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from selfstereo.autodiff import ops
from selfstereo.autodiff.tensor import Tensor, record
from selfstereo.errors import ShapeError

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 3


def _check_conv_args(name: str, x: Tensor, w: Tensor, bias: Optional[Tensor], spatial: int) -> None:
    if x.ndim != spatial + 1:
        raise ShapeError(f"{name}: input must have {spatial + 1} dims, got shape {x.shape}")
    if w.ndim != spatial + 2:
        raise ShapeError(f"{name}: weight must have {spatial + 2} dims, got shape {w.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"{name}: weight expects {w.shape[1]} input channels, input has {x.shape[0]}")
    if any(k % 2 == 0 for k in w.shape[2:]):
        raise ShapeError(f"{name}: kernel sizes must be odd, got {w.shape[2:]}")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ShapeError(f"{name}: bias shape {bias.shape} does not match {w.shape[0]} output channels")


def _out_size(name: str, n: int, k: int, stride: int, pad: int) -> int:
    span = n + 2 * pad - k
    if span < 0 or span % stride:
        raise ShapeError(
            f"{name}: output size ({n} + 2*{pad} - {k})/{stride} + 1 is not a positive integer"
        )
    return span // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    pad: int = 0,
) -> Tensor:
    """2-D cross-correlation of a ``[C_in,H,W]`` input.

    Output sizes must come out integral; sizes that would need flooring are
    rejected rather than silently cropped.
    """
    if stride < 1 or pad < 0:
        raise ValueError(f"conv2d: stride must be >= 1 and pad >= 0, got stride={stride} pad={pad}")
    _check_conv_args("conv2d", x, weight, bias, 2)
    c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    ho = _out_size("conv2d", h, kh, stride, pad)
    wo = _out_size("conv2d", w, kw, stride, pad)

    xp = np.pad(x.values, ((0, 0), (pad, pad), (pad, pad)))
    wv = weight.values

    def window(i: int, j: int) -> Tuple[slice, slice, slice]:
        return (
            slice(None),
            slice(i, i + stride * (ho - 1) + 1, stride),
            slice(j, j + stride * (wo - 1) + 1, stride),
        )

    out = np.zeros((c_out, ho * wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            out += wv[:, :, i, j] @ xp[window(i, j)].reshape(c_in, -1)
    if bias is not None:
        out += bias.values[:, None]

    def backward(g: np.ndarray):
        g2 = g.reshape(c_out, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.zeros_like(wv)
            for i in range(kh):
                for j in range(kw):
                    gw[:, :, i, j] = g2 @ xp[window(i, j)].reshape(c_in, -1).T
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[window(i, j)] += (wv[:, :, i, j].T @ g2).reshape(c_in, ho, wo)
            gx = gxp[:, pad : pad + h, pad : pad + w]
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return record(out.reshape(c_out, ho, wo), parents, backward, "conv2d")


def conv3d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, pad: int = 1) -> Tensor:
    """Stride-1 3-D cross-correlation of a ``[C_in,D,H,W]`` volume."""
    if pad < 0:
        raise ValueError(f"conv3d: pad must be >= 0, got {pad}")
    _check_conv_args("conv3d", x, weight, bias, 3)
    c_in, d, h, w = x.shape
    c_out, _, kd, kh, kw = weight.shape
    do = _out_size("conv3d", d, kd, 1, pad)
    ho = _out_size("conv3d", h, kh, 1, pad)
    wo = _out_size("conv3d", w, kw, 1, pad)

    xp = np.pad(x.values, ((0, 0), (pad, pad), (pad, pad), (pad, pad)))
    wv = weight.values
    offsets = [(a, b, c) for a in range(kd) for b in range(kh) for c in range(kw)]

    def window(a: int, b: int, c: int) -> Tuple[slice, ...]:
        return (slice(None), slice(a, a + do), slice(b, b + ho), slice(c, c + wo))

    out = np.zeros((c_out, do * ho * wo), dtype=x.dtype)
    for a, b, c in offsets:
        out += wv[:, :, a, b, c] @ xp[window(a, b, c)].reshape(c_in, -1)
    if bias is not None:
        out += bias.values[:, None]

    def backward(g: np.ndarray):
        g2 = g.reshape(c_out, -1)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.zeros_like(wv)
            for a, b, c in offsets:
                gw[:, :, a, b, c] = g2 @ xp[window(a, b, c)].reshape(c_in, -1).T
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for a, b, c in offsets:
                gxp[window(a, b, c)] += (wv[:, :, a, b, c].T @ g2).reshape(c_in, do, ho, wo)
            gx = gxp[:, pad : pad + d, pad : pad + h, pad : pad + w]
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=1)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return record(out.reshape(c_out, do, ho, wo), parents, backward, "conv3d")


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    c, h, w = x.shape
    if h % k or w % k:
        raise ShapeError(f"avg_pool2d: spatial size {h}x{w} not divisible by {k}")
    out = x.values.reshape(c, h // k, k, w // k, k).mean(axis=(2, 4))

    def backward(g: np.ndarray):
        return (np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k),)

    return record(out, (x,), backward, "avg_pool2d")


def _separable(x: Tensor, rows: np.ndarray, cols: np.ndarray, op_name: str) -> Tensor:
    """Apply ``rows @ x @ cols.T`` over the last two axes."""
    rows = rows.astype(x.dtype, copy=False)
    cols = cols.astype(x.dtype, copy=False)
    out = rows @ x.values @ cols.T

    def backward(g: np.ndarray):
        return (rows.T @ g @ cols,)

    return record(out, (x,), backward, op_name)


@lru_cache(maxsize=256)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights, half-pixel centres (align_corners=False)."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    m.setflags(write=False)
    return m


def bilinear_resize(x: Tensor, height: int, width: int) -> Tensor:
    if height < 1 or width < 1:
        raise ValueError(f"bilinear_resize: target size must be positive, got {height}x{width}")
    h, w = x.shape[-2:]
    if (h, w) == (height, width):
        return x
    return _separable(x, resize_matrix(h, height), resize_matrix(w, width), "bilinear_resize")


def _pad_matrix(n: int, pad: int, mode: str) -> np.ndarray:
    idx = np.arange(-pad, n + pad)
    if mode == "reflect":
        if n < 2 and pad > 0:
            raise ShapeError("pad2d: reflect padding needs at least 2 samples per axis")
        period = 2 * (n - 1)
        idx = np.abs(idx) % period if period else np.zeros_like(idx)
        idx = np.where(idx > n - 1, period - idx, idx)
    elif mode == "edge":
        idx = np.clip(idx, 0, n - 1)
    elif mode != "constant":
        raise ValueError(f"pad2d: unknown mode {mode!r}")
    m = np.zeros((n + 2 * pad, n), dtype=np.float64)
    valid = (idx >= 0) & (idx < n)
    m[np.nonzero(valid)[0], idx[valid]] = 1.0
    return m


def pad2d(x: Tensor, pad: int, mode: str = "constant") -> Tensor:
    """Pad the last two axes; ``constant`` pads with zeros."""
    if pad < 0:
        raise ValueError(f"pad2d: pad must be >= 0, got {pad}")
    if pad == 0:
        return x
    h, w = x.shape[-2:]
    return _separable(x, _pad_matrix(h, pad, mode), _pad_matrix(w, pad, mode), "pad2d")


def _box_matrix(n: int, k: int) -> np.ndarray:
    m = np.zeros((n - k + 1, n), dtype=np.float64)
    for i in range(n - k + 1):
        m[i, i : i + k] = 1.0 / k
    return m


def box_mean(x: Tensor, k: int) -> Tensor:
    """Mean over every valid ``k x k`` window of the last two axes."""
    h, w = x.shape[-2:]
    if k < 1 or k > h or k > w:
        raise ShapeError(f"box_mean: window {k} does not fit {h}x{w}")
    return _separable(x, _box_matrix(h, k), _box_matrix(w, k), "box_mean")


def warp_horizontal(image: Tensor, disparity: Tensor) -> Tuple[Tensor, np.ndarray]:
    """Sample ``image[C,H,W]`` at ``x - d(x,y)`` with linear interpolation.

    Coordinates outside ``[0, W-1]`` are clamped for the value and flagged with
    ``in_view = False``; no disparity gradient flows through clamped samples.
    """
    if image.ndim != 3 or disparity.shape != image.shape[1:]:
        raise ShapeError(
            f"warp_horizontal: image {image.shape} and disparity {disparity.shape} disagree"
        )
    c, h, w = image.shape
    xs = np.arange(w, dtype=image.dtype)[None, :] - disparity.values.astype(image.dtype)
    in_view = (xs >= 0) & (xs <= w - 1)
    interior = (xs > 0) & (xs < w - 1)
    xc = np.clip(xs, 0, w - 1)
    x0 = np.clip(np.floor(xc).astype(np.int64), 0, max(w - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    frac = (xc - x0).astype(image.dtype)
    if w == 1:
        frac = np.zeros_like(frac)
    yy = np.arange(h)[:, None]
    v0 = image.values[:, yy, x0]
    v1 = image.values[:, yy, x1]
    out = (1 - frac) * v0 + frac * v1
    idx0 = (yy * w + x0).ravel()
    idx1 = (yy * w + x1).ravel()

    def backward(g: np.ndarray):
        gi = gd = None
        if image.requires_grad:
            a = (g * (1 - frac)).reshape(c, -1)
            b = (g * frac).reshape(c, -1)
            gi = np.stack(
                [
                    np.bincount(idx0, a[ch], minlength=h * w) + np.bincount(idx1, b[ch], minlength=h * w)
                    for ch in range(c)
                ]
            ).reshape(c, h, w)
        if disparity.requires_grad:
            gd = -(g * (v1 - v0)).sum(axis=0) * interior
        return gi, gd

    return record(out, (image, disparity), backward, "warp_horizontal"), in_view


def gather_columns(x: Tensor, cols: np.ndarray) -> Tuple[Tensor, np.ndarray]:
    """``out[c,k,y,x] = x[c, y, cols[k,y,x]]``; columns outside the image give zero.

    Returns the gathered ``[C,D,H,W]`` tensor and the ``[D,H,W]`` validity mask.
    """
    c, h, w = x.shape
    if cols.ndim != 3 or cols.shape[1:] != (h, w):
        raise ShapeError(f"gather_columns: column map {cols.shape} does not match {(h, w)}")
    cols = np.asarray(cols, dtype=np.int64)
    valid = (cols >= 0) & (cols < w)
    safe = np.where(valid, cols, 0)
    yy = np.arange(h)[None, :, None]
    out = x.values[:, yy, safe] * valid
    flat = (yy * w + safe).ravel()

    def backward(g: np.ndarray):
        gv = (g * valid).reshape(c, -1)
        return (np.stack([np.bincount(flat, gv[ch], minlength=h * w) for ch in range(c)]).reshape(c, h, w),)

    return record(out, (x,), backward, "gather_columns"), valid


def softmax_axis(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return record(out, (x,), backward, "softmax")


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """``softmax(q k^T / sqrt(D)) v`` over the last two axes (leading axes batch)."""
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: incompatible q {q.shape}, k {k.shape}, v {v.shape}")
    scores = ops.matmul(q, ops.swap_last(k)) * (1.0 / np.sqrt(q.shape[-1]))
    return ops.matmul(softmax_axis(scores, axis=-1), v)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    centered = x - ops.mean(x, axis=-1, keepdims=True)
    var = ops.mean(ops.square(centered), axis=-1, keepdims=True)
    return centered / ops.sqrt(var + eps) * gamma + beta


def ssim_map(a: Tensor, b: Tensor) -> Tensor:
    """Per-pixel SSIM over a 3x3 uniform window with reflect padding."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim_map: shapes differ, {a.shape} vs {b.shape}")
    half = SSIM_WINDOW // 2
    pa = pad2d(a, half, "reflect")
    pb = pad2d(b, half, "reflect")
    mu_a = box_mean(pa, SSIM_WINDOW)
    mu_b = box_mean(pb, SSIM_WINDOW)
    var_a = box_mean(pa * pa, SSIM_WINDOW) - mu_a * mu_a
    var_b = box_mean(pb * pb, SSIM_WINDOW) - mu_b * mu_b
    cov = box_mean(pa * pb, SSIM_WINDOW) - mu_a * mu_b
    numerator = (mu_a * mu_b * 2.0 + SSIM_C1) * (cov * 2.0 + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return numerator / denominator
