"""Dense 4-D tensor primitives, laid out (batch, channels, height, width).

All functions are pure and deterministic. Each output element is produced by
a fixed reduction order that never depends on how many worker threads the
caller runs, so arrays are safe to share read-only across threads. Model math
uses float32 arrays; oracles and gradient checks pass float64 through the
same code paths.
"""

from __future__ import annotations

import numpy as np

# A Tensor4 is a plain numpy array with ndim == 4, row-major.
Tensor4 = np.ndarray

_KERNEL_SIDES = (1, 3, 5)
_RESIZE_METHODS = ("nearest", "bilinear", "bicubic")

# Keys cubic-convolution parameter; pinned so resampling is reproducible.
CUBIC_A = -0.5


class ConvKernel:
    """Convolution weights (out_ch, in_ch, k, k) plus per-output-channel bias."""

    def __init__(self, weights, bias):
        weights = np.asarray(weights)
        bias = np.asarray(bias)
        if weights.ndim != 4:
            raise ValueError(f"kernel weights must be 4-D (out,in,k,k), got shape {weights.shape}")
        out_ch, _, kh, kw = weights.shape
        if kh != kw or kh not in _KERNEL_SIDES:
            raise ValueError(f"kernel must be square with side in {_KERNEL_SIDES}, got {kh}x{kw}")
        if bias.shape != (out_ch,):
            raise ValueError(f"bias shape {bias.shape} does not match {out_ch} output channels")
        self.weights = weights
        self.bias = bias

    @property
    def side(self) -> int:
        return self.weights.shape[2]


def _check4(x, name="input"):
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        shape = getattr(x, "shape", None)
        raise ValueError(f"{name} must be a 4-D (N,C,H,W) array, got shape {shape}")


def im2col(x: Tensor4, k: int) -> np.ndarray:
    """Unfold same-padded k*k windows into rows of length C*k*k.

    Row i corresponds to output position (n, y, x) in row-major order; within
    a row the taps are ordered channel-major, then dy, then dx, which pins the
    conv reduction order.
    """
    n, c, h, w = x.shape
    p = k // 2
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def conv2d(x: Tensor4, kernel: ConvKernel) -> Tensor4:
    """Same-size zero-padded 2-D convolution (cross-correlation layout)."""
    return conv2d_raw(x, kernel.weights, kernel.bias)


def conv2d_raw(x: Tensor4, weights: np.ndarray, bias: np.ndarray) -> Tensor4:
    _check4(x)
    n, c, h, w = x.shape
    out_ch, in_ch, k, _ = weights.shape
    if c != in_ch:
        raise ValueError(
            f"input shape {x.shape} has {c} channels but kernel shape {weights.shape} expects {in_ch}"
        )
    cols = im2col(x, k)
    out = cols @ weights.reshape(out_ch, -1).T
    out += bias
    return np.ascontiguousarray(out.reshape(n, h, w, out_ch).transpose(0, 3, 1, 2))


def conv2d_input_grad(gout: Tensor4, weights: np.ndarray) -> Tensor4:
    """Adjoint of conv2d_raw w.r.t. its input.

    For odd kernels with same-size zero padding this is again a same-padded
    convolution, with in/out channels swapped and the taps spatially flipped.
    """
    wt = np.ascontiguousarray(weights.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    zero_bias = np.zeros(wt.shape[0], dtype=gout.dtype)
    return conv2d_raw(gout, wt, zero_bias)


def conv2d_weight_grad(x: Tensor4, gout: Tensor4, k: int) -> np.ndarray:
    """Adjoint of conv2d_raw w.r.t. the weights."""
    n, c, h, w = x.shape
    out_ch = gout.shape[1]
    cols = im2col(x, k)
    g2 = gout.transpose(0, 2, 3, 1).reshape(n * h * w, out_ch)
    return (g2.T @ cols).reshape(out_ch, c, k, k)


def relu(x: Tensor4) -> Tensor4:
    return np.maximum(x, 0)


def add(a: Tensor4, b: Tensor4) -> Tensor4:
    if a.shape != b.shape:
        raise ValueError(f"add requires equal shapes, got {a.shape} and {b.shape}")
    return a + b


def scale(x: Tensor4, alpha: float) -> Tensor4:
    return x * alpha


def concat_channels(parts) -> Tensor4:
    parts = list(parts)
    if not parts:
        raise ValueError("concat_channels needs at least one tensor")
    first = parts[0]
    for p in parts[1:]:
        if (p.shape[0], p.shape[2], p.shape[3]) != (first.shape[0], first.shape[2], first.shape[3]):
            raise ValueError(f"concat_channels batch/spatial mismatch: {first.shape} vs {p.shape}")
    return np.concatenate(parts, axis=1)


def split_channels(x: Tensor4, sizes) -> list:
    _check4(x)
    sizes = list(sizes)
    if any(s <= 0 for s in sizes) or sum(sizes) != x.shape[1]:
        raise ValueError(f"split sizes {sizes} do not partition {x.shape[1]} channels")
    out, lo = [], 0
    for s in sizes:
        out.append(x[:, lo:lo + s])
        lo += s
    return out


def pixel_shuffle(x: Tensor4, r: int) -> Tensor4:
    """Rearrange r*r channel groups into an r-times larger spatial grid.

    out[n, c, y*r+dy, x*r+dx] = in[n, c*r*r + dy*r + dx, y, x]
    (channel-major sub-pixel ordering).
    """
    _check4(x)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r) != 0:
        raise ValueError(f"channel count {c} not divisible by r^2 = {r * r}")
    c_out = c // (r * r)
    y = x.reshape(n, c_out, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, c_out, h * r, w * r))


def pixel_unshuffle(x: Tensor4, r: int) -> Tensor4:
    """Exact inverse of pixel_shuffle."""
    _check4(x)
    n, c, hr, wr = x.shape
    if r < 1 or hr % r != 0 or wr % r != 0:
        raise ValueError(f"spatial size {(hr, wr)} not divisible by r = {r}")
    h, w = hr // r, wr // r
    y = x.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y.reshape(n, c * r * r, h, w))


def _cubic_weight(t: float) -> float:
    a = CUBIC_A
    at = abs(t)
    if at <= 1.0:
        return (a + 2.0) * at ** 3 - (a + 3.0) * at ** 2 + 1.0
    if at < 2.0:
        return a * at ** 3 - 5.0 * a * at ** 2 + 8.0 * a * at - 4.0 * a
    return 0.0


def _linear_weight(t: float) -> float:
    at = abs(t)
    return 1.0 - at if at < 1.0 else 0.0


def resample_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """1-D resampling matrix, half-pixel aligned, edges clamped."""
    if method not in _RESIZE_METHODS:
        raise ValueError(f"unknown resize method {method!r}, expected one of {_RESIZE_METHODS}")
    m = np.zeros((n_out, n_in))
    sc = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * sc - 0.5
        if method == "nearest":
            m[i, min(n_in - 1, max(0, int(np.floor(src + 0.5))))] = 1.0
            continue
        base = int(np.floor(src))
        taps = range(base - 1, base + 3) if method == "bicubic" else range(base, base + 2)
        wfn = _cubic_weight if method == "bicubic" else _linear_weight
        for j in taps:
            m[i, min(n_in - 1, max(0, j))] += wfn(src - j)
    return m


def resize(x: Tensor4, out_h: int, out_w: int, method: str = "bicubic") -> Tensor4:
    """Separable resampling of the spatial axes; weights applied in float64."""
    _check4(x)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"resize target must be positive, got {(out_h, out_w)}")
    mh = resample_matrix(x.shape[2], out_h, method)
    mw = resample_matrix(x.shape[3], out_w, method)
    y = np.matmul(np.matmul(mh, x.astype(np.float64, copy=False)), mw.T)
    return y.astype(x.dtype, copy=False)


def bicubic_resize(x: Tensor4, out_h: int, out_w: int) -> Tensor4:
    """Cubic-convolution resampling (a = -0.5), half-pixel centers, clamped edges."""
    return resize(x, out_h, out_w, "bicubic")


def flip_h(x: np.ndarray) -> np.ndarray:
    """Mirror the width (last) axis."""
    return x[..., ::-1]


def flip_v(x: np.ndarray) -> np.ndarray:
    """Mirror the height axis."""
    return x[..., ::-1, :]


def rot90(x: np.ndarray) -> np.ndarray:
    """Rotate the (H, W) plane 90 degrees counter-clockwise; swaps H and W."""
    return np.rot90(x, axes=(-2, -1))
