"""Forward and reverse numeric kernels for the four layer types.

Forward kernels are plain cross-correlation / max-pooling / affine maps.
Each linear forward op has a reverse op that applies its adjoint to a
tensor living in the output space: reverse convolution scatters values back
through flipped filters, reverse pooling fills the recorded argmax
locations, reverse fully-connected applies the transposed weight matrix.
Reverse rectification clamps negatives, keeping reconstructions positive.

Tensors are float32 numpy arrays laid out channels-first (C, H, W);
accumulations run in float64 and results are stored back as float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ConvWeights",
    "FcWeights",
    "Switches",
    "conv_forward",
    "conv_reverse",
    "relu_forward",
    "relu_reverse",
    "maxpool_forward",
    "maxpool_reverse",
    "fc_forward",
    "fc_reverse",
]

_F32 = np.float32


@dataclass(frozen=True)
class ConvWeights:
    kernels: np.ndarray  # (out_channels, in_channels, kh, kw) float32
    bias: np.ndarray     # (out_channels,) float32

    def __post_init__(self):
        object.__setattr__(self, "kernels", np.ascontiguousarray(self.kernels, _F32))
        object.__setattr__(self, "bias", np.ascontiguousarray(self.bias, _F32))
        if self.kernels.ndim != 4:
            raise ValueError(f"conv kernels must be rank 4, got {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.kernels.shape[0]} output channels"
            )


@dataclass(frozen=True)
class FcWeights:
    weights: np.ndarray  # (out_features, in_features) float32
    bias: np.ndarray     # (out_features,) float32

    def __post_init__(self):
        object.__setattr__(self, "weights", np.ascontiguousarray(self.weights, _F32))
        object.__setattr__(self, "bias", np.ascontiguousarray(self.bias, _F32))
        if self.weights.ndim != 2:
            raise ValueError(f"fc weights must be rank 2, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output features"
            )


@dataclass(frozen=True)
class Switches:
    """Argmax locations of every pooling window, in input coordinates.

    ``rows``/``cols`` have the pooled output's shape (C, OH, OW).
    """

    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.ascontiguousarray(self.rows, np.int32))
        object.__setattr__(self, "cols", np.ascontiguousarray(self.cols, np.int32))
        if self.rows.shape != self.cols.shape:
            raise ValueError("switch row/col arrays must share a shape")


def _as_chw(x: np.ndarray, what: str) -> np.ndarray:
    x = np.ascontiguousarray(x, _F32)
    if x.ndim != 3:
        raise ValueError(f"{what} must be rank 3 (C, H, W), got shape {x.shape}")
    return x


def _strided_windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (C, OH, OW, kh, kw) view over x, window starts stride apart
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::stride, ::stride]


def conv_forward(x: np.ndarray, w: ConvWeights, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Cross-correlate ``x`` (C, H, W) with ``w`` and add bias.

    Zero padding; output spatial dims follow the usual floor recurrence.
    No kernel flip: weights exported from standard frameworks apply as-is.
    """
    x = _as_chw(x, "conv input")
    out_c, in_c, kh, kw = w.kernels.shape
    if x.shape[0] != in_c:
        raise ValueError(
            f"conv input has {x.shape[0]} channels, kernels expect {in_c}"
        )
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError(
            f"conv input {x.shape[1]}x{x.shape[2]} smaller than kernel {kh}x{kw}"
        )
    win = _strided_windows(x, kh, kw, stride)
    out = np.einsum("kcuv,cijuv->kij", w.kernels, win, dtype=np.float64)
    out += w.bias.astype(np.float64)[:, None, None]
    return out.astype(_F32)


def conv_reverse(
    y: np.ndarray,
    w: ConvWeights,
    stride: int,
    pad: int,
    in_shape: tuple[int, int, int],
) -> np.ndarray:
    """Project ``y`` back through the convolution to the input grid.

    Every output value scatters its (flipped-filter) kernel, scaled by the
    value, onto the window it was computed from, and overlaps sum: the exact
    adjoint of :func:`conv_forward` without the bias term.  Returns a tensor
    of ``in_shape``.
    """
    y = _as_chw(y, "conv reverse input")
    out_c, in_c, kh, kw = w.kernels.shape
    c, h, wd = in_shape
    if c != in_c:
        raise ValueError(f"in_shape has {c} channels, kernels expect {in_c}")
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    if y.shape != (out_c, oh, ow):
        raise ValueError(
            f"reverse input shape {y.shape} does not match forward output "
            f"({out_c}, {oh}, {ow}) for in_shape {in_shape}"
        )
    buf = np.zeros((in_c, h + 2 * pad, wd + 2 * pad), dtype=np.float64)
    y64 = y.astype(np.float64)
    k64 = w.kernels.astype(np.float64)
    for u in range(kh):
        for v in range(kw):
            # target rows u, u+stride, ... never collide for distinct output rows
            buf[:, u:u + stride * oh:stride, v:v + stride * ow:stride] += np.einsum(
                "kij,kc->cij", y64, k64[:, :, u, v]
            )
    if pad:
        buf = buf[:, pad:pad + h, pad:pad + wd]
    return buf.astype(_F32)


def relu_forward(x: np.ndarray) -> np.ndarray:
    """Elementwise max(value, 0)."""
    return np.maximum(np.asarray(x, _F32), _F32(0))


def relu_reverse(r: np.ndarray) -> np.ndarray:
    """Clamp negatives during reconstruction so feature maps stay positive."""
    return np.maximum(np.asarray(r, _F32), _F32(0))


def maxpool_forward(
    x: np.ndarray, window: tuple[int, int], stride: int = 1
) -> tuple[np.ndarray, Switches]:
    """Max over each window plus the argmax locations (the switches).

    Ties resolve to the first maximum in row-major window order, so repeated
    runs and reconstructions are deterministic.
    """
    x = _as_chw(x, "pool input")
    kh, kw = window
    c, h, w = x.shape
    if h < kh or w < kw:
        raise ValueError(f"pool input {h}x{w} smaller than window {kh}x{kw}")
    win = _strided_windows(x, kh, kw, stride)
    oh, ow = win.shape[1], win.shape[2]
    flat = win.reshape(c, oh, ow, kh * kw)
    idx = flat.argmax(axis=3)
    values = np.take_along_axis(flat, idx[..., None], axis=3)[..., 0]
    base_r = np.arange(oh, dtype=np.int64)[None, :, None] * stride
    base_c = np.arange(ow, dtype=np.int64)[None, None, :] * stride
    rows = base_r + idx // kw
    cols = base_c + idx % kw
    return values.astype(_F32), Switches(rows, cols)


def maxpool_reverse(
    y: np.ndarray,
    switches: Switches,
    in_shape: tuple[int, int, int],
    window: tuple[int, int],
    stride: int = 1,
) -> np.ndarray:
    """Fill the recorded argmax locations with ``y``'s values, zero elsewhere.

    With overlapping windows a location can be recorded twice; contributions
    sum, which keeps this the adjoint of the frozen-switch linear map.
    """
    y = _as_chw(y, "unpool input")
    c, h, w = in_shape
    kh, kw = window
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    if y.shape != (c, oh, ow) or switches.rows.shape != (c, oh, ow):
        raise ValueError(
            f"unpool geometry mismatch: values {y.shape}, switches "
            f"{switches.rows.shape}, expected ({c}, {oh}, {ow}) for {in_shape}"
        )
    rows = switches.rows.astype(np.int64)
    cols = switches.cols.astype(np.int64)
    base_r = np.arange(oh, dtype=np.int64)[None, :, None] * stride
    base_c = np.arange(ow, dtype=np.int64)[None, None, :] * stride
    if ((rows < base_r) | (rows >= base_r + kh) | (rows >= h)
            | (cols < base_c) | (cols >= base_c + kw) | (cols >= w)).any():
        raise ValueError("switch locations fall outside their pooling windows")
    out = np.zeros(in_shape, dtype=np.float64)
    chan = np.broadcast_to(np.arange(c, dtype=np.int64)[:, None, None], y.shape)
    np.add.at(out, (chan.ravel(), rows.ravel(), cols.ravel()),
              y.astype(np.float64).ravel())
    return out.astype(_F32)


def fc_forward(x: np.ndarray, w: FcWeights) -> np.ndarray:
    """Affine map W @ flatten(x) + b."""
    flat = np.ascontiguousarray(x, _F32).reshape(-1)
    if flat.shape[0] != w.weights.shape[1]:
        raise ValueError(
            f"fc input length {flat.shape[0]} does not match "
            f"{w.weights.shape[1]} input features"
        )
    out = w.weights.astype(np.float64) @ flat.astype(np.float64)
    out += w.bias.astype(np.float64)
    return out.astype(_F32)


def fc_reverse(y: np.ndarray, w: FcWeights, in_shape: tuple[int, ...]) -> np.ndarray:
    """Transpose map W.T @ y, reshaped to the pre-flatten shape (no bias)."""
    y = np.ascontiguousarray(y, _F32).reshape(-1)
    if y.shape[0] != w.weights.shape[0]:
        raise ValueError(
            f"fc reverse input length {y.shape[0]} does not match "
            f"{w.weights.shape[0]} output features"
        )
    n_in = int(np.prod(in_shape))
    if n_in != w.weights.shape[1]:
        raise ValueError(
            f"in_shape {in_shape} has {n_in} elements, weights expect "
            f"{w.weights.shape[1]}"
        )
    out = w.weights.astype(np.float64).T @ y.astype(np.float64)
    return out.astype(_F32).reshape(in_shape)
