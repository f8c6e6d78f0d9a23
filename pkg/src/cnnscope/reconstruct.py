"""Project a layer's representation back to pixel space.

Starting from a (possibly masked) activation tensor at a chosen layer, the
layer stack below it is applied in reverse order: reverse convolution for
conv, negative clamping for relu, switch-filling for max-pool, transposed
weights for fc.  The result lives in the input image's pixel space and
shows which image structure produced the selected representation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .engine import ForwardTrace
from .errors import SelectionError
from .netspec import Conv, Fc, MaxPool, NetSpec, Relu, Softmax, shape_trace

__all__ = [
    "Selection",
    "reconstruct",
    "reconstruct_series",
    "to_displayable",
]


@dataclass(frozen=True)
class Selection:
    """Which part of a layer's representation to keep before reversing.

    Modes: ``full`` (everything), ``filter`` (one channel), ``neuron``
    (one channel at one position), ``topk`` (the n channels with the
    highest maximum activation).
    """

    layer: str
    mode: str = "full"
    k: int | None = None
    row: int | None = None
    col: int | None = None
    n: int | None = None

    @classmethod
    def full(cls, layer: str) -> "Selection":
        return cls(layer, "full")

    @classmethod
    def single_filter(cls, layer: str, k: int) -> "Selection":
        return cls(layer, "filter", k=k)

    @classmethod
    def neuron(cls, layer: str, k: int, row: int, col: int) -> "Selection":
        return cls(layer, "neuron", k=k, row=row, col=col)

    @classmethod
    def top_filters(cls, layer: str, n: int) -> "Selection":
        return cls(layer, "topk", n=n)


def _masked_start(activation: np.ndarray, sel: Selection) -> np.ndarray:
    act = np.asarray(activation, np.float32)
    if sel.mode == "full":
        return act.copy()
    out = np.zeros_like(act)
    channels = act.shape[0]
    if sel.mode == "filter":
        if sel.k is None or not (0 <= sel.k < channels):
            raise SelectionError(f"filter {sel.k} out of range for {channels} channels")
        out[sel.k] = act[sel.k]
        return out
    if sel.mode == "neuron":
        if sel.k is None or not (0 <= sel.k < channels):
            raise SelectionError(f"filter {sel.k} out of range for {channels} channels")
        if act.ndim == 1:
            if (sel.row, sel.col) not in ((0, 0), (None, None)):
                raise SelectionError("fc activations have no spatial positions")
            out[sel.k] = act[sel.k]
            return out
        if not (0 <= sel.row < act.shape[1] and 0 <= sel.col < act.shape[2]):
            raise SelectionError(
                f"position ({sel.row}, {sel.col}) outside extent "
                f"{act.shape[1]}x{act.shape[2]}"
            )
        out[sel.k, sel.row, sel.col] = act[sel.k, sel.row, sel.col]
        return out
    if sel.mode == "topk":
        if sel.n is None or not (1 <= sel.n <= channels):
            raise SelectionError(f"topk n={sel.n} out of range for {channels} channels")
        peak = act.reshape(channels, -1).max(axis=1)
        keep = np.argsort(-peak, kind="stable")[:sel.n]
        out[keep] = act[keep]
        return out
    raise SelectionError(f"unknown selection mode {sel.mode!r}")


def reconstruct(
    net: NetSpec, weights: dict, trace: ForwardTrace, sel: Selection
) -> np.ndarray:
    """Reverse the stack below ``sel.layer`` and return a pixel-space tensor.

    The trace must come from a forward pass of the same (net, weights) pair:
    its pooling switches steer the unpooling, and its activation at the
    selected layer is the starting point (masked to the selection).
    """
    idx = net.index_of(sel.layer)
    if isinstance(net.layers[idx], Softmax):
        raise SelectionError(
            f"layer {sel.layer!r} is a softmax; reconstruct from the layer below"
        )
    shapes = shape_trace(net)
    cur = _masked_start(trace.activation(sel.layer), sel)
    if cur.shape != shapes[idx][1]:
        raise SelectionError(
            f"trace activation {cur.shape} does not match net layer shape "
            f"{shapes[idx][1]} at {sel.layer!r}"
        )
    for i in range(idx, -1, -1):
        layer = net.layers[i]
        in_shape = shapes[i - 1][1] if i > 0 else net.input_shape
        if isinstance(layer, Conv):
            cur = kernels.conv_reverse(cur, weights[layer.name],
                                       layer.stride, layer.pad, in_shape)
        elif isinstance(layer, Relu):
            cur = kernels.relu_reverse(cur)
        elif isinstance(layer, MaxPool):
            if layer.name not in trace.switches:
                raise SelectionError(f"trace holds no switches for {layer.name!r}")
            cur = kernels.maxpool_reverse(cur, trace.switches[layer.name],
                                          in_shape, layer.window, layer.stride)
        elif isinstance(layer, Fc):
            cur = kernels.fc_reverse(cur, weights[layer.name], in_shape)
        else:
            raise SelectionError(f"cannot reverse through softmax {layer.name!r}")
    return cur


def reconstruct_series(
    net: NetSpec, weights: dict, trace: ForwardTrace, layers: list[str]
) -> list[np.ndarray]:
    """Full-selection reconstruction for each requested layer, in order."""
    return [reconstruct(net, weights, trace, Selection.full(name)) for name in layers]


def to_displayable(x: np.ndarray) -> np.ndarray:
    """Affine-rescale a pixel tensor to an 8-bit RGB image.

    min maps to 0 and max to 255; a constant tensor renders mid-gray.
    Single-channel input is replicated to RGB.
    """
    x = np.asarray(x, np.float32)
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ValueError(f"expected (1|3, H, W) tensor, got shape {x.shape}")
    if x.shape[0] == 1:
        x = np.repeat(x, 3, axis=0)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.full(x.shape, 128, np.uint8)
    scaled = (x - lo) * (255.0 / (hi - lo))
    return np.rint(scaled).clip(0, 255).astype(np.uint8)
