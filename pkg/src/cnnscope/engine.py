"""Forward execution of a NetSpec over loaded weights, recording a trace.

A ForwardTrace keeps every layer's activation plus the max-pooling switch
locations, which is everything the reconstruction and profiling passes need
to look back into the network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import EngineError
from .kernels import ConvWeights, FcWeights, Switches
from .netspec import Conv, Fc, MaxPool, NetSpec, Relu, Softmax, shape_trace

__all__ = [
    "ForwardTrace",
    "preprocess",
    "validate_weights",
    "run_forward",
    "softmax",
    "top_k_predictions",
]


@dataclass
class ForwardTrace:
    """Per-layer activations (in layer order) and pooling switches."""

    input: np.ndarray
    activations: dict[str, np.ndarray] = field(default_factory=dict)
    switches: dict[str, Switches] = field(default_factory=dict)

    def activation(self, layer: str) -> np.ndarray:
        if layer not in self.activations:
            raise EngineError(f"trace holds no activation for layer {layer!r}")
        return self.activations[layer]

    @property
    def final(self) -> np.ndarray:
        if not self.activations:
            raise EngineError("empty trace")
        return next(reversed(self.activations.values()))


def preprocess(image: np.ndarray, mean: np.ndarray | None = None) -> np.ndarray:
    """Convert to float32 and subtract the dataset mean.

    ``mean`` may be a full (3, H, W) image, a per-channel (3,) vector, or
    None for no subtraction.
    """
    x = np.asarray(image, np.float32)
    if x.ndim != 3:
        raise EngineError(f"image must be (C, H, W), got shape {x.shape}")
    if mean is None:
        return x.copy()
    m = np.asarray(mean, np.float32)
    if m.ndim == 1:
        if m.shape[0] != x.shape[0]:
            raise EngineError(
                f"per-channel mean has {m.shape[0]} entries for {x.shape[0]} channels"
            )
        return x - m[:, None, None]
    if m.shape != x.shape:
        raise EngineError(f"mean shape {m.shape} does not match image {x.shape}")
    return x - m


def validate_weights(net: NetSpec, weights: dict) -> None:
    """Check that ``weights`` covers exactly the conv/fc layers of ``net``
    with matching dimensions."""
    shapes = shape_trace(net)
    in_shape: tuple[int, ...] = net.input_shape
    needed = set()
    for layer, (_, out_shape) in zip(net.layers, shapes):
        if isinstance(layer, Conv):
            needed.add(layer.name)
            w = weights.get(layer.name)
            if not isinstance(w, ConvWeights):
                raise EngineError(f"layer {layer.name!r}: missing conv weights")
            expect = (layer.out_channels, in_shape[0], *layer.kernel)
            if w.kernels.shape != expect:
                raise EngineError(
                    f"layer {layer.name!r}: kernel shape {w.kernels.shape}, "
                    f"expected {expect}"
                )
        elif isinstance(layer, Fc):
            needed.add(layer.name)
            w = weights.get(layer.name)
            if not isinstance(w, FcWeights):
                raise EngineError(f"layer {layer.name!r}: missing fc weights")
            n_in = int(np.prod(in_shape))
            if w.weights.shape != (layer.out_features, n_in):
                raise EngineError(
                    f"layer {layer.name!r}: weight shape {w.weights.shape}, "
                    f"expected ({layer.out_features}, {n_in})"
                )
        in_shape = out_shape
    extra = set(weights) - needed
    if extra:
        raise EngineError(f"weights for unknown layers: {sorted(extra)}")


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over all elements."""
    z = np.asarray(z, np.float32)
    e = np.exp((z - z.max()).astype(np.float64))
    return (e / e.sum()).astype(np.float32)


def run_forward(
    net: NetSpec,
    weights: dict,
    x: np.ndarray,
    keep: set[str] | None = None,
) -> ForwardTrace:
    """Apply the layers in order and record a ForwardTrace.

    ``keep`` restricts which activations are retained (None keeps all);
    switches are always recorded since reconstruction needs them.
    """
    validate_weights(net, weights)
    x = np.asarray(x, np.float32)
    if x.shape != net.input_shape:
        raise EngineError(
            f"input shape {x.shape} does not match net input {net.input_shape}"
        )
    trace = ForwardTrace(input=x.copy())
    cur = x
    for layer in net.layers:
        try:
            if isinstance(layer, Conv):
                cur = kernels.conv_forward(cur, weights[layer.name],
                                           layer.stride, layer.pad)
            elif isinstance(layer, Relu):
                cur = kernels.relu_forward(cur)
            elif isinstance(layer, MaxPool):
                cur, sw = kernels.maxpool_forward(cur, layer.window, layer.stride)
                trace.switches[layer.name] = sw
            elif isinstance(layer, Fc):
                cur = kernels.fc_forward(cur, weights[layer.name])
            elif isinstance(layer, Softmax):
                cur = softmax(cur)
        except ValueError as e:
            raise EngineError(f"layer {layer.name!r}: {e}") from None
        if keep is None or layer.name in keep:
            trace.activations[layer.name] = cur
    return trace


def top_k_predictions(trace: ForwardTrace, k: int, labels: list[str]):
    """Rank the final softmax output: k highest (label, probability) pairs."""
    if not trace.activations:
        raise EngineError("empty trace")
    probs = trace.final.reshape(-1)
    if len(labels) != probs.shape[0]:
        raise EngineError(
            f"{len(labels)} labels for {probs.shape[0]} outputs"
        )
    if k < 1 or k > probs.shape[0]:
        raise EngineError(f"k={k} out of range for {probs.shape[0]} outputs")
    order = np.argsort(-probs, kind="stable")[:k]
    return [(labels[i], float(probs[i])) for i in order]
