"""Tiny seeded networks and images for desk-scale tests and demos.

Every fixture is deterministic: the seeds below are part of the repo, so
tests can freeze expected values against them.
"""

from __future__ import annotations

import numpy as np

from .errors import NetSpecError
from .kernels import ConvWeights, FcWeights
from .netspec import Conv, Fc, MaxPool, NetSpec, Relu, Softmax, shape_trace

__all__ = [
    "FIXTURE_NAMES",
    "fixture_netspec",
    "fixture_weights",
    "fixture_image",
]

FIXTURE_NAMES = ("tiny_conv_pool", "strided_pair", "padded_conv", "classifier",
                 "rgb_small")


def fixture_netspec(name: str) -> NetSpec:
    if name == "rgb_small":
        # 3-channel net exercising every layer type; pairs with PPM images.
        return NetSpec((3, 16, 16), (
            Conv("c1", 4, (3, 3), stride=1, pad=1), Relu("r1"),
            MaxPool("p1", (2, 2), stride=2),
            Conv("c2", 6, (3, 3), stride=1, pad=1), Relu("r2"),
            MaxPool("p2", (2, 2), stride=2),
            Fc("fc1", 5),
            Softmax("prob"),
        ))
    if name == "tiny_conv_pool":
        return NetSpec((1, 12, 12), (
            Conv("c1", 4, (3, 3), stride=1, pad=1), Relu("r1"),
            MaxPool("p1", (2, 2), stride=2),
        ))
    if name == "strided_pair":
        return NetSpec((2, 16, 16), (
            Conv("c1", 3, (3, 3), stride=2, pad=1), Relu("r1"),
            Conv("c2", 4, (3, 3), stride=1, pad=0), Relu("r2"),
            MaxPool("p2", (2, 2), stride=2),
        ))
    if name == "padded_conv":
        return NetSpec((1, 10, 10), (
            Conv("c1", 2, (5, 5), stride=1, pad=2), Relu("r1"),
            MaxPool("p1", (2, 2), stride=2),
        ))
    if name == "classifier":
        return NetSpec((2, 8, 8), (
            Conv("c1", 3, (3, 3), stride=1, pad=1), Relu("r1"),
            MaxPool("p1", (2, 2), stride=2),
            Fc("fc1", 6), Relu("r2"),
            Fc("fc2", 4),
            Softmax("prob"),
        ))
    raise NetSpecError(f"unknown fixture {name!r} (have {', '.join(FIXTURE_NAMES)})")


def fixture_weights(net: NetSpec, seed: int = 7) -> dict:
    """Gaussian weights for every conv/fc layer of ``net``, seeded."""
    rng = np.random.default_rng(seed)
    weights: dict[str, ConvWeights | FcWeights] = {}
    in_shape: tuple[int, ...] = net.input_shape
    for layer, (_, out_shape) in zip(net.layers, shape_trace(net)):
        if isinstance(layer, Conv):
            shape = (layer.out_channels, in_shape[0], *layer.kernel)
            scale = 1.0 / np.sqrt(np.prod(shape[1:]))
            weights[layer.name] = ConvWeights(
                rng.normal(0.0, scale, shape).astype(np.float32),
                rng.normal(0.0, 0.1, shape[0]).astype(np.float32),
            )
        elif isinstance(layer, Fc):
            n_in = int(np.prod(in_shape))
            weights[layer.name] = FcWeights(
                rng.normal(0.0, 1.0 / np.sqrt(n_in),
                           (layer.out_features, n_in)).astype(np.float32),
                rng.normal(0.0, 0.1, layer.out_features).astype(np.float32),
            )
        in_shape = out_shape
    return weights


def fixture_image(shape: tuple[int, int, int], seed: int = 11) -> np.ndarray:
    """Random uint8 image of the given (C, H, W) shape."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, shape, dtype=np.uint8)
