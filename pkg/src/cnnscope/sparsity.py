"""Fraction of zero activations per layer, aggregated over an image set.

ReLU clamps negatives to exact zeros, so counting |v| == 0 after the
clamp is exact; no epsilon is involved unless the caller profiles a
pre-rectification layer and asks for a threshold.  Counts stream image
by image, so memory stays bounded by one trace regardless of dataset
size.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import islice

import numpy as np

from .engine import preprocess, run_forward
from .errors import PreconditionError
from .netspec import Conv, Fc, MaxPool, NetSpec, Relu

__all__ = ["LayerSparsity", "SparsityReport", "layer_sparsity", "compare_sparsity"]


@dataclass(frozen=True)
class LayerSparsity:
    layer: str
    zeros: int
    total: int

    @property
    def sparsity(self) -> float:
        return self.zeros / self.total


@dataclass(frozen=True)
class SparsityReport:
    rows: tuple[LayerSparsity, ...]
    n_images: int

    def layers(self) -> list[str]:
        return [r.layer for r in self.rows]

    def sparsity(self, layer: str) -> float:
        for row in self.rows:
            if row.layer == layer:
                return row.sparsity
        raise KeyError(layer)

    def to_tsv_rows(self) -> list[list]:
        return [[r.layer, r.zeros, r.total, f"{r.sparsity:.6f}"] for r in self.rows]


def _measure_plan(net: NetSpec, layers, post_relu: bool) -> list[tuple[str, str]]:
    """(report name, trace layer to read) pairs.

    With post_relu, a conv/fc immediately followed by a relu is measured
    at that relu's output but reported under its own name; pool layers
    and explicit relu requests are read directly.
    """
    if layers is None:
        layers = [l.name for l in net.layers if isinstance(l, (Conv, MaxPool))]
    plan = []
    for name in layers:
        idx = net.index_of(name)  # raises on unknown layer
        source = name
        if post_relu and isinstance(net.layers[idx], (Conv, Fc)):
            if idx + 1 < len(net.layers) and isinstance(net.layers[idx + 1], Relu):
                source = net.layers[idx + 1].name
        plan.append((name, source))
    return plan


def _count_zeros(x: np.ndarray, threshold: float) -> int:
    if threshold == 0.0:
        return int(np.count_nonzero(x == 0.0))
    return int(np.count_nonzero(np.abs(x) <= threshold))


def layer_sparsity(
    net: NetSpec,
    weights: dict,
    images,
    layers: list[str] | None = None,
    post_relu: bool = True,
    threshold: float = 0.0,
    mean: np.ndarray | None = None,
    threads: int = 1,
) -> SparsityReport:
    """Per-layer zero fraction over a dataset.

    ``images`` is any iterable of (image_id, array) pairs or bare arrays;
    it is consumed lazily.  Defaults profile every conv and pool layer,
    convs measured after their rectification.
    """
    plan = _measure_plan(net, layers, post_relu)
    keep = {source for _, source in plan}

    def one(item) -> dict[str, tuple[int, int]]:
        img = item[1] if isinstance(item, tuple) else item
        x = preprocess(np.asarray(img), mean)
        trace = run_forward(net, weights, x, keep=keep)
        out = {}
        for name, source in plan:
            act = trace.activation(source)
            out[name] = (_count_zeros(act, threshold), act.size)
        return out

    zeros = {name: 0 for name, _ in plan}
    totals = {name: 0 for name, _ in plan}
    n_images = 0
    it = iter(images)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            while True:
                batch = list(islice(it, threads * 4))
                if not batch:
                    break
                for counts in pool.map(one, batch):
                    n_images += 1
                    for name, (z, t) in counts.items():
                        zeros[name] += z
                        totals[name] += t
    else:
        for item in it:
            counts = one(item)
            n_images += 1
            for name, (z, t) in counts.items():
                zeros[name] += z
                totals[name] += t

    if n_images == 0:
        raise PreconditionError("empty image set")
    rows = tuple(LayerSparsity(name, zeros[name], totals[name]) for name, _ in plan)
    return SparsityReport(rows=rows, n_images=n_images)


def compare_sparsity(
    a: SparsityReport, b: SparsityReport
) -> list[tuple[str, float | None, float | None]]:
    """Align two reports layer by layer for side-by-side printing.

    Rows follow a's layer order, then layers only b has; a missing value
    is None.
    """
    a_map = {r.layer: r.sparsity for r in a.rows}
    b_map = {r.layer: r.sparsity for r in b.rows}
    names = list(a_map) + [n for n in b_map if n not in a_map]
    return [(n, a_map.get(n), b_map.get(n)) for n in names]
