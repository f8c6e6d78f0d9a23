"""Patch extraction and representation-space tooling.

Every spatial position of a conv/relu/pool layer sees a square region of
the input image (its receptive field) and responds with one value per
channel.  This module collects those (patch pixels, activation vector)
pairs over an image set, ranks filters and patches by activation, and
lays out 2-D embeddings of the activation vectors on a display grid.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import preprocess, run_forward
from .errors import PreconditionError, SelectionError
from .netspec import Conv, MaxPool, NetSpec, PixelBox, Relu, neuron_bbox, \
    receptive_fields, shape_trace
from .validation import as_rgb

__all__ = [
    "PatchRecord",
    "extract_patches",
    "top_activated_filters",
    "top_patches_for_filter",
    "grid_fill",
    "compose_grid",
]

FILL_GRAY = 128

Dataset = "Sequence[tuple[str, np.ndarray]]"


@dataclass(frozen=True)
class PatchRecord:
    """One sampled position: where it came from and what it looked like.

    activation has one entry per channel of the layer; pixels is the
    receptive-field crop as a uniform (3, S, S) square, mid-gray where
    the field extends past the image border.
    """

    image_id: str
    layer: str
    position: tuple[int, int]
    activation: np.ndarray
    bbox: PixelBox
    pixels: np.ndarray


def _spatial_layer(net: NetSpec, layer: str):
    spec = net.layer(layer)
    if not isinstance(spec, (Conv, Relu, MaxPool)):
        raise SelectionError(
            f"layer {layer!r} has no spatial positions; pick a conv/relu/pool layer"
        )
    return spec


def _crop_patch(image: np.ndarray, net: NetSpec, layer: str,
                pos: tuple[int, int]) -> tuple[np.ndarray, PixelBox]:
    """Receptive-field crop as a uniform square, plus the clipped bbox."""
    rf = dict(receptive_fields(net))[layer]
    box = neuron_bbox(net, layer, pos)
    canvas = np.full((3, rf.size, rf.size), FILL_GRAY, np.uint8)
    if box.height > 0 and box.width > 0:
        rgb = as_rgb(image)
        top_raw = pos[0] * rf.stride - rf.offset
        left_raw = pos[1] * rf.stride - rf.offset
        r0, c0 = box.top - top_raw, box.left - left_raw
        canvas[:, r0:r0 + box.height, c0:c0 + box.width] = \
            rgb[:, box.top:box.top + box.height, box.left:box.left + box.width]
    return canvas, box


def _layer_activations(images, net, weights, layer, mean, threads):
    """Activation map of one layer for every image, in dataset order."""
    def one(item):
        image_id, img = item
        x = preprocess(np.asarray(img), mean)
        trace = run_forward(net, weights, x, keep={layer})
        return image_id, np.asarray(img), trace.activation(layer)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, images))
    return [one(item) for item in images]


def extract_patches(
    images,
    net: NetSpec,
    weights: dict,
    layer: str,
    sampling: str = "all",
    n: int | None = None,
    seed: int | None = None,
    mean: np.ndarray | None = None,
    threads: int = 1,
) -> list[PatchRecord]:
    """Sample spatial positions of a layer over an image set.

    ``images`` is a sequence of (image_id, (C, H, W) uint8) pairs whose
    channel count matches the net input.  Sampling modes:

    * ``all``: every position of every image, dataset order.
    * ``random``: n positions drawn without replacement (seeded).
    * ``top_norm``: the n positions with the largest activation L2 norm,
      descending.

    For random/top_norm, n is required and capped at the available count.
    """
    images = list(images)
    if not images:
        raise PreconditionError("empty image set")
    _spatial_layer(net, layer)
    per_image = _layer_activations(images, net, weights, layer, mean, threads)

    candidates = []  # (image_id, image, row, col, activation vector)
    for image_id, img, act in per_image:
        for r in range(act.shape[1]):
            for c in range(act.shape[2]):
                candidates.append((image_id, img, r, c, act[:, r, c].copy()))

    if sampling == "all":
        chosen = range(len(candidates))
    elif sampling == "random":
        if n is None:
            raise PreconditionError("sampling 'random' needs a sample count n")
        rng = np.random.default_rng(seed)
        take = min(n, len(candidates))
        chosen = sorted(rng.choice(len(candidates), size=take, replace=False))
    elif sampling == "top_norm":
        if n is None:
            raise PreconditionError("sampling 'top_norm' needs a sample count n")
        norms = np.array([np.linalg.norm(c[4].astype(np.float64))
                          for c in candidates])
        chosen = np.argsort(-norms, kind="stable")[:n]
    else:
        raise PreconditionError(f"unknown sampling mode {sampling!r}")

    records = []
    for idx in chosen:
        image_id, img, r, c, vec = candidates[idx]
        pixels, box = _crop_patch(img, net, layer, (r, c))
        records.append(PatchRecord(image_id, layer, (r, c), vec, box, pixels))
    return records


def top_activated_filters(patch: PatchRecord, n: int) -> list[int]:
    """Indices of the n largest activation entries, descending; ties keep
    the lower index first."""
    act = np.asarray(patch.activation)
    if not 0 <= n <= act.shape[0]:
        raise SelectionError(f"n={n} out of range for {act.shape[0]} channels")
    return [int(i) for i in np.argsort(-act, kind="stable")[:n]]


def top_patches_for_filter(
    images,
    net: NetSpec,
    weights: dict,
    layer: str,
    k: int,
    n: int,
    mean: np.ndarray | None = None,
    threads: int = 1,
) -> list[PatchRecord]:
    """The n positions maximizing filter k's activation, across all images.

    Full scan: every position of every image competes.  Sorted by
    activation descending; exact ties fall back to (image_id, row, col)
    so the result does not depend on dataset ordering.
    """
    images = list(images)
    if not images:
        raise PreconditionError("empty image set")
    _spatial_layer(net, layer)
    channels = dict(shape_trace(net))[layer][0]
    if not 0 <= k < channels:
        raise SelectionError(f"filter {k} out of range for {channels} channels")

    per_image = _layer_activations(images, net, weights, layer, mean, threads)
    total = sum(act.shape[1] * act.shape[2] for _, _, act in per_image)
    if n > total:
        raise PreconditionError(f"asked for {n} patches but only {total} positions exist")
    if n == 0:
        return []

    scored = []
    for image_id, img, act in per_image:
        plane = act[k]
        for r in range(plane.shape[0]):
            for c in range(plane.shape[1]):
                scored.append((float(plane[r, c]), image_id, r, c, img, act))
    scored.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))

    records = []
    for value, image_id, r, c, img, act in scored[:n]:
        pixels, box = _crop_patch(img, net, layer, (r, c))
        records.append(PatchRecord(image_id, layer, (r, c),
                                   act[:, r, c].copy(), box, pixels))
    return records


def unit_rescale(points: np.ndarray) -> np.ndarray:
    """Per-axis min-max rescale to the unit square; a degenerate axis
    collapses to 0.5."""
    pts = np.asarray(points, np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = hi - lo
    out = np.full_like(pts, 0.5)
    for axis in range(pts.shape[1]):
        if span[axis] > 0:
            out[:, axis] = (pts[:, axis] - lo[axis]) / span[axis]
    return out


def grid_fill(points: np.ndarray, grid: int) -> np.ndarray:
    """Assign each cell of a G x G grid its nearest embedded point.

    Coordinates are rescaled to the unit square first; each cell is
    represented by its center, distances are Euclidean, and ties go to
    the lowest point index.  Returns a (G, G) int32 index array with
    row 0 at the smallest y.
    """
    pts = np.asarray(points, np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise PreconditionError(f"need an (n, 2) point array, got shape {pts.shape}")
    if grid < 1:
        raise PreconditionError(f"grid size must be >= 1, got {grid}")
    unit = unit_rescale(pts)
    assign = np.zeros((grid, grid), np.int32)
    for i in range(grid):
        cy = (i + 0.5) / grid
        for j in range(grid):
            cx = (j + 0.5) / grid
            d2 = (unit[:, 0] - cx) ** 2 + (unit[:, 1] - cy) ** 2
            assign[i, j] = int(np.argmin(d2))
    return assign


def compose_grid(assign: np.ndarray, patches, cell: int | None = None) -> np.ndarray:
    """Render a grid assignment as one (3, G*cell, G*cell) uint8 canvas."""
    from .fileio import resize_nearest

    tiles = [p.pixels if isinstance(p, PatchRecord) else np.asarray(p, np.uint8)
             for p in patches]
    if cell is None:
        cell = tiles[0].shape[1]
    rows, cols = assign.shape
    canvas = np.full((3, rows * cell, cols * cell), FILL_GRAY, np.uint8)
    for i in range(rows):
        for j in range(cols):
            tile = tiles[int(assign[i, j])]
            if tile.shape[1:] != (cell, cell):
                tile = resize_nearest(tile, cell, cell)
            canvas[:, i * cell:(i + 1) * cell, j * cell:(j + 1) * cell] = tile
    return canvas
