"""Dependency-free line plots rendered straight into uint8 RGB arrays.

Just enough to chart per-layer sparsity curves: an axes box, y gridlines
with numeric labels from a tiny 3x5 digit font, one polyline with square
markers per series.  Not a plotting library.
"""

from __future__ import annotations

import numpy as np

__all__ = ["line_plot"]

PALETTE = [
    (214, 39, 40),    # red
    (31, 119, 180),   # blue
    (44, 160, 44),    # green
    (255, 127, 14),   # orange
    (148, 103, 189),  # purple
    (140, 86, 75),    # brown
]

# 3x5 glyphs for "0123456789.", rows top to bottom, 1 = ink.
_GLYPHS = {
    "0": ["111", "101", "101", "101", "111"],
    "1": ["010", "110", "010", "010", "111"],
    "2": ["111", "001", "111", "100", "111"],
    "3": ["111", "001", "011", "001", "111"],
    "4": ["101", "101", "111", "001", "001"],
    "5": ["111", "100", "111", "001", "111"],
    "6": ["111", "100", "111", "101", "111"],
    "7": ["111", "001", "010", "010", "010"],
    "8": ["111", "101", "111", "101", "111"],
    "9": ["111", "101", "111", "001", "111"],
    ".": ["000", "000", "000", "000", "010"],
}


def _draw_text(canvas: np.ndarray, row: int, col: int, text: str,
               color=(0, 0, 0), scale: int = 1) -> None:
    h, w = canvas.shape[1:]
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is not None:
            for gr, bits in enumerate(glyph):
                for gc, bit in enumerate(bits):
                    if bit == "1":
                        r0, c0 = row + gr * scale, col + gc * scale
                        r1, c1 = min(r0 + scale, h), min(c0 + scale, w)
                        if 0 <= r0 < h and 0 <= c0 < w:
                            for k in range(3):
                                canvas[k, r0:r1, c0:c1] = color[k]
        col += 4 * scale


def _draw_segment(canvas: np.ndarray, r0, c0, r1, c1, color, thick=1) -> None:
    steps = int(max(abs(r1 - r0), abs(c1 - c0))) + 1
    h, w = canvas.shape[1:]
    for t in np.linspace(0.0, 1.0, steps * 2):
        r = int(round(r0 + (r1 - r0) * t))
        c = int(round(c0 + (c1 - c0) * t))
        ra, rb = max(r, 0), min(r + thick, h)
        ca, cb = max(c, 0), min(c + thick, w)
        for k in range(3):
            canvas[k, ra:rb, ca:cb] = color[k]


def line_plot(
    series: list[tuple[str, list[float]]],
    width: int = 640,
    height: int = 400,
    y_max: float = 1.0,
) -> np.ndarray:
    """Render series of values in [0, y_max] as a (3, height, width) image.

    X positions are the value indices, evenly spaced.  Series are drawn
    in palette order; the legend is positional (callers record the label
    order alongside, e.g. in a companion TSV).
    """
    canvas = np.full((3, height, width), 255, np.uint8)
    left, right, top, bottom = 46, width - 12, 12, height - 28
    black = (0, 0, 0)

    # y gridlines and labels at quarter steps
    for q in range(5):
        frac = q / 4.0
        r = int(round(bottom - frac * (bottom - top)))
        _draw_segment(canvas, r, left, r, right, (220, 220, 220))
        _draw_text(canvas, r - 2, 8, f"{frac * y_max:.2f}")

    # axes box
    _draw_segment(canvas, top, left, bottom, left, black)
    _draw_segment(canvas, bottom, left, bottom, right, black)

    n_pts = max((len(vals) for _, vals in series), default=0)
    if n_pts == 0:
        return canvas
    xs = [left if n_pts == 1 else left + i * (right - left) / (n_pts - 1)
          for i in range(n_pts)]
    for i, x in enumerate(xs):
        _draw_segment(canvas, bottom, int(x), bottom + 4, int(x), black)
        _draw_text(canvas, bottom + 8, int(x) - 3, str(i % 10))

    for s, (label, vals) in enumerate(series):
        color = PALETTE[s % len(PALETTE)]
        pts = []
        for i, v in enumerate(vals):
            frac = min(max(float(v) / y_max, 0.0), 1.0) if y_max > 0 else 0.0
            pts.append((int(round(bottom - frac * (bottom - top))), int(xs[i])))
        for (r0, c0), (r1, c1) in zip(pts, pts[1:]):
            _draw_segment(canvas, r0, c0, r1, c1, color)
        for r, c in pts:  # square markers
            for k in range(3):
                canvas[k, max(r - 2, 0):r + 3, max(c - 2, 0):c + 3] = color[k]
    return canvas
