"""Small input-checking helpers shared across modules."""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError

__all__ = ["as_chw_uint8", "as_rgb", "check_points_2d"]


def as_chw_uint8(img: np.ndarray) -> np.ndarray:
    """Validate a (C, H, W) uint8 image array."""
    img = np.asarray(img)
    if img.ndim != 3:
        raise PreconditionError(f"expected a (C, H, W) image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise PreconditionError(f"expected uint8 pixels, got {img.dtype}")
    return img


def as_rgb(img: np.ndarray) -> np.ndarray:
    """Adapt a (C, H, W) uint8 image to 3 display channels.

    3 channels pass through, 1 channel is replicated, anything else is
    collapsed to its per-pixel mean (display only; never fed to a net).
    """
    img = as_chw_uint8(img)
    if img.shape[0] == 3:
        return img
    if img.shape[0] == 1:
        return np.repeat(img, 3, axis=0)
    mean = img.astype(np.float32).mean(axis=0)
    return np.repeat(np.rint(mean).astype(np.uint8)[None], 3, axis=0)


def check_points_2d(points: np.ndarray, name: str = "points") -> np.ndarray:
    """Validate a finite (n, 2) float array."""
    pts = np.asarray(points, np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PreconditionError(f"{name} must be (n, 2), got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise PreconditionError(f"{name} contains non-finite values")
    return pts
