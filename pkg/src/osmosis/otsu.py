"""Sliding-window Otsu classification on quantized intensities."""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = ["LEVELS", "local_otsu_dark_mask", "otsu_bin", "quantize"]

LEVELS = 256


def quantize(x: np.ndarray, levels: int = LEVELS) -> np.ndarray:
    """Map ``x`` linearly onto integer bins ``0 .. levels - 1``."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros(x.shape, np.int64)
    return np.rint((x - lo) / (hi - lo) * (levels - 1)).astype(np.int64)


@njit(cache=True, nogil=True)
def _best_split(hist, total, weighted_sum):
    # returns the last bin of the dark class, or -1 when no split separates anything
    best = 0.0
    best_k = -1
    w0 = 0.0
    s0 = 0.0
    for k in range(hist.shape[0] - 1):
        w0 += hist[k]
        s0 += k * hist[k]
        if w0 == 0:
            continue
        w1 = total - w0
        if w1 == 0:
            break
        diff = s0 / w0 - (weighted_sum - s0) / w1
        score = w0 * w1 * diff * diff
        if score > best:
            best = score
            best_k = k
    return best_k


def otsu_bin(bins: np.ndarray, levels: int = LEVELS) -> int:
    """Global Otsu split of integer bins: last bin of the dark class, ``-1`` if degenerate."""
    hist = np.bincount(np.ravel(bins), minlength=levels).astype(np.float64)
    return int(_best_split(hist, hist.sum(), float((np.arange(levels) * hist).sum())))


@njit(parallel=True, cache=True, nogil=True)
def _local_dark(q, radius, levels):
    height, width = q.shape
    dark = np.zeros((height, width), np.bool_)
    for y in prange(height):
        y0 = max(0, y - radius)
        y1 = min(height, y + radius + 1)
        hist = np.zeros(levels)
        # window for x = 0
        for yy in range(y0, y1):
            for xx in range(0, min(width, radius + 1)):
                hist[q[yy, xx]] += 1
        for x in range(width):
            if x > 0:
                add = x + radius
                drop = x - radius - 1
                if add < width:
                    for yy in range(y0, y1):
                        hist[q[yy, add]] += 1
                if drop >= 0:
                    for yy in range(y0, y1):
                        hist[q[yy, drop]] -= 1
            total = 0.0
            wsum = 0.0
            for k in range(levels):
                total += hist[k]
                wsum += k * hist[k]
            k = _best_split(hist, total, wsum)
            dark[y, x] = k >= 0 and q[y, x] <= k
    return dark


def local_otsu_dark_mask(x: np.ndarray, window: int, levels: int = LEVELS) -> np.ndarray:
    """Pixels at or below the Otsu threshold of their ``window x window`` neighborhood.

    The window is clipped at the image border. Windows holding a single
    intensity have no threshold and classify their center as bright.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd size, got {window}")
    return _local_dark(quantize(x, levels), window // 2, levels)
