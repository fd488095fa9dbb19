"""Grid containers: images, staggered drift fields, face masks, region labels.

Arrays follow numpy image convention, ``(row, col)`` = ``(j, i)``. A drift
field stores its horizontal component ``d1`` on the vertical cell faces
``(i + 1/2, j)`` as an array of shape ``(H, W - 1)`` and its vertical
component ``d2`` on the horizontal faces ``(i, j + 1/2)`` as ``(H - 1, W)``.
Faces on the domain boundary are not stored; the flux through them is zero.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Any, NamedTuple

import numpy as np

from .errors import InvalidImageError, PartitionError, ShapeMismatchError

__all__ = [
    "DriftField",
    "FaceMask",
    "Image",
    "Rect",
    "RegionPartition",
    "default_epsilon",
    "ensure_positive",
    "mean",
]

EXTERIOR, INTERIOR, OVERLAP = 1, 2, 3


def _frozen(a: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


class Rect(NamedTuple):
    """Pixel rectangle ``[x, x + width) x [y, y + height)``."""

    x: int
    y: int
    width: int
    height: int

    @property
    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def within(self, width: int, height: int) -> bool:
        return (
            self.width > 0
            and self.height > 0
            and self.x >= 0
            and self.y >= 0
            and self.x + self.width <= width
            and self.y + self.height <= height
        )


@dataclass(frozen=True, eq=False)
class Image:
    """Multi-channel scalar image with samples stored as ``(C, H, W)`` float64.

    ``bit_depth`` remembers the integer depth of the source raster (``None``
    for float data); it selects the default positivity floor and the range
    used when saving. ``meta`` holds free-form flags set by the pipelines.
    """

    data: np.ndarray
    h: float = 1.0
    bit_depth: int | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim == 2:
            a = a[np.newaxis]
        if a.ndim != 3 or min(a.shape) < 1:
            raise InvalidImageError(f"image must be (C, H, W) with positive extents, got {a.shape}")
        if not self.h > 0:
            raise InvalidImageError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "data", _frozen(a))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    @classmethod
    def from_array(cls, a: np.ndarray, **kwargs) -> Image:
        """Build from ``(H, W)``, ``(H, W, C)`` (channel-last) or ``(C, H, W)`` arrays.

        Three-dimensional input is treated as channel-last when its last axis
        has at most 4 entries, matching how raster readers return color data.
        """
        a = np.asarray(a)
        if a.ndim == 3 and a.shape[-1] <= 4 and a.shape[0] > 4:
            a = np.moveaxis(a, -1, 0)
        return cls(a, **kwargs)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def channel(self, c: int) -> np.ndarray:
        if not 0 <= c < self.channels:
            raise IndexError(f"channel {c} out of range for {self.channels}-channel image")
        return self.data[c]

    def with_data(self, data: np.ndarray, **changes) -> Image:
        return replace(self, data=data, **changes)

    def to_array(self) -> np.ndarray:
        """Channel-last copy, ``(H, W)`` for single-channel images."""
        if self.channels == 1:
            return self.data[0].copy()
        return np.moveaxis(self.data, 0, -1).copy()


def default_epsilon(img: Image) -> float:
    """Positivity floor: one count for integer rasters, 1/255 for float data."""
    return 1.0 if img.bit_depth else 1.0 / 255.0


def ensure_positive(img: Image, eps: float | None = None) -> Image:
    """Clamp all samples from below at ``eps`` (see :func:`default_epsilon`)."""
    if eps is None:
        eps = default_epsilon(img)
    if not eps > 0:
        raise InvalidImageError(f"positivity floor must be > 0, got {eps}")
    bad = ~np.isfinite(img.data)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InvalidImageError(f"non-finite sample at (channel, row, col) = {idx}")
    if img.data.min() >= eps:
        return img
    return img.with_data(np.maximum(img.data, eps))


def mean(img: Image, channel: int = 0) -> float:
    """Average gray value of one channel."""
    return float(img.channel(channel).mean())


@dataclass(frozen=True, eq=False)
class DriftField:
    """Staggered drift ``d = (d1, d2)`` on interior cell faces."""

    d1: np.ndarray
    d2: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        d1 = np.asarray(self.d1, dtype=np.float64)
        d2 = np.asarray(self.d2, dtype=np.float64)
        if d1.ndim != 2 or d2.ndim != 2:
            raise ShapeMismatchError("drift components must be 2-D")
        height, width = d1.shape[0], d1.shape[1] + 1
        if d2.shape != (height - 1, width):
            raise ShapeMismatchError(
                f"d1 {d1.shape} and d2 {d2.shape} do not describe the same grid"
            )
        if not (np.isfinite(d1).all() and np.isfinite(d2).all()):
            raise InvalidImageError("drift field has non-finite components")
        if not self.h > 0:
            raise InvalidImageError(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "d1", _frozen(d1))
        object.__setattr__(self, "d2", _frozen(d2))

    @classmethod
    def zeros(cls, height: int, width: int, h: float = 1.0) -> DriftField:
        return cls(np.zeros((height, width - 1)), np.zeros((height - 1, width)), h)

    @property
    def shape(self) -> tuple[int, int]:
        """Pixel grid shape ``(H, W)``."""
        return self.d1.shape[0], self.d1.shape[1] + 1

    def scaled(self, factor: float) -> DriftField:
        return DriftField(self.d1 * factor, self.d2 * factor, self.h)


@dataclass(frozen=True, eq=False)
class FaceMask:
    """Per-face keep flags aligned with :class:`DriftField` components."""

    keep1: np.ndarray
    keep2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "keep1", _frozen(self.keep1, bool))
        object.__setattr__(self, "keep2", _frozen(self.keep2, bool))

    @classmethod
    def all_true(cls, height: int, width: int) -> FaceMask:
        return cls(np.ones((height, width - 1), bool), np.ones((height - 1, width), bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.keep1.shape[0], self.keep1.shape[1] + 1


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Pixel labels: 1 exterior, 2 interior, 3 overlap frame.

    Construction validates that every pixel is labeled and that no exterior
    pixel is 4-adjacent to an interior pixel.
    """

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise PartitionError(f"label raster must be 2-D, got shape {lab.shape}")
        lab = _frozen(lab, np.int8)
        if not np.isin(lab, (EXTERIOR, INTERIOR, OVERLAP)).all():
            bad = tuple(int(i) for i in np.argwhere(~np.isin(lab, (1, 2, 3)))[0])
            raise PartitionError(f"pixel {bad} has a label outside {{1, 2, 3}}")
        for axis in (0, 1):
            a = np.take(lab, np.arange(lab.shape[axis] - 1), axis=axis)
            b = np.take(lab, np.arange(1, lab.shape[axis]), axis=axis)
            touching = (a.astype(int) * b) == EXTERIOR * INTERIOR
            if touching.any():
                j, i = np.argwhere(touching)[0]
                raise PartitionError(
                    f"exterior and interior regions touch at row {j}, col {i} (axis {axis})"
                )
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_rect(cls, width: int, height: int, interior: Rect, band: int = 2) -> RegionPartition:
        """Interior rectangle surrounded by an overlap frame ``band`` pixels wide.

        The frame lies outside ``interior`` and is clipped to the canvas.
        """
        if band < 1:
            raise PartitionError(f"overlap band must be at least 1 pixel, got {band}")
        if not interior.within(width, height):
            raise PartitionError(f"interior rectangle {tuple(interior)} outside {width}x{height} canvas")
        labels = np.full((height, width), EXTERIOR, np.int8)
        x0, y0 = max(interior.x - band, 0), max(interior.y - band, 0)
        x1 = min(interior.x + interior.width + band, width)
        y1 = min(interior.y + interior.height + band, height)
        labels[y0:y1, x0:x1] = OVERLAP
        labels[interior.slices] = INTERIOR
        return cls(labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def mask(self, label: int) -> np.ndarray:
        return self.labels == label
