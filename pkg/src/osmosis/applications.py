"""Cultural-heritage imaging pipelines built on the osmosis solvers.

* :func:`light_balance` removes per-tile illumination differences in a
  mosaic by evolving it under its own log-gradient drift with the drift
  switched off on the seams between tiles.
* :func:`tqr_calibrate` converts a radiometric frame to reflectance with an
  in-scene target of known reflectance.
* :func:`false_color` stacks IR, visible red and visible green into an
  IR-R-G pseudo-color image.
* :func:`local_otsu_preprocess` and :func:`fuse_multimodal` transfer text
  revealed in a second modality onto the visible image.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Literal, Optional

import numpy as np

from .discretization import canonical_drift, mask_drift, seams_to_face_mask
from .errors import CalibrationError, InvalidImageError, PartitionError, ShapeMismatchError
from .grid import EXTERIOR, INTERIOR, OVERLAP, Image, Rect, RegionPartition, ensure_positive
from .otsu import local_otsu_dark_mask
from .solvers import SolverConfig, evolve

__all__ = [
    "ChannelObserver",
    "FusionSpec",
    "TqrCalibration",
    "composite_reference",
    "false_color",
    "fuse_multimodal",
    "light_balance",
    "local_otsu_preprocess",
    "tqr_calibrate",
]

#: ``observer(channel, step, mean, sup_change)``
ChannelObserver = Callable[[int, int, float, float], Optional[bool]]


def _map_channels(fn: Callable[[int], np.ndarray], n: int, workers: int = 1) -> np.ndarray:
    if workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=min(workers, n)) as pool:
            return np.stack(list(pool.map(fn, range(n))))
    return np.stack([fn(c) for c in range(n)])


def _bind(observer: ChannelObserver | None, c: int):
    return None if observer is None else partial(observer, c)


def light_balance(
    mosaic: Image,
    tiles: Sequence[Rect],
    cfg: SolverConfig = SolverConfig(),
    *,
    eps: float | None = None,
    observer: ChannelObserver | None = None,
    workers: int = 1,
) -> Image:
    """Balance illumination across the tiles of a registered mosaic.

    Each channel evolves from itself under ``grad(ln f)`` with the drift
    zeroed on every face between two tiles, so only diffusion couples
    neighboring tiles. The channel means are preserved. Values are not
    clamped; clamping to the raster range happens in :func:`osmosis.io.save_image`.
    """
    f = ensure_positive(mosaic, eps)
    mask = seams_to_face_mask(tiles, f.width, f.height)

    def run(c: int) -> np.ndarray:
        fc = f.channel(c)
        d = mask_drift(canonical_drift(fc, h=f.h), mask)
        return evolve(fc, d, cfg, _bind(observer, c))

    return f.with_data(_map_channels(run, f.channels, workers))


@dataclass(frozen=True)
class TqrCalibration:
    """In-scene reference target: its pixel rectangle and known reflectance."""

    region: Rect
    r_ref: float

    def __post_init__(self):
        object.__setattr__(self, "region", Rect(*self.region))
        if not 0 < self.r_ref <= 1:
            raise CalibrationError(f"target reflectance must lie in (0, 1], got {self.r_ref}")


def tqr_calibrate(raw: Image, cal: TqrCalibration) -> Image:
    """Reflectance ``r = raw * r_ref / u_ref`` with ``u_ref`` the target's mean.

    Values above 1 are kept and flagged with ``meta["exceeds_unity"]``.
    """
    if not cal.region.within(raw.width, raw.height):
        raise CalibrationError(f"target region {tuple(cal.region)} outside {raw.width}x{raw.height} frame")
    rows, cols = cal.region.slices
    u_ref = raw.data[:, rows, cols].mean(axis=(1, 2))
    if not (u_ref > 0).all():
        raise CalibrationError(f"target mean must be positive, got {u_ref.tolist()}")
    r = raw.data * cal.r_ref / u_ref[:, None, None]
    meta = {**raw.meta, "u_ref": u_ref.tolist(), "r_ref": cal.r_ref, "exceeds_unity": bool((r > 1).any())}
    return Image(r, h=raw.h, bit_depth=None, meta=meta)


def false_color(ir: Image, vis_r: Image, vis_g: Image) -> Image:
    """IR-R-G composite: output (R, G, B) channels are (ir, vis_r, vis_g)."""
    for name, img in (("ir", ir), ("vis_r", vis_r), ("vis_g", vis_g)):
        if img.channels != 1:
            raise ShapeMismatchError(f"{name} must be single-channel, got {img.channels} channels")
    if not ir.shape == vis_r.shape == vis_g.shape:
        raise ShapeMismatchError(f"band shapes differ: {ir.shape}, {vis_r.shape}, {vis_g.shape}")
    depths = {ir.bit_depth, vis_r.bit_depth, vis_g.bit_depth}
    data = np.concatenate([ir.data, vis_r.data, vis_g.data])
    return Image(data, h=ir.h, bit_depth=depths.pop() if len(depths) == 1 else None)


@dataclass(frozen=True)
class FusionSpec:
    """Region layout and text-segmentation settings for multi-modal fusion.

    ``fill`` controls what replaces non-text pixels of the second modality:
    ``"background_mean"`` uses the mean over all non-text pixels of the
    channel, ``"keep"`` leaves them untouched.
    """

    partition: RegionPartition
    window: int = 31
    fill: Literal["background_mean", "keep"] = "background_mean"

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise PartitionError(f"Otsu window must be odd and at least 3, got {self.window}")
        if self.fill not in ("background_mean", "keep"):
            raise PartitionError(f"unknown fill policy {self.fill!r}")


def local_otsu_preprocess(v2: Image, spec: FusionSpec, eps: float | None = None) -> Image:
    """Keep locally dark (text) pixels, flatten everything else to its mean."""

    def run(c: int) -> np.ndarray:
        x = v2.channel(c)
        text = local_otsu_dark_mask(x, spec.window)
        if spec.fill == "keep" or text.all():
            return x.copy()
        return np.where(text, x, x[~text].mean())

    out = v2.with_data(_map_channels(run, v2.channels))
    return ensure_positive(out, eps)


def composite_reference(v1: Image, v2: Image, partition: RegionPartition) -> Image:
    """``v1`` on the exterior, ``v2`` on the interior, their average on the overlap frame."""
    if v1.data.shape != v2.data.shape:
        raise ShapeMismatchError(f"modalities differ in shape: {v1.data.shape} vs {v2.data.shape}")
    if partition.shape != v1.shape:
        raise PartitionError(f"partition {partition.shape} does not match image {v1.shape}")
    lab = partition.labels
    v = np.where(lab == EXTERIOR, v1.data, 0.0)
    v = np.where(lab == INTERIOR, v2.data, v)
    v = np.where(lab == OVERLAP, 0.5 * (v1.data + v2.data), v)
    return v1.with_data(v)


def fuse_multimodal(
    v1: Image,
    v2pre: Image,
    spec: FusionSpec,
    cfg: SolverConfig = SolverConfig(),
    *,
    observer: ChannelObserver | None = None,
    workers: int = 1,
) -> Image:
    """Evolve the visible image ``v1`` towards the composite reference.

    The steady state is the composite rescaled to the channel means of
    ``v1``, so the text of ``v2pre`` appears inside the interior region.
    """
    for name, img in (("v1", v1), ("v2pre", v2pre)):
        if not (img.data > 0).all():
            raise InvalidImageError(f"{name} must be strictly positive; apply ensure_positive first")
    v = composite_reference(v1, v2pre, spec.partition)

    def run(c: int) -> np.ndarray:
        d = canonical_drift(v.channel(c), h=v1.h)
        return evolve(v1.channel(c), d, cfg, _bind(observer, c))

    return v1.with_data(_map_channels(run, v1.channels, workers))
