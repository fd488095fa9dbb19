"""File formats: rasters with scaling sidecars, tiling and partition documents, metrics CSV.

Rasters go through OpenCV. Supported are 8/16-bit grayscale and RGB in PNG
and binary PGM/PPM, plus 8/16-bit grayscale TIFF for reading only.

Float images are written by linear scaling into the integer range. The
scale is stored in a JSON sidecar next to the raster (``<path>.json``) so
that :func:`load_image` can recover physical values.
"""

from __future__ import annotations

import csv
import json
import time
from collections.abc import Iterable, Sequence
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from threading import Lock

import cv2
import numpy as np

from .discretization import validate_tiling
from .errors import PartitionError, TilingError, UnsupportedFormatError
from .grid import Image, Rect, RegionPartition

__all__ = [
    "METRICS_HEADER",
    "MetricsRecorder",
    "MetricsRow",
    "TilingSpec",
    "load_image",
    "load_partition",
    "load_tiling",
    "read_metrics",
    "save_image",
    "save_tiling",
    "sidecar_path",
    "write_metrics",
]

READ_EXTS = {".png", ".pgm", ".ppm", ".pnm", ".tif", ".tiff"}
WRITE_EXTS = {".png", ".pgm", ".ppm", ".pnm"}
DEPTHS = {np.dtype(np.uint8): 8, np.dtype(np.uint16): 16}


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _read_raster(path: Path) -> np.ndarray:
    ext = path.suffix.lower()
    if ext not in READ_EXTS:
        raise UnsupportedFormatError(f"unsupported image format {ext!r} for {path}")
    if not path.is_file():
        raise FileNotFoundError(path)
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise UnsupportedFormatError(f"could not decode {path}")
    if a.dtype not in DEPTHS:
        raise UnsupportedFormatError(f"unsupported bit depth: {path} holds {a.dtype} samples")
    if a.ndim == 3:
        if ext in (".tif", ".tiff"):
            raise UnsupportedFormatError(f"only grayscale TIFF is supported, {path} has {a.shape[2]} channels")
        if a.shape[2] != 3:
            raise UnsupportedFormatError(f"unsupported channel count {a.shape[2]} in {path}")
        a = a[:, :, ::-1]
    return a


def load_image(path: str | Path, *, physical: bool = True, h: float = 1.0) -> Image:
    """Read a raster into an :class:`Image`.

    With ``physical=True`` and a sidecar present, stored integers are divided
    by the recorded scale and the result is returned as float data.
    """
    path = Path(path)
    a = _read_raster(path)
    depth = DEPTHS[a.dtype]
    data = a.astype(np.float64)
    img = Image(data if data.ndim == 2 else np.moveaxis(data, -1, 0), h=h, bit_depth=depth)
    side = sidecar_path(path)
    if physical and side.is_file():
        info = json.loads(side.read_text())
        scale = float(info.get("scale", 1.0))
        if scale != 1.0:
            return Image(img.data / scale, h=h, bit_depth=None, meta=info.get("meta", {}))
    return img


def save_image(img: Image, path: str | Path, bit_depth: int | None = None) -> Path | None:
    """Write ``img``; returns the sidecar path when one was written.

    Images carrying a ``bit_depth`` are rounded and clamped to that range.
    Float images (``bit_depth=None``) are scaled so their maximum maps to the
    top of the integer range (16-bit unless ``bit_depth`` says otherwise).
    A sidecar records the scale whenever the stored integers differ from the
    samples.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in WRITE_EXTS:
        raise UnsupportedFormatError(f"cannot write {ext!r}; supported: {sorted(WRITE_EXTS)}")
    depth = bit_depth or img.bit_depth or 16
    if depth not in (8, 16):
        raise UnsupportedFormatError(f"unsupported bit depth {depth}")
    if img.channels not in (1, 3):
        raise UnsupportedFormatError(f"cannot write {img.channels}-channel image")
    if ext == ".pgm" and img.channels != 1:
        raise UnsupportedFormatError("PGM holds grayscale only; use .ppm or .png")
    if ext == ".ppm" and img.channels != 3:
        raise UnsupportedFormatError("PPM holds RGB only; use .pgm or .png")
    top = 2**depth - 1
    data = img.data
    if img.bit_depth is not None:
        scale = 1.0
    else:
        peak = float(data.max())
        scale = top / peak if peak > 0 else 1.0
    scaled = data * scale
    stored = np.clip(np.rint(scaled), 0, top)
    a = stored.astype(np.uint8 if depth == 8 else np.uint16)
    a = a[0] if img.channels == 1 else np.moveaxis(a, 0, -1)[:, :, ::-1]
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(a)):
        raise OSError(f"failed to write {path}")
    side = sidecar_path(path)
    if scale == 1.0 and np.array_equal(stored, data):
        if side.exists():
            side.unlink()
        return None
    info = {
        "scale": scale,
        "bit_depth": depth,
        "clipped": int(((scaled < 0) | (scaled > top)).sum()),
        "meta": {k: v for k, v in img.meta.items() if isinstance(v, (int, float, str, bool, list))},
    }
    side.write_text(json.dumps(info, indent=2) + "\n")
    return side


def _rect(obj) -> Rect:
    if isinstance(obj, dict):
        return Rect(int(obj["x"]), int(obj["y"]), int(obj["width"]), int(obj["height"]))
    x, y, w, h = obj
    return Rect(int(x), int(y), int(w), int(h))


@dataclass(frozen=True)
class TilingSpec:
    """Canvas size and the tile rectangles covering it exactly once."""

    width: int
    height: int
    tiles: tuple[Rect, ...]

    def __post_init__(self):
        object.__setattr__(self, "tiles", tuple(Rect(*t) for t in self.tiles))
        validate_tiling(self.tiles, self.width, self.height)

    @classmethod
    def grid(cls, width: int, height: int, nx: int, ny: int) -> TilingSpec:
        """Regular ``nx x ny`` tiling; the last row/column absorbs remainders."""
        xs = [width * k // nx for k in range(nx + 1)]
        ys = [height * k // ny for k in range(ny + 1)]
        tiles = [
            Rect(xs[i], ys[j], xs[i + 1] - xs[i], ys[j + 1] - ys[j])
            for j in range(ny)
            for i in range(nx)
        ]
        return cls(width, height, tuple(tiles))


def load_tiling(path: str | Path) -> TilingSpec:
    """Read ``{"width": W, "height": H, "tiles": [[x, y, w, h], ...]}``.

    Tiles may also be objects with ``x, y, width, height`` keys.
    """
    doc = json.loads(Path(path).read_text())
    try:
        return TilingSpec(int(doc["width"]), int(doc["height"]), tuple(_rect(t) for t in doc["tiles"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TilingError):
            raise
        raise TilingError(f"malformed tiling document {path}: {exc}") from exc


def save_tiling(spec: TilingSpec, path: str | Path) -> None:
    doc = {"width": spec.width, "height": spec.height, "tiles": [list(t) for t in spec.tiles]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_partition(path: str | Path) -> RegionPartition:
    """Read a region partition.

    Accepted are a label raster (values 1, 2, 3) or a JSON document, either
    ``{"width", "height", "interior": [x, y, w, h], "band": 2}`` or
    ``{"labels": "<raster path relative to the document>"}``.
    """
    path = Path(path)
    if path.suffix.lower() != ".json":
        return RegionPartition(_read_raster(path))
    doc = json.loads(path.read_text())
    if "labels" in doc:
        return RegionPartition(_read_raster(path.parent / doc["labels"]))
    try:
        return RegionPartition.from_rect(
            int(doc["width"]), int(doc["height"]), _rect(doc["interior"]), int(doc.get("band", 2))
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, PartitionError):
            raise
        raise PartitionError(f"malformed partition document {path}: {exc}") from exc


@dataclass(frozen=True)
class MetricsRow:
    step: int
    channel: int
    mean: float
    sup_change: float
    wall_ms: float


METRICS_HEADER = tuple(f.name for f in fields(MetricsRow))


def _check_order(rows: Sequence[MetricsRow]) -> None:
    last: dict[int, int] = {}
    for r in rows:
        if r.step <= last.get(r.channel, -1):
            raise ValueError(f"metrics steps not increasing for channel {r.channel} at step {r.step}")
        last[r.channel] = r.step


def write_metrics(rows: Iterable[MetricsRow], path: str | Path) -> None:
    rows = list(rows)
    _check_order(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in rows:
            w.writerow([r.step, r.channel, repr(r.mean), repr(r.sup_change), repr(r.wall_ms)])


def read_metrics(path: str | Path) -> list[MetricsRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header}")
        rows = [MetricsRow(int(s), int(c), float(m), float(x), float(t)) for s, c, m, x, t in reader]
    _check_order(rows)
    return rows


class MetricsRecorder:
    """Channel observer that collects :class:`MetricsRow` entries with wall times."""

    def __init__(self):
        self.rows: list[MetricsRow] = []
        self._lock = Lock()
        self._last: dict[int, float] = {}

    def start(self, channels: int = 1) -> None:
        now = time.perf_counter()
        self._last = {c: now for c in range(channels)}

    def __call__(self, channel: int, step: int, mean: float, sup_change: float) -> None:
        now = time.perf_counter()
        with self._lock:
            wall = (now - self._last.get(channel, now)) * 1e3
            self._last[channel] = now
            self.rows.append(MetricsRow(step, channel, mean, sup_change, wall))

    def sorted_rows(self) -> list[MetricsRow]:
        return sorted(self.rows, key=lambda r: (r.channel, r.step))

    def as_tuples(self) -> list[tuple]:
        return [astuple(r) for r in self.sorted_rows()]
