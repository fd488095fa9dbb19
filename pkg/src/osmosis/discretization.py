"""Space discretization of the osmosis operator ``A u = lap(u) - div(d u)``.

The flux through face ``(i + 1/2, j)`` is

    F = (u[i+1] - u[i]) / h**2 - d1 * (u[i+1] + u[i]) / (2 h)

and ``(A u)[i] = F[i + 1/2] - F[i - 1/2]`` summed over both axes, with zero
flux through the domain boundary. ``A`` therefore has zero column sums, and
the canonical drift of a positive image ``v`` makes every face flux of ``v``
vanish, so ``A v = 0`` holds up to rounding.

The directional parts ``A1`` (horizontal) and ``A2`` (vertical) each carry
only their own axis's stencil legs and diagonal terms, so ``A1 + A2 = A``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InvalidImageError, ShapeMismatchError, TilingError
from .grid import DriftField, FaceMask, Image, Rect

__all__ = [
    "DirectionalSystem",
    "apply_operator",
    "assemble_directional",
    "canonical_drift",
    "face_fluxes",
    "mask_drift",
    "seams_to_face_mask",
    "validate_tiling",
]

Axis = Literal["horizontal", "vertical"]
AXES: tuple[Axis, Axis] = ("horizontal", "vertical")


def canonical_drift(v: Image | np.ndarray, channel: int = 0, h: float | None = None) -> DriftField:
    """Discrete ``grad(ln v)`` using face-averaged values.

    ``d1 = (2/h) (v[i+1] - v[i]) / (v[i+1] + v[i])`` and likewise for ``d2``.
    """
    if isinstance(v, Image):
        h = v.h if h is None else h
        v = v.channel(channel)
    h = 1.0 if h is None else h
    v = np.asarray(v, dtype=np.float64)
    if not (v > 0).all():
        j, i = np.argwhere(~(v > 0))[0]
        raise InvalidImageError(f"drift source must be strictly positive; v[{j}, {i}] = {v[j, i]}")
    d1 = (2.0 / h) * (v[:, 1:] - v[:, :-1]) / (v[:, 1:] + v[:, :-1])
    d2 = (2.0 / h) * (v[1:, :] - v[:-1, :]) / (v[1:, :] + v[:-1, :])
    return DriftField(d1, d2, h)


def mask_drift(d: DriftField, m: FaceMask) -> DriftField:
    """Zero the drift on faces where the mask is false."""
    if m.shape != d.shape:
        raise ShapeMismatchError(f"mask grid {m.shape} does not match drift grid {d.shape}")
    return DriftField(np.where(m.keep1, d.d1, 0.0), np.where(m.keep2, d.d2, 0.0), d.h)


def validate_tiling(tiles: Sequence[Rect], width: int, height: int) -> np.ndarray:
    """Check that ``tiles`` cover the canvas exactly once; return the tile-index raster."""
    owner = np.full((height, width), -1, np.int64)
    for k, t in enumerate(tiles):
        t = Rect(*t)
        if not t.within(width, height):
            raise TilingError(f"tile {k} {tuple(t)} is empty or outside the {width}x{height} canvas")
        taken = owner[t.slices]
        if (taken >= 0).any():
            other = int(taken[taken >= 0][0])
            raise TilingError(f"tile {k} {tuple(t)} overlaps tile {other} {tuple(tiles[other])}")
        owner[t.slices] = k
    if (owner < 0).any():
        j, i = np.argwhere(owner < 0)[0]
        raise TilingError(f"tiling leaves a gap at row {j}, col {i}")
    return owner


def seams_to_face_mask(tiles: Sequence[Rect], width: int, height: int) -> FaceMask:
    """Mask out every face whose two pixels belong to different tiles."""
    owner = validate_tiling(tiles, width, height)
    return FaceMask(owner[:, 1:] == owner[:, :-1], owner[1:, :] == owner[:-1, :])


def face_fluxes(d: DriftField, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scaled face fluxes ``F / h`` for both axes; ``A u`` is their divergence."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != d.shape:
        raise ShapeMismatchError(f"state {u.shape} does not match drift grid {d.shape}")
    h = d.h
    f1 = (u[:, 1:] - u[:, :-1]) / h**2 - d.d1 * (u[:, 1:] + u[:, :-1]) / (2 * h)
    f2 = (u[1:, :] - u[:-1, :]) / h**2 - d.d2 * (u[1:, :] + u[:-1, :]) / (2 * h)
    return f1, f2


def apply_operator(d: DriftField, u: np.ndarray) -> np.ndarray:
    """Matrix-free ``A u`` for one channel."""
    f1, f2 = face_fluxes(d, u)
    out = np.zeros(d.shape)
    out[:, :-1] += f1
    out[:, 1:] -= f1
    out[:-1, :] += f2
    out[1:, :] -= f2
    return out


@dataclass(frozen=True, eq=False)
class DirectionalSystem:
    """Tridiagonal blocks of one directional operator, one row per grid line.

    For ``axis="horizontal"`` line ``j`` is image row ``j``; for ``"vertical"``
    line ``i`` is image column ``i``. ``lower[:, k]`` couples entry ``k + 1``
    to ``k``, ``upper[:, k]`` couples ``k`` to ``k + 1``.
    """

    axis: Axis
    lower: np.ndarray
    main: np.ndarray
    upper: np.ndarray
    h: float

    @property
    def n_lines(self) -> int:
        return self.main.shape[0]

    @property
    def line_length(self) -> int:
        return self.main.shape[1]

    def lines(self, u: np.ndarray) -> np.ndarray:
        """View the image as a ``(n_lines, line_length)`` array for this axis."""
        return u if self.axis == "horizontal" else u.T

    def unlines(self, x: np.ndarray) -> np.ndarray:
        return x if self.axis == "horizontal" else x.T

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``A_n u`` through the stored tridiagonals."""
        x = self.lines(np.asarray(u, dtype=np.float64))
        if x.shape != self.main.shape:
            raise ShapeMismatchError(f"state {u.shape} does not match {self.axis} system")
        y = self.main * x
        y[:, :-1] += self.upper * x[:, 1:]
        y[:, 1:] += self.lower * x[:, :-1]
        return np.ascontiguousarray(self.unlines(y))

    def shifted(self, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Diagonals of ``I - 2 tau A_n``."""
        s = 2.0 * tau
        return -s * self.lower, 1.0 - s * self.main, -s * self.upper

    def column_sums(self) -> np.ndarray:
        """Per-line column sums of ``A_n``; zero up to rounding."""
        sums = self.main.copy()
        sums[:, :-1] += self.lower
        sums[:, 1:] += self.upper
        return sums


def assemble_directional(d: DriftField, axis: Axis) -> DirectionalSystem:
    """Tridiagonal blocks of ``A1`` (``"horizontal"``) or ``A2`` (``"vertical"``).

    Off-diagonals are ``1/h**2 -/+ d/(2h)`` at the connecting face and the
    diagonal is ``-deg/h**2 + (d_minus - d_plus)/(2h)`` with ``deg`` the number
    of in-line neighbors.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}, got {axis!r}")
    h = d.h
    faces = d.d1 if axis == "horizontal" else d.d2.T
    n_lines, n_faces = faces.shape
    upper = 1.0 / h**2 - faces / (2 * h)
    lower = 1.0 / h**2 + faces / (2 * h)
    # vertical lines are transposed views; keep main in the same memory order
    main = np.zeros((n_lines, n_faces + 1)) if axis == "horizontal" else np.zeros((n_faces + 1, n_lines)).T
    # a face feeds -lower into its left pixel's diagonal and -upper into its right one
    main[:, :-1] -= lower
    main[:, 1:] -= upper
    return DirectionalSystem(axis, lower, main, upper, h)
