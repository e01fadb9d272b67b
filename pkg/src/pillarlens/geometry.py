"""Aspheric microlens profiles: sag, height maps, scaling and height errors.

All lengths are in micrometres and ``k4`` is in um^-3.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

# Slack for evaluating the rim sample of a lens exactly at x == R.
_RIM_RTOL = 1e-12


class LensDomainError(ValueError):
    """Raised when a profile is evaluated outside its real domain."""


class GridTooSmallError(ValueError):
    """Raised when a sampling grid cannot hold the requested object."""


@dataclass(frozen=True)
class AsphericLens:
    """Rotationally symmetric even asphere truncated at its base radius.

    Parameters
    ----------
    R : float
        Base radius of the lens (um). Also the apex radius of curvature.
    k : float
        Conic coefficient. Only ``k <= 0`` is supported.
    k4 : float
        Quartic coefficient (um^-3), non-negative.
    n_lens : float
        Refractive index of the lens material.
    offset_x, offset_y : float
        Lateral offset of the lens axis from the emitter axis (um).
    """

    R: float
    k: float = 0.0
    k4: float = 0.0
    n_lens: float = 1.45
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.R) or self.R <= 0:
            raise ValueError(f"lens radius R must be > 0, got {self.R}")
        if not self.n_lens > 1:
            raise ValueError(f"n_lens must be > 1, got {self.n_lens}")
        if self.k > 0:
            raise ValueError(f"oblate conics (k > 0) are not supported, got k={self.k}")
        if not self.k4 >= 0:
            raise ValueError(f"k4 must be >= 0, got {self.k4}")
        if self.offset >= self.R:
            warnings.warn(
                f"lens offset {self.offset:.3g} um does not leave the emitter axis "
                f"under the lens (R={self.R:.3g} um)",
                stacklevel=3,
            )

    @property
    def offset(self) -> float:
        return float(np.hypot(self.offset_x, self.offset_y))

    def replace(self, **changes) -> "AsphericLens":
        return dataclasses.replace(self, **changes)


def sag(lens: AsphericLens, x):
    """Surface depth below the apex at radial coordinate ``x``.

    Works on scalars and arrays. Raises :class:`LensDomainError` when any
    ``x`` lies outside ``[0, R]``.
    """
    x = np.asarray(x, dtype=float)
    R = lens.R
    if np.any(x < 0) or np.any(x > R * (1 + _RIM_RTOL)):
        raise LensDomainError(f"sag evaluated outside [0, R={R}]")
    x = np.minimum(x, R)
    arg = 1.0 - (1.0 + lens.k) * x**2 / R**2
    if np.any(arg < 0):
        raise LensDomainError("negative square-root argument in conic term")
    z = (x**2 / R) / (1.0 + np.sqrt(arg)) + lens.k4 * x**4
    return float(z) if z.ndim == 0 else z


def lens_height(lens: AsphericLens) -> float:
    """Total height of the lens: the sag at its rim."""
    return sag(lens, lens.R)


@dataclass(frozen=True, eq=False)
class HeightMap:
    """Sampled lens thickness ``h(x, y)`` above the substrate plane.

    Samples sit at ``(i - N/2) * pitch`` along each axis, so the emitter
    axis is the sample at index ``N // 2``.
    """

    h: np.ndarray
    pitch: float
    H: float

    @property
    def n_samples(self) -> int:
        return self.h.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return grid_coords(self.n_samples, self.pitch)


def grid_coords(n_samples: int, pitch: float) -> np.ndarray:
    return (np.arange(n_samples) - n_samples // 2) * pitch


def height_map(lens: AsphericLens, pitch: float, n_samples: int) -> HeightMap:
    """Sample the lens thickness ``H - sag(r)`` on a square grid.

    ``r`` is measured from the (possibly offset) lens axis and the
    thickness is zero outside the base radius.
    """
    if pitch <= 0:
        raise ValueError("pitch must be > 0")
    if n_samples % 2:
        raise ValueError("n_samples must be even")
    needed = 2 * lens.R + 2 * max(abs(lens.offset_x), abs(lens.offset_y))
    if n_samples * pitch < needed:
        raise GridTooSmallError(
            f"grid extent {n_samples * pitch:.4g} um < required {needed:.4g} um"
        )
    c = grid_coords(n_samples, pitch)
    xx, yy = np.meshgrid(c - lens.offset_x, c - lens.offset_y, indexing="xy")
    r = np.hypot(xx, yy)
    H = lens_height(lens)
    inside = r <= lens.R
    h = np.zeros_like(r)
    h[inside] = H - sag(lens, r[inside])
    # sag round-off can leave -1e-16 at the rim
    np.maximum(h, 0.0, out=h)
    h.setflags(write=False)
    return HeightMap(h=h, pitch=float(pitch), H=H)


def scale_lens(lens: AsphericLens, S: float) -> AsphericLens:
    """Magnify a lens by ``S``; the quartic term scales as ``S**-3``."""
    if not S > 0:
        raise ValueError(f"scale factor must be > 0, got {S}")
    return lens.replace(
        R=lens.R * S,
        k4=lens.k4 / S**3,
        offset_x=lens.offset_x * S,
        offset_y=lens.offset_y * S,
    )


def k4_from_height_error(lens: AsphericLens, dH: float) -> AsphericLens:
    """Lens whose height differs by ``dH``, absorbed entirely by ``k4``."""
    if lens.k != 0:
        raise ValueError("height-error parametrisation assumes k == 0")
    k4 = lens.k4 + dH / lens.R**4
    # within rounding of zero means "remove the full quartic contribution"
    if abs(k4) <= 1e-12 * max(lens.k4, 1e-300):
        k4 = 0.0
    if k4 < 0:
        raise LensDomainError(f"height error {dH} um exceeds the quartic height contribution")
    return lens.replace(k4=k4)


def height_error_percent(lens: AsphericLens, dH: float) -> float:
    return 100.0 * dH / lens_height(lens)
