"""Scalar fields on square grids: sources, lenses, propagation, far fields.

Grid convention: sample ``i`` along either axis sits at ``(i - N/2) * pitch``
relative to the grid origin, matching ``fftshift`` ordering, so the optical
axis is an exact sample.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .geometry import AsphericLens, GridTooSmallError, HeightMap, grid_coords, height_map


class GridMismatchError(ValueError):
    """Raised when two grids that must coincide do not."""


@dataclass(frozen=True, eq=False)
class ComplexFieldGrid:
    """Complex scalar field sampled on an ``N x N`` grid.

    The sample array is made read-only on construction; operations return
    new grids.
    """

    samples: np.ndarray
    pitch: float
    wavelength: float
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError(f"field must be square, got shape {s.shape}")
        n = s.shape[0]
        if n % 2 or n < 64:
            raise ValueError(f"grid size must be even and >= 64, got {n}")
        if not self.pitch > 0 or not self.wavelength > 0:
            raise ValueError("pitch and wavelength must be > 0")
        if self.pitch > self.wavelength / 2:
            raise ValueError(
                f"pitch {self.pitch} um exceeds the Nyquist limit "
                f"wavelength/2 = {self.wavelength / 2} um"
            )
        if s is self.samples or s.flags.writeable:
            s = s.copy()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return grid_coords(self.n, self.pitch)

    def mesh(self):
        """Physical ``(X, Y)`` sample coordinates including the origin."""
        c = self.coords
        return np.meshgrid(c + self.origin[0], c + self.origin[1], indexing="xy")

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def power(self) -> float:
        return float(self.intensity.sum() * self.pitch**2)

    def with_samples(self, samples) -> "ComplexFieldGrid":
        return ComplexFieldGrid(samples, self.pitch, self.wavelength, self.origin)

    def same_geometry(self, other: "ComplexFieldGrid") -> bool:
        return (
            self.n == other.n
            and self.pitch == other.pitch
            and self.wavelength == other.wavelength
            and self.origin == other.origin
        )


@dataclass(frozen=True)
class SourceSpec:
    """Gaussian stand-in for the bare-pillar fundamental mode.

    ``mfd_w`` is the 1/e^2 intensity diameter at the pillar top.
    ``pillar_d`` is carried as metadata only.
    """

    mfd_w: float = 1.5
    wavelength: float = 1.3
    pillar_d: float = 1.9

    def __post_init__(self):
        if not self.mfd_w > 0 or not self.wavelength > 0:
            raise ValueError("mfd_w and wavelength must be > 0")


@dataclass(frozen=True, eq=False)
class FarFieldMap:
    """Far-field intensity over direction cosines ``(NAx, NAy)``.

    ``intensity`` is square with odd size ``M``; sample ``j`` sits at
    ``(j - M//2) * dNA``. Normalisation follows Parseval:
    ``sum(intensity) * dNA**2`` is the propagating power.
    """

    intensity: np.ndarray
    dNA: float
    wavelength: float
    total_power: float
    evanescent_loss: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inten = np.array(self.intensity, dtype=float)
        inten.setflags(write=False)
        object.__setattr__(self, "intensity", inten)

    @property
    def na(self) -> np.ndarray:
        m = self.intensity.shape[0]
        return (np.arange(m) - m // 2) * self.dNA

    def mesh(self):
        a = self.na
        return np.meshgrid(a, a, indexing="xy")


def gaussian_source(spec: SourceSpec, n: int = 512, pitch: float = 0.1) -> ComplexFieldGrid:
    """Flat-phase Gaussian ``exp(-r**2 / w0**2)`` with ``w0 = mfd_w / 2``."""
    if n * pitch < 4 * spec.mfd_w:
        raise GridTooSmallError(
            f"grid extent {n * pitch:.4g} um < 4 * MFD = {4 * spec.mfd_w:.4g} um"
        )
    c = grid_coords(n, pitch)
    xx, yy = np.meshgrid(c, c, indexing="xy")
    w0 = spec.mfd_w / 2
    return ComplexFieldGrid(
        np.exp(-(xx**2 + yy**2) / w0**2).astype(complex), pitch, spec.wavelength
    )


def _lens_heights(field_: ComplexFieldGrid, lens) -> np.ndarray:
    if isinstance(lens, HeightMap):
        if lens.n_samples != field_.n or lens.pitch != field_.pitch:
            raise GridMismatchError("height map and field grids differ")
        return lens.h
    shifted = lens.replace(
        offset_x=lens.offset_x - field_.origin[0],
        offset_y=lens.offset_y - field_.origin[1],
    )
    return height_map(shifted, field_.pitch, field_.n).h


def apply_thin_lens(field_: ComplexFieldGrid, lens) -> ComplexFieldGrid:
    """Multiply by the thin-element phase ``(2 pi / wl) (n - 1) h(x, y)``.

    ``lens`` is an :class:`AsphericLens` or a precomputed :class:`HeightMap`
    on the same grid. For a height map the index defaults to 1.45.
    """
    h = _lens_heights(field_, lens)
    n_lens = lens.n_lens if isinstance(lens, AsphericLens) else 1.45
    phase = 2 * np.pi / field_.wavelength * (n_lens - 1) * h
    return field_.with_samples(field_.samples * np.exp(1j * phase))


@functools.lru_cache(maxsize=64)
def _transfer(n: int, pitch: float, wavelength: float, index: float, z: float) -> np.ndarray:
    # lru_cache is per process, so workers never share these arrays
    f = scipy.fft.fftfreq(n, pitch)
    f2 = f[None, :] ** 2 + f[:, None] ** 2
    a = (index / wavelength) ** 2 - f2
    prop = a >= 0
    t = np.zeros((n, n), dtype=complex)
    t[prop] = np.exp(2j * np.pi * z * np.sqrt(a[prop]))
    t.setflags(write=False)
    return t


def propagate_asm(field_: ComplexFieldGrid, z: float, index: float = 1.0) -> ComplexFieldGrid:
    """Angular-spectrum propagation by ``z >= 0`` in a uniform medium.

    Evanescent components are dropped, not renormalised.
    """
    if z < 0:
        raise ValueError("only forward propagation (z >= 0) is supported")
    t = _transfer(field_.n, field_.pitch, field_.wavelength, float(index), float(z))
    out = scipy.fft.ifft2(scipy.fft.fft2(field_.samples) * t)
    return field_.with_samples(out)


def propagate_through_lens(
    field_: ComplexFieldGrid, lens: AsphericLens, slice_dz: float = 0.1
) -> ComplexFieldGrid:
    """Carry a field from the lens base plane to the plane of the lens top.

    Split-step (beam propagation) scheme: the lens body is cut into
    horizontal slices of thickness ``<= slice_dz``. Each slice propagates in
    a uniform reference medium, taken as the material on the emitter axis
    at that height, with a phase screen for the index difference weighted by
    the glass fraction of each column in the slice. Strang splitting puts
    the screen at mid-slice. Summed screens reproduce the thin-element phase
    exactly while diffraction inside the glass is kept.
    """
    if slice_dz <= 0:
        raise ValueError("slice_dz must be > 0")
    h = _lens_heights(field_, lens)
    H = float(h.max())
    if H == 0.0:
        return field_
    n_slices = max(1, int(np.ceil(H / slice_dz - 1e-9)))
    dz = H / n_slices
    k0 = 2 * np.pi / field_.wavelength
    c = field_.n // 2
    half = {
        idx: _transfer(field_.n, field_.pitch, field_.wavelength, idx, dz / 2)
        for idx in (1.0, float(lens.n_lens))
    }
    spectrum = scipy.fft.fft2(field_.samples)
    dn = float(lens.n_lens) - 1.0
    for j in range(n_slices):
        # glass fraction of each column within this slice
        fill = np.clip(h - j * dz, 0.0, dz) / dz
        in_glass = fill[c, c] >= 0.5
        n_ref = float(lens.n_lens) if in_glass else 1.0
        spectrum *= half[n_ref]
        e = scipy.fft.ifft2(spectrum)
        excess = fill - 1.0 if in_glass else fill
        e *= np.exp(1j * k0 * dn * dz * excess)
        spectrum = scipy.fft.fft2(e)
        spectrum *= half[n_ref]
    return field_.with_samples(scipy.fft.ifft2(spectrum))


def propagating_power(field_: ComplexFieldGrid) -> float:
    """Power carried by plane waves with ``NA <= 1`` (unpadded spectrum)."""
    n, p = field_.n, field_.pitch
    f = scipy.fft.fftfreq(n, p)
    rho2 = field_.wavelength**2 * (f[None, :] ** 2 + f[:, None] ** 2)
    spec = np.abs(scipy.fft.fft2(field_.samples)) ** 2
    # DFT Parseval: sum|E|^2 p^2 = sum|F|^2 p^2 / n^2
    return float(spec[rho2 <= 1].sum() * p**2 / n**2)


def _centred_embed(e: np.ndarray, size: int) -> np.ndarray:
    """Zero-pad ``e`` to ``size`` with the optical axis at index 0.

    The row and column at ``-N/2`` have no mirror partner on the grid. The
    field is periodic over the box, so that sample is split evenly between
    ``-N/2`` and ``+N/2``; this keeps the padded far field of a symmetric
    field exactly symmetric.
    """
    n = e.shape[0]
    if size == n:
        return scipy.fft.ifftshift(e)
    h = n // 2
    ext = np.zeros((n + 1, n + 1), dtype=complex)
    ext[:n, :n] = e
    ext[n, :] = ext[0, :]
    ext[:, n] = ext[:, 0]
    ext[[0, n], :] *= 0.5
    ext[:, [0, n]] *= 0.5
    idx = (np.arange(n + 1) - h) % size
    out = np.zeros((size, size), dtype=complex)
    out[np.ix_(idx, idx)] = ext
    return out


def far_field_amplitude(field_: ComplexFieldGrid, pad_factor: int = 4):
    """Complex far-field amplitude on the unit direction-cosine square.

    Returns ``(amplitude, dNA)``; ``|amplitude|**2`` is the intensity used by
    :func:`far_field` before clipping to the unit disc.
    """
    if pad_factor not in (1, 2, 4, 8):
        raise ValueError("pad_factor must be one of 1, 2, 4, 8")
    n, p, wl = field_.n, field_.pitch, field_.wavelength
    size = n * pad_factor
    spec = scipy.fft.fftshift(scipy.fft.fft2(_centred_embed(field_.samples, size)))
    dNA = wl / (size * p)
    m = min(int(np.floor(1.0 / dNA + 1e-9)), size // 2 - 1)
    sl = slice(size // 2 - m, size // 2 + m + 1)
    # continuous-FT scaling p**2, then 1/wl so that sum(I) dNA**2 = power
    amp = spec[sl, sl] * (p**2 / wl)
    return amp, dNA


def far_field(field_: ComplexFieldGrid, pad_factor: int = 4) -> FarFieldMap:
    """Far-field intensity ``|FT[E]|**2`` indexed by ``NA = wl * f``.

    Zero padding to ``N * pad_factor`` sets the angular pitch
    ``dNA = wl / (N * pad_factor * pitch)``. No obliquity factor is applied.
    """
    amp, dNA = far_field_amplitude(field_, pad_factor)
    inten = np.abs(amp) ** 2
    m = inten.shape[0] // 2
    a = (np.arange(inten.shape[0]) - m) * dNA
    outside = a[None, :] ** 2 + a[:, None] ** 2 > 1.0
    inten[outside] = 0.0
    total = float(inten.sum() * dNA**2)
    loss = max(field_.power - total, 0.0)
    return FarFieldMap(
        intensity=inten,
        dNA=dNA,
        wavelength=field_.wavelength,
        total_power=total,
        evanescent_loss=loss,
        meta={"pad_factor": pad_factor, "source_power": field_.power},
    )
