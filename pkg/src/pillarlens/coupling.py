"""Single-mode fibre coupling: closed-form NA formula and overlap integral."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .analysis import GAUSSIANITY_THRESHOLD, DegenerateFieldError, ModeStats, mode_stats
from .wave import ComplexFieldGrid, FarFieldMap, GridMismatchError

# relative MFD mismatch under which the NA-only formula is trusted
MFD_MATCH_RTOL = 0.05


@dataclass(frozen=True)
class FiberSpec:
    """Target fibre mode. ``w_f`` and ``na_f`` are deliberately independent."""

    w_f: float = 9.2
    na_f: float = 0.14
    wavelength: float = 1.3
    name: str = "smf28"

    def __post_init__(self):
        if not self.w_f > 0:
            raise ValueError("fibre MFD must be > 0")
        if not 0 < self.na_f < 1:
            raise ValueError("fibre NA must be in (0, 1)")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")


FIBER_PRESETS = {
    "smf28": FiberSpec(w_f=9.2, na_f=0.14, wavelength=1.3, name="smf28"),
}


def fiber_preset(name: str) -> FiberSpec:
    try:
        return FIBER_PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown fibre preset {name!r}; known: {sorted(FIBER_PRESETS)}") from None


def na_from_mfd(w: float, wavelength: float) -> float:
    """Small-angle Gaussian divergence ``2 wl / (pi w)``."""
    if not w > 0 or not wavelength > 0:
        raise ValueError("MFD and wavelength must be > 0")
    return 2.0 * wavelength / (np.pi * w)


def mfd_from_na(na: float, wavelength: float) -> float:
    if not na > 0 or not wavelength > 0:
        raise ValueError("NA and wavelength must be > 0")
    return 2.0 * wavelength / (np.pi * na)


def consistency_check(fiber: FiberSpec) -> dict:
    """Compare the stated fibre NA with the one implied by its MFD."""
    implied = na_from_mfd(fiber.w_f, fiber.wavelength)
    return {
        "stated_na": fiber.na_f,
        "implied_na": implied,
        "ratio": fiber.na_f / implied,
        "consistent": bool(abs(fiber.na_f / implied - 1) <= MFD_MATCH_RTOL),
    }


def eta_na(na_p: float, na_f: float) -> float:
    """Gaussian mode-matching efficiency from two 1/e^2 NAs."""
    if not na_p > 0 or not na_f > 0:
        raise ValueError("NAs must be > 0")
    a, b = na_p**2, na_f**2
    return 4.0 * a * b / (a + b) ** 2


def overlap_integral(a, b) -> float:
    """Normalised ``|<a, b>|**2`` of two equally shaped sample arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise GridMismatchError(f"shapes differ: {a.shape} vs {b.shape}")
    pa = float(np.vdot(a, a).real)
    pb = float(np.vdot(b, b).real)
    if not pa > 0 or not pb > 0:
        raise DegenerateFieldError("overlap with a zero-power field")
    eta = abs(np.vdot(b, a)) ** 2 / (pa * pb)
    return float(min(eta, 1.0))


def overlap_efficiency(a, b) -> float:
    """Power coupling between two modes on the same grid.

    Accepts two :class:`ComplexFieldGrid`, two :class:`FarFieldMap` (using
    the amplitude ``sqrt(intensity)``) or two plain arrays. The sample pitch
    cancels in the normalised ratio.
    """
    if isinstance(a, ComplexFieldGrid) and isinstance(b, ComplexFieldGrid):
        if not a.same_geometry(b):
            raise GridMismatchError("fields are sampled on different grids")
        return overlap_integral(a.samples, b.samples)
    if isinstance(a, FarFieldMap) and isinstance(b, FarFieldMap):
        if a.dNA != b.dNA or a.intensity.shape != b.intensity.shape:
            raise GridMismatchError("far-field maps are sampled differently")
        return overlap_integral(np.sqrt(a.intensity), np.sqrt(b.intensity))
    if isinstance(a, (ComplexFieldGrid, FarFieldMap)) or isinstance(
        b, (ComplexFieldGrid, FarFieldMap)
    ):
        raise TypeError("cannot mix field types in an overlap")
    return overlap_integral(a, b)


def fiber_mode(fiber: FiberSpec, like: ComplexFieldGrid, offset=(0.0, 0.0)) -> ComplexFieldGrid:
    """Flat-phase fibre Gaussian sampled on the grid of ``like``."""
    xx, yy = like.mesh()
    w = fiber.w_f / 2
    r2 = (xx - offset[0]) ** 2 + (yy - offset[1]) ** 2
    return like.with_samples(np.exp(-r2 / w**2).astype(complex))


@dataclass(frozen=True)
class CouplingReport:
    eta_na: float
    eta_overlap: float
    consistency_gap: float
    fiber: FiberSpec
    stats: ModeStats
    shortcut_valid: bool

    @property
    def bimodal(self) -> bool:
        return self.stats.bimodal

    def as_dict(self) -> dict:
        d = asdict(self)
        d["bimodal"] = self.bimodal
        return d


def smf_coupling(
    device_farfield: FarFieldMap,
    device_nearfield: ComplexFieldGrid,
    fiber: FiberSpec,
    stats: ModeStats | None = None,
    threshold: float = GAUSSIANITY_THRESHOLD,
) -> CouplingReport:
    """Couple a device mode into ``fiber`` by both routes.

    ``eta_na`` uses the far-field NA only; ``eta_overlap`` butt-couples the
    monitor-plane near field onto a flat-phase fibre Gaussian. The NA
    shortcut is flagged valid only for a Gaussian far field whose near-field
    MFD is within 5% of the fibre's.
    """
    if stats is None:
        stats = mode_stats(device_nearfield, device_farfield, threshold)
    e_na = eta_na(stats.na, fiber.na_f)
    e_ov = overlap_efficiency(device_nearfield, fiber_mode(fiber, device_nearfield))
    valid = (
        stats.gaussianity >= threshold
        and not stats.bimodal
        and abs(stats.mfd - fiber.w_f) / fiber.w_f <= MFD_MATCH_RTOL
    )
    return CouplingReport(
        eta_na=e_na,
        eta_overlap=e_ov,
        consistency_gap=abs(e_na - e_ov),
        fiber=fiber,
        stats=stats,
        shortcut_valid=bool(valid),
    )
