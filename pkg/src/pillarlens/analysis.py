"""Mode statistics extracted from near- and far-field data."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .wave import ComplexFieldGrid, FarFieldMap

GAUSSIANITY_THRESHOLD = 0.95
FIBER_ACCEPTANCE_NA = 0.14
SIDE_LOBE_LEVEL = 0.5
SIDE_LOBE_PROMINENCE = 0.05

# sub-cell samples per axis for cells cut by an encircling circle
_SUBCELL = 16


class DegenerateFieldError(ValueError):
    """Raised for fields or maps with no power."""


@dataclass(frozen=True)
class ModeStats:
    mfd: float
    na: float
    gaussianity: float
    bimodal: bool
    power_in_na014: float

    def as_dict(self) -> dict:
        return asdict(self)


def _central_second_moment(weights, xx, yy):
    total = weights.sum()
    if not total > 0 or not np.isfinite(total):
        raise DegenerateFieldError("zero or non-finite total power")
    cx = (weights * xx).sum() / total
    cy = (weights * yy).sum() / total
    r2 = (weights * ((xx - cx) ** 2 + (yy - cy) ** 2)).sum() / total
    return float(r2), float(cx), float(cy)


def mfd_d4sigma(field: ComplexFieldGrid) -> float:
    """Second-moment (D4sigma) mode field diameter of ``|E|**2``.

    Equals the 1/e^2 intensity diameter for a Gaussian beam.
    """
    xx, yy = field.mesh()
    r2, _, _ = _central_second_moment(field.intensity, xx, yy)
    return 2.0 * np.sqrt(2.0 * r2)


def radial_profile(values, xx, yy, center, bin_width):
    """Azimuthal mean of ``values`` in rings of ``bin_width`` about ``center``."""
    r = np.hypot(xx - center[0], yy - center[1])
    idx = (r / bin_width).astype(int).ravel()
    sums = np.bincount(idx, weights=values.ravel())
    counts = np.bincount(idx)
    with np.errstate(invalid="ignore"):
        prof = sums / counts
    return (np.arange(prof.size) + 0.5) * bin_width, np.where(counts > 0, prof, np.nan)


def mfd_contour(field: ComplexFieldGrid) -> float:
    """1/e^2 diameter read off the azimuthally averaged intensity.

    Diagnostic cross-check for :func:`mfd_d4sigma`; not used by the
    optimisers.
    """
    xx, yy = field.mesh()
    inten = field.intensity
    _, cx, cy = _central_second_moment(inten, xx, yy)
    r, prof = radial_profile(inten, xx, yy, (cx, cy), field.pitch)
    prof = np.nan_to_num(prof)
    level = prof.max() * np.exp(-2.0)
    start = int(np.argmax(prof))
    below = np.nonzero(prof[start:] < level)[0]
    if below.size == 0:
        return float("nan")
    j = start + below[0]
    if j == 0:
        return 0.0
    # linear interpolation between the bracketing ring centres
    r0, r1, p0, p1 = r[j - 1], r[j], prof[j - 1], prof[j]
    # ring 0 is centred on pitch/2; the true centre value sits at r = 0
    if j - 1 == 0:
        r0 = 0.0
    return float(2 * (r0 + (p0 - level) / (p0 - p1) * (r1 - r0)))


def na_1e2(farfield: FarFieldMap) -> float:
    """Second-moment 1/e^2 numerical aperture of a far-field map."""
    nx, ny = farfield.mesh()
    rho2, _, _ = _central_second_moment(farfield.intensity, nx, ny)
    return float(np.sqrt(2.0 * rho2))


def na_on_axis(farfield: FarFieldMap) -> float:
    """Like :func:`na_1e2` but with moments taken about the optical axis.

    Diagnostic only: a steered beam reads as broadened here, which is what
    a fibre fixed on the axis sees.
    """
    nx, ny = farfield.mesh()
    inten = farfield.intensity
    total = inten.sum()
    if not total > 0:
        raise DegenerateFieldError("far-field map carries no power")
    return float(np.sqrt(2.0 * (inten * (nx**2 + ny**2)).sum() / total))


def _disc_weights(nx, ny, dNA, radius):
    """Fraction of each square cell lying inside ``rho <= radius``."""
    rho = np.hypot(nx, ny)
    half_diag = dNA / np.sqrt(2.0)
    w = (rho <= radius).astype(float)
    edge = np.abs(rho - radius) < half_diag
    if edge.any():
        off = (np.arange(_SUBCELL) + 0.5) / _SUBCELL - 0.5
        ox, oy = np.meshgrid(off * dNA, off * dNA, indexing="xy")
        ex = nx[edge][:, None] + ox.ravel()[None, :]
        ey = ny[edge][:, None] + oy.ravel()[None, :]
        w[edge] = (ex**2 + ey**2 <= radius**2).mean(axis=1)
    return w


def encircled_fraction(farfield: FarFieldMap, na_cut: float = FIBER_ACCEPTANCE_NA) -> float:
    """Fraction of propagating far-field power inside ``NA <= na_cut``.

    Two-dimensional encircled energy about the optical axis, with cells
    straddling either circle weighted by their covered area.
    """
    if not 0 < na_cut <= 1:
        raise ValueError("na_cut must be in (0, 1]")
    nx, ny = farfield.mesh()
    inten = farfield.intensity
    den = (inten * _disc_weights(nx, ny, farfield.dNA, 1.0)).sum()
    if not den > 0:
        raise DegenerateFieldError("far-field map carries no power")
    if na_cut == 1.0:
        return 1.0
    num = (inten * _disc_weights(nx, ny, farfield.dNA, na_cut)).sum()
    return float(min(num / den, 1.0))


def _gaussian_overlap(amp, nx, ny, cx, cy, width, inten_sum):
    g = np.exp(-((nx - cx) ** 2 + (ny - cy) ** 2) / width**2)
    return float((amp * g).sum() ** 2 / (inten_sum * (g * g).sum()))


def gaussianity(farfield: FarFieldMap, threshold: float = GAUSSIANITY_THRESHOLD):
    """Overlap of the far-field amplitude with its best centred Gaussian.

    The Gaussian is centred on the intensity centroid. Its width starts at
    the moment estimate and is refined by a bounded 1-D search. Returns
    ``(score, bimodal)``; a map is bimodal when the score falls below
    ``threshold`` or :func:`off_axis_peak` finds an off-axis lobe.
    """
    nx, ny = farfield.mesh()
    inten = farfield.intensity
    rho2, cx, cy = _central_second_moment(inten, nx, ny)
    amp = np.sqrt(inten)
    total = float(inten.sum())
    w0 = max(np.sqrt(2.0 * rho2), farfield.dNA)
    res = minimize_scalar(
        lambda w: -_gaussian_overlap(amp, nx, ny, cx, cy, w, total),
        bounds=(0.5 * w0, 2.0 * w0),
        method="bounded",
        options={"xatol": 1e-6 * w0},
    )
    score = max(-res.fun, _gaussian_overlap(amp, nx, ny, cx, cy, w0, total))
    score = float(min(score, 1.0))
    return score, bool(score < threshold or off_axis_peak(farfield, (cx, cy)))


def off_axis_peak(farfield: FarFieldMap, center=None) -> bool:
    """True when the ring-averaged far field has an off-axis lobe.

    A lobe is either the global maximum lying two or more rings from the
    centre, or a local maximum reaching ``SIDE_LOBE_LEVEL`` of the peak that
    rises at least ``SIDE_LOBE_PROMINENCE`` (relative) above the dip between
    it and the axis. Rings are two angular pitches wide.
    """
    nx, ny = farfield.mesh()
    inten = farfield.intensity
    if center is None:
        _, cx, cy = _central_second_moment(inten, nx, ny)
        center = (cx, cy)
    _, prof = radial_profile(inten, nx, ny, center, 2 * farfield.dNA)
    prof = np.nan_to_num(prof)
    top = int(np.argmax(prof))
    if top >= 2 and prof[top] > prof[0] * (1 + 1e-6):
        return True
    for j in range(2, prof.size - 1):
        v = prof[j]
        if v < SIDE_LOBE_LEVEL * prof[top] or not (v >= prof[j - 1] and v > prof[j + 1]):
            continue
        if v - prof[:j].min() >= SIDE_LOBE_PROMINENCE * v:
            return True
    return False


def mode_stats(
    nearfield: ComplexFieldGrid,
    farfield: FarFieldMap,
    threshold: float = GAUSSIANITY_THRESHOLD,
    na_cut: float = FIBER_ACCEPTANCE_NA,
) -> ModeStats:
    score, bimodal = gaussianity(farfield, threshold)
    return ModeStats(
        mfd=mfd_d4sigma(nearfield),
        na=na_1e2(farfield),
        gaussianity=score,
        bimodal=bimodal,
        power_in_na014=encircled_fraction(farfield, na_cut),
    )
