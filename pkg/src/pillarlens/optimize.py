"""Design sweeps and optimisers for micropillar lenses.

Every evaluation runs the full pipeline (source, lens, monitor plane, far
field, statistics, coupling) and is a pure function of its inputs, so sweeps
can be farmed out to worker processes without changing any result.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .analysis import GAUSSIANITY_THRESHOLD, ModeStats, mode_stats
from .coupling import CouplingReport, FiberSpec, fiber_preset, smf_coupling
from .geometry import (
    AsphericLens,
    LensDomainError,
    k4_from_height_error,
    lens_height,
    scale_lens,
)
from .wave import (
    SourceSpec,
    far_field,
    gaussian_source,
    propagate_asm,
    propagate_through_lens,
)

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5) - 1) / 2
PRESCAN_POINTS = 9
# Design the k4 scaling law is anchored to (R in um, k4 in um^-3).
REFERENCE_DESIGN = (2.0, 0.14)


class NoInteriorMaximumError(RuntimeError):
    """The objective peaks at an end of the search bracket."""


@dataclass(frozen=True)
class GridConfig:
    """Sampling of the simulation.

    ``slice_dz`` is the maximum slice thickness inside the lens body and
    ``monitor_gap`` the height of the near-field monitor above the lens top.
    """

    n: int = 512
    pitch: float = 0.1
    pad_factor: int = 4
    slice_dz: float = 0.2
    monitor_gap: float = 1.0

    def __post_init__(self):
        if self.n % 2 or self.n < 64:
            raise ValueError("grid N must be even and >= 64")
        if not self.pitch > 0:
            raise ValueError("grid pitch must be > 0")
        if self.pad_factor not in (1, 2, 4, 8):
            raise ValueError("pad_factor must be one of 1, 2, 4, 8")
        if not self.slice_dz > 0:
            raise ValueError("slice_dz must be > 0")
        if not self.monitor_gap >= 0:
            raise ValueError("monitor_gap must be >= 0")


@dataclass(frozen=True)
class DesignContext:
    """Everything except the lens that an evaluation depends on."""

    source: SourceSpec = field(default_factory=SourceSpec)
    fiber: FiberSpec = field(default_factory=lambda: fiber_preset("smf28"))
    grid: GridConfig = field(default_factory=GridConfig)
    workers: int = 1
    threshold: float = GAUSSIANITY_THRESHOLD

    def __post_init__(self):
        if not math.isclose(self.source.wavelength, self.fiber.wavelength, rel_tol=1e-9):
            raise ValueError(
                f"source wavelength {self.source.wavelength} um differs from "
                f"fibre wavelength {self.fiber.wavelength} um"
            )
        if self.grid.pitch > self.source.wavelength / 2:
            raise ValueError(
                f"grid pitch {self.grid.pitch} um exceeds wavelength/2 = "
                f"{self.source.wavelength / 2} um"
            )
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


SWEEP_COLUMNS = (
    "R", "k", "k4", "offset_x", "dH", "mfd", "na", "eta014",
    "gaussianity", "bimodal", "eta_na", "eta_overlap",
)


@dataclass(frozen=True)
class SweepRecord:
    """One evaluated design point. ``lens`` is ``None`` for the bare pillar.

    Entries that could not be evaluated keep ``stats`` and ``coupling`` as
    ``None`` and carry a message in ``error``.
    """

    lens: AsphericLens | None
    stats: ModeStats | None
    coupling: CouplingReport | None
    source: SourceSpec
    grid: GridConfig
    dH: float = 0.0
    error: str | None = None

    @property
    def eta014(self) -> float:
        return self.stats.power_in_na014 if self.stats else float("nan")

    def row(self) -> dict:
        lens = self.lens
        nan = float("nan")
        s, c = self.stats, self.coupling
        return {
            "R": lens.R if lens else nan,
            "k": lens.k if lens else nan,
            "k4": lens.k4 if lens else nan,
            "offset_x": lens.offset_x if lens else 0.0,
            "dH": self.dH,
            "mfd": s.mfd if s else nan,
            "na": s.na if s else nan,
            "eta014": s.power_in_na014 if s else nan,
            "gaussianity": s.gaussianity if s else nan,
            "bimodal": int(s.bimodal) if s else -1,
            "eta_na": c.eta_na if c else nan,
            "eta_overlap": c.eta_overlap if c else nan,
        }

    def as_dict(self) -> dict:
        return asdict(self)


def simulate(lens: AsphericLens | None, ctx: DesignContext):
    """Run the optics for one design.

    Returns ``(exit_field, monitor_field, farfield)``: the field on the
    plane of the lens top, the near field ``monitor_gap`` above it and the
    far-field map.
    """
    g = ctx.grid
    src = gaussian_source(ctx.source, g.n, g.pitch)
    exit_field = src if lens is None else propagate_through_lens(src, lens, g.slice_dz)
    monitor = propagate_asm(exit_field, g.monitor_gap)
    # |angular spectrum| is invariant under free-space propagation
    ff = far_field(exit_field, g.pad_factor)
    return exit_field, monitor, ff


def evaluate_design(lens: AsphericLens | None, ctx: DesignContext) -> SweepRecord:
    """Full pipeline pass for a single design point."""
    _, monitor, ff = simulate(lens, ctx)
    stats = mode_stats(monitor, ff, ctx.threshold)
    report = smf_coupling(ff, monitor, ctx.fiber, stats, ctx.threshold)
    return SweepRecord(lens, stats, report, ctx.source, ctx.grid)


def _evaluate_job(job):
    lens, ctx = job
    return evaluate_design(lens, ctx)


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Ordered map over ``items`` using up to ``workers`` processes."""
    items = list(items)
    workers = min(workers, len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def evaluate_many(lenses: Sequence, ctx: DesignContext) -> list[SweepRecord]:
    return parallel_map(_evaluate_job, [(lens, ctx) for lens in lenses], ctx.workers)


def default_workers() -> int:
    return os.cpu_count() or 1


def sweep_k4(R: float, k: float, k4_grid: Sequence[float], ctx: DesignContext,
             n_lens: float = 1.45) -> list[SweepRecord]:
    """Evaluate ``k4_grid`` at fixed ``R`` and ``k``."""
    k4_grid = [float(v) for v in k4_grid]
    if any(v < 0 for v in k4_grid):
        raise ValueError("k4 values must be non-negative")
    if any(b < a for a, b in zip(k4_grid, k4_grid[1:])):
        raise ValueError("k4 grid must be sorted ascending")
    lenses = [AsphericLens(R=R, k=k, k4=v, n_lens=n_lens) for v in k4_grid]
    return evaluate_many(lenses, ctx)


def golden_maximize(f, lo: float, hi: float, rtol: float = 1e-3, f_lo=None, f_hi=None,
                    max_iter: int = 200):
    """Golden-section search for the maximum of ``f`` on ``[lo, hi]``.

    ``f`` returns ``(value, payload)``. Stops once the bracket is narrower
    than ``rtol`` times its midpoint. Returns every evaluation as
    ``(x, value, payload)``; ties favour the smaller ``x``.
    """
    evals = []

    def call(x):
        v, p = f(x)
        evals.append((x, v, p))
        return v

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = call(c), call(d)
    for _ in range(max_iter):
        if b - a <= rtol * abs(0.5 * (a + b)) or b - a <= 1e-300:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = call(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = call(d)
    return evals


def _best_of(evals):
    # max value, then smallest x
    return max(evals, key=lambda e: (e[1], -e[0]))


def maximize_bracketed(evaluate_many_fn, evaluate_one, lo: float, hi: float,
                       rtol: float = 1e-3):
    """Coarse pre-scan plus golden-section refinement of a 1-D maximum.

    ``evaluate_many_fn(xs)`` and ``evaluate_one(x)`` return values paired with
    payloads. Raises :class:`NoInteriorMaximumError` when the pre-scan peaks
    at either end of the bracket.
    """
    xs = list(np.linspace(lo, hi, PRESCAN_POINTS))
    pre = [(x, v, p) for x, (v, p) in zip(xs, evaluate_many_fn(xs))]
    values = [v for _, v, _ in pre]
    i = int(np.argmax(values))
    if i == 0 or i == len(xs) - 1:
        raise NoInteriorMaximumError(
            f"pre-scan maximum at bracket end x={xs[i]:.6g} (bracket [{lo:.6g}, {hi:.6g}])"
        )
    refined = golden_maximize(evaluate_one, xs[i - 1], xs[i + 1], rtol)
    return _best_of(pre + refined), pre + refined


def best_k4(R: float, k: float, bracket: tuple[float, float], ctx: DesignContext,
            rtol: float = 1e-3, n_lens: float = 1.45, objective: Callable | None = None):
    """Quartic coefficient maximising the power inside the fibre NA.

    ``objective`` maps ``k4`` to ``(value, payload)`` and replaces the
    optics; it exists for testing the search itself. Returns
    ``(k4_opt, record)``.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 <= lo < hi:
        raise ValueError(f"invalid k4 bracket {bracket}")
    if objective is None:
        def one(v):
            rec = evaluate_design(AsphericLens(R=R, k=k, k4=v, n_lens=n_lens), ctx)
            return rec.eta014, rec

        def many(vs):
            return [(r.eta014, r) for r in sweep_k4(R, k, vs, ctx, n_lens)]
    else:
        one = objective

        def many(vs):
            return [objective(v) for v in vs]

    (x, _, payload), _ = maximize_bracketed(many, one, lo, hi, rtol)
    return x, payload


def predicted_k4(k4_ref: float, R_ref: float, R: float) -> float:
    """Quartic coefficient of the reference lens magnified to radius ``R``."""
    return scale_lens(AsphericLens(R=R_ref, k4=k4_ref), R / R_ref).k4


def sweep_k(R: float, k_grid: Sequence[float], ctx: DesignContext,
            bracket: tuple[float, float] | None = None, rtol: float = 1e-3):
    """Per-conic optimum of ``k4``.

    Returns ``[(k, k4_opt, record), ...]`` in the order of ``k_grid``.
    """
    k_grid = [float(v) for v in k_grid]
    if 0.0 not in k_grid:
        raise ValueError("k grid must include 0")
    if bracket is None:
        pred = predicted_k4(REFERENCE_DESIGN[1], REFERENCE_DESIGN[0], R)
        bracket = (0.0, 3.0 * pred)
    out = []
    for k in k_grid:
        k4, rec = best_k4(R, k, bracket, ctx, rtol)
        out.append((k, k4, rec))
    return out


@dataclass(frozen=True)
class ScalingFit:
    """Power law ``k4 = k4_r0 * (R / r0) ** exponent`` fitted in log-log space.

    ``k4_r0_fixed`` is the one-parameter fit with the exponent pinned at -3.
    Uncertainties are one standard error.
    """

    r0: float
    exponent: float
    exponent_err: float
    k4_r0: float
    k4_r0_err: float
    k4_r0_fixed: float
    k4_r0_fixed_err: float
    radii: tuple
    k4s: tuple
    residuals: tuple


def fit_power_law(radii: Sequence[float], k4s: Sequence[float], r0: float = 2.0) -> ScalingFit:
    radii = np.asarray(radii, dtype=float)
    k4s = np.asarray(k4s, dtype=float)
    ok = np.isfinite(k4s) & (k4s > 0)
    if ok.sum() < 4:
        raise ValueError(f"power-law fit needs >= 4 valid points, got {ok.sum()}")
    x = np.log(radii[ok] / r0)
    y = np.log(k4s[ok])
    n = x.size
    A = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = float(resid @ resid) / (n - 2)
    cov = s2 * np.linalg.inv(A.T @ A)
    # pinned exponent: only the intercept is free
    c_fixed = float(np.mean(y + 3.0 * x))
    r_fixed = y + 3.0 * x - c_fixed
    se_fixed = math.sqrt(float(r_fixed @ r_fixed) / (n - 1) / n)
    return ScalingFit(
        r0=r0,
        exponent=float(coef[1]),
        exponent_err=math.sqrt(cov[1, 1]),
        k4_r0=math.exp(coef[0]),
        k4_r0_err=math.exp(coef[0]) * math.sqrt(cov[0, 0]),
        k4_r0_fixed=math.exp(c_fixed),
        k4_r0_fixed_err=math.exp(c_fixed) * se_fixed,
        radii=tuple(radii[ok]),
        k4s=tuple(k4s[ok]),
        residuals=tuple(resid),
    )


def family_scan(R_grid: Sequence[float], ctx: DesignContext, warm_start: bool = True,
                reference: tuple[float, float] = REFERENCE_DESIGN,
                cold_factors: tuple[float, float] = (0.25, 2.0), rtol: float = 1e-3):
    """Optimal ``k4`` across lens radii, with a fitted scaling law.

    With ``warm_start`` each radius searches ``[0.5, 2]`` times the
    magnified optimum of the previous radius; the first radius, and any
    warm bracket that fails, uses ``cold_factors`` times the magnified
    ``reference`` design. Returns ``(records, fit)``.
    """
    R_grid = [float(r) for r in R_grid]
    if len(R_grid) < 4:
        raise ValueError("family scan needs at least 4 radii")
    if any(b <= a for a, b in zip(R_grid, R_grid[1:])):
        raise ValueError("R grid must be strictly ascending")
    records = []
    prev = None
    for R in R_grid:
        cold_pred = predicted_k4(reference[1], reference[0], R)
        cold = (cold_factors[0] * cold_pred, cold_factors[1] * cold_pred)
        if warm_start and prev is not None:
            pred = predicted_k4(prev[1], prev[0], R)
            try:
                k4, rec = best_k4(R, 0.0, (0.5 * pred, 2.0 * pred), ctx, rtol)
            except NoInteriorMaximumError:
                log.info("warm bracket failed at R=%g; retrying cold", R)
                k4, rec = best_k4(R, 0.0, cold, ctx, rtol)
        else:
            k4, rec = best_k4(R, 0.0, cold, ctx, rtol)
        records.append(rec)
        prev = (R, k4)
    fit = fit_power_law(R_grid, [r.lens.k4 for r in records], r0=reference[0])
    return records, fit


@dataclass
class MatchResult:
    lens: AsphericLens
    stats: ModeStats
    coupling: CouplingReport
    record: SweepRecord
    trace: list
    converged: bool
    stage1: list
    stage1_point: tuple

    def summary(self) -> dict:
        return {
            "R": self.lens.R,
            "k": self.lens.k,
            "k4": self.lens.k4,
            "lens_height": lens_height(self.lens),
            "mfd": self.stats.mfd,
            "na": self.stats.na,
            "eta014": self.stats.power_in_na014,
            "gaussianity": self.stats.gaussianity,
            "bimodal": self.stats.bimodal,
            "eta_na": self.coupling.eta_na,
            "eta_overlap": self.coupling.eta_overlap,
            "converged": self.converged,
            "iterations": len(self.trace),
            "stage1_R": self.stage1_point[0],
            "stage1_k4": self.stage1_point[1],
        }


DEFAULT_MATCH_RADII = (3.0, 4.5, 6.0, 7.5)


def _stage1_point(records):
    """Radius where the NA-formula efficiency peaks across a family scan."""
    R = np.array([r.lens.R for r in records])
    eta = np.array([r.coupling.eta_na for r in records])
    i = int(np.argmax(eta))
    R_star = R[i]
    if 0 < i < len(R) - 1:
        # parabola through the peak and its neighbours
        a, b, _ = np.polyfit(R[i - 1:i + 2], eta[i - 1:i + 2], 2)
        if a < 0:
            R_star = float(np.clip(-b / (2 * a), R[i - 1], R[i + 1]))
    ref = records[int(np.argmin(np.abs(R - R_star)))].lens
    return float(R_star), predicted_k4(ref.k4, ref.R, R_star)


def match_fiber(ctx: DesignContext, radii: Sequence[float] = DEFAULT_MATCH_RADII,
                max_iters: int = 200, ftol: float = 1e-4, n_lens: float = 1.45,
                start: tuple[float, float] | None = None) -> MatchResult:
    """Two-stage joint MFD/NA match of a k = 0 lens to ``ctx.fiber``.

    Stage 1 scans the NA-minimising family over ``radii`` and picks the
    radius where the NA-formula efficiency peaks. Stage 2 runs Nelder-Mead
    over ``(R, k4 * R**4)`` maximising the butt-coupling overlap. ``start``
    skips stage 1. The best design ever evaluated is returned.
    """
    stage1 = []
    if start is None:
        stage1, _ = family_scan(radii, ctx)
        start = _stage1_point(stage1)
    R0, k40 = float(start[0]), float(start[1])

    trace = []
    cache = {}

    def evaluate(x):
        key = (float(x[0]), float(x[1]))
        if key in cache:
            return cache[key]
        R, q = key
        if R <= 0 or q < 0:
            cache[key] = (0.0, None)
            return cache[key]
        lens = AsphericLens(R=R, k=0.0, k4=q / R**4, n_lens=n_lens)
        rec = evaluate_design(lens, ctx)
        val = rec.coupling.eta_overlap
        best = max([t[2] for t in trace] + [val])
        trace.append((lens.R, lens.k4, val, best))
        cache[key] = (val, rec)
        return cache[key]

    x0 = np.array([R0, k40 * R0**4])
    simplex = np.array([x0, x0 * [1.05, 1.0], x0 * [1.0, 1.10]])
    res = minimize(
        lambda x: -evaluate(x)[0],
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxiter": max_iters,
            "maxfev": 4 * max_iters,
            "xatol": np.inf,
            "fatol": ftol,
        },
    )
    converged = bool(res.success)
    if not converged:
        log.warning("match_fiber stopped before convergence: %s", res.message)
    best_val, best_rec = max(
        (v for v in cache.values() if v[1] is not None),
        key=lambda v: (v[0], -v[1].lens.R),
    )
    return MatchResult(
        lens=best_rec.lens,
        stats=best_rec.stats,
        coupling=best_rec.coupling,
        record=best_rec,
        trace=trace,
        converged=converged,
        stage1=stage1,
        stage1_point=(R0, k40),
    )


def tolerance_offset(lens: AsphericLens, offsets: Sequence[float], ctx: DesignContext):
    """Records for the lens shifted laterally along x by each offset."""
    offsets = [float(d) for d in offsets]
    if 0.0 not in offsets:
        raise ValueError("offsets must include 0")
    lenses = [lens.replace(offset_x=d, offset_y=0.0) for d in offsets]
    return evaluate_many(lenses, ctx)


def tolerance_height(lens: AsphericLens, dH_grid: Sequence[float], ctx: DesignContext):
    """Records for lens-height errors absorbed by ``k4``.

    Height errors that would need a negative ``k4`` yield records with
    ``error`` set instead of raising.
    """
    dH_grid = [float(d) for d in dH_grid]
    jobs, slots, out = [], [], []
    for dH in dH_grid:
        try:
            jobs.append((k4_from_height_error(lens, dH), ctx))
            slots.append(len(out))
            out.append(None)
        except LensDomainError as exc:
            out.append(SweepRecord(None, None, None, ctx.source, ctx.grid, dH=dH, error=str(exc)))
    for i, rec in zip(slots, parallel_map(_evaluate_job, jobs, ctx.workers)):
        out[i] = SweepRecord(rec.lens, rec.stats, rec.coupling, rec.source, rec.grid,
                             dH=dH_grid[i])
    return out


def plateau_halfwidth(xs: Sequence[float], values: Sequence[float], level: float = 0.9):
    """Half-width of the contiguous region around ``x = 0`` with ``value >= level``.

    Crossings are linearly interpolated on each side; the result is the
    smaller of the two sides. Returns ``inf`` on a side that never drops
    below ``level`` within the scan, in which case the scan edge bounds it.
    """
    xs = np.asarray(xs, dtype=float)
    vals = np.asarray(values, dtype=float)
    order = np.argsort(xs)
    xs, vals = xs[order], vals[order]
    i0 = int(np.argmin(np.abs(xs)))
    if not vals[i0] >= level:
        return 0.0

    def side(step):
        i = i0
        while 0 <= i + step < len(xs):
            j = i + step
            if not vals[j] >= level:
                t = (vals[i] - level) / (vals[i] - vals[j])
                return abs(xs[i] + t * (xs[j] - xs[i]))
            i = j
        return math.inf

    return min(side(1), side(-1))

