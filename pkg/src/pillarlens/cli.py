"""Command-line front end.

Every command writes ``manifest.json``, ``summary.json`` and its data CSVs
into the output directory. Exit codes: 0 success, 1 configuration or
validation error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DegenerateFieldError
from .config import ConfigError, RunConfig, floats, resolve, symmetric_grid
from .geometry import LensDomainError, height_error_percent, lens_height, sag
from .io import export_farfield, export_nearfield, write_csv, write_json
from .optimize import (
    SWEEP_COLUMNS,
    NoInteriorMaximumError,
    evaluate_design,
    family_scan,
    match_fiber,
    plateau_halfwidth,
    predicted_k4,
    REFERENCE_DESIGN,
    simulate,
    sweep_k,
    sweep_k4,
    tolerance_height,
    tolerance_offset,
)

log = logging.getLogger("pillarlens")

COMMANDS = (
    "profile", "simulate", "sweep-k4", "sweep-k", "family",
    "match-fiber", "tolerance-offset", "tolerance-height",
)
LOCK_NAME = ".pillarlens.lock"
# manifest fields that legitimately differ between identical runs
TIMESTAMP_FIELDS = ("started", "duration_s")

FLAG_KEYS = {
    "R": "lens.R",
    "k": "lens.k",
    "k4": "lens.k4",
    "n_lens": "lens.n_lens",
    "offset_x": "lens.offset_x",
    "offset_y": "lens.offset_y",
    "samples": "profile.samples",
    "mfd_w": "source.mfd_w",
    "fiber": "fiber.preset",
    "workers": "run.workers",
    "out": "run.out",
}


class NumericalFailure(RuntimeError):
    pass


def _sweep_rows(records):
    return [r.row() for r in records]


def cmd_profile(cfg: RunConfig, out: Path):
    lens = cfg.lens
    xs = np.linspace(0.0, lens.R, cfg["profile.samples"])
    zs = sag(lens, xs)
    H = lens_height(lens)
    rows = [{"x": x, "z": z, "h": H - z} for x, z in zip(xs, zs)]
    write_csv(out / "profile.csv", ("x", "z", "h"), rows)
    return {"R": lens.R, "k": lens.k, "k4": lens.k4, "lens_height": H}


def cmd_simulate(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    lens = cfg.lens
    rec = evaluate_design(lens, ctx)
    bare = evaluate_design(None, ctx)
    if not cfg["run.summary_only"]:
        _, monitor, ff = simulate(lens, ctx)
        export_farfield(ff, out / "farfield.csv")
        export_nearfield(monitor, out / "nearfield.csv")
        _, _, ff_bare = simulate(None, ctx)
        export_farfield(ff_bare, out / "farfield_bare.csv")
    write_csv(out / "designs.csv", SWEEP_COLUMNS, _sweep_rows([bare, rec]))
    s, c = rec.stats, rec.coupling
    return {
        "lens_height": lens_height(lens),
        "mfd": s.mfd,
        "na": s.na,
        "eta014": s.power_in_na014,
        "gaussianity": s.gaussianity,
        "bimodal": s.bimodal,
        "eta_na": c.eta_na,
        "eta_overlap": c.eta_overlap,
        "consistency_gap": c.consistency_gap,
        "shortcut_valid": c.shortcut_valid,
        "bare_na": bare.stats.na,
        "bare_eta_na": bare.coupling.eta_na,
        "bare_eta_overlap": bare.coupling.eta_overlap,
    }


def cmd_sweep_k4(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    grid = np.linspace(cfg["sweep.k4_min"], cfg["sweep.k4_max"], cfg["sweep.k4_points"])
    recs = sweep_k4(cfg["lens.R"], cfg["lens.k"], grid, ctx, cfg["lens.n_lens"])
    bare = evaluate_design(None, ctx)
    write_csv(out / "sweep_k4.csv", SWEEP_COLUMNS, _sweep_rows(recs))
    best = max(recs, key=lambda r: r.eta014)
    return {
        "R": cfg["lens.R"],
        "k": cfg["lens.k"],
        "best_k4": best.lens.k4,
        "best_eta014": best.eta014,
        "bare_eta014": bare.eta014,
        "first_bimodal_k4": next((r.lens.k4 for r in recs if r.stats.bimodal), None),
    }


def _k4_bracket(cfg: RunConfig, R: float):
    if cfg["sweep.k4_bracket"]:
        return tuple(floats(cfg["sweep.k4_bracket"]))
    return (0.0, 3.0 * predicted_k4(REFERENCE_DESIGN[1], REFERENCE_DESIGN[0], R))


def cmd_sweep_k(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    R = cfg["lens.R"]
    results = sweep_k(R, floats(cfg["sweep.k_values"]), ctx, _k4_bracket(cfg, R))
    write_csv(out / "sweep_k.csv", SWEEP_COLUMNS, _sweep_rows([rec for _, _, rec in results]))
    best = max(results, key=lambda t: (t[2].eta014, t[0]))
    return {
        "R": R,
        "best_k": best[0],
        "best_k4": best[1],
        "eta014_by_k": {str(k): rec.eta014 for k, _, rec in results},
    }


def cmd_family(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    radii = np.linspace(cfg["family.R_min"], cfg["family.R_max"], cfg["family.points"])
    recs, fit = family_scan(radii, ctx, warm_start=cfg["family.warm_start"])
    write_csv(out / "family.csv", SWEEP_COLUMNS, _sweep_rows(recs))
    return {
        "exponent": fit.exponent,
        "exponent_err": fit.exponent_err,
        "r0": fit.r0,
        "k4_r0": fit.k4_r0,
        "k4_r0_err": fit.k4_r0_err,
        "k4_r0_fixed": fit.k4_r0_fixed,
        "k4_r0_fixed_err": fit.k4_r0_fixed_err,
    }


def cmd_match_fiber(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    res = match_fiber(ctx, floats(cfg["match.radii"]), cfg["match.max_iters"],
                      cfg["match.ftol"], cfg["lens.n_lens"])
    write_csv(out / "stage1.csv", SWEEP_COLUMNS, _sweep_rows(res.stage1))
    trace = [{"iter": i, "R": R, "k4": k4, "eta_overlap": v, "best": b}
             for i, (R, k4, v, b) in enumerate(res.trace)]
    write_csv(out / "trace.csv", ("iter", "R", "k4", "eta_overlap", "best"), trace)
    write_csv(out / "design.csv", SWEEP_COLUMNS, _sweep_rows([res.record]))
    if not cfg["run.summary_only"]:
        _, _, ff = simulate(res.lens, ctx)
        export_farfield(ff, out / "farfield.csv")
    bare = evaluate_design(None, ctx)
    summary = res.summary()
    summary.update({"bare_eta_na": bare.coupling.eta_na,
                    "bare_eta_overlap": bare.coupling.eta_overlap})
    return summary


def _tolerance_summary(xs, records):
    eta_na = [r.coupling.eta_na if r.coupling else np.nan for r in records]
    eta_ov = [r.coupling.eta_overlap if r.coupling else np.nan for r in records]
    return {
        "plateau_halfwidth_eta_na": plateau_halfwidth(xs, eta_na, 0.9),
        "plateau_halfwidth_eta_overlap": plateau_halfwidth(xs, eta_ov, 0.9),
        "first_bimodal": next(
            (x for x, r in sorted(zip(map(abs, xs), records), key=lambda t: t[0])
             if r.stats and r.stats.bimodal), None),
    }


def cmd_tolerance_offset(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    offsets = symmetric_grid(cfg["tolerance.offset_max"], cfg["tolerance.offset_step"])
    recs = tolerance_offset(cfg.lens, offsets, ctx)
    write_csv(out / "tolerance_offset.csv", SWEEP_COLUMNS, _sweep_rows(recs))
    return _tolerance_summary(offsets, recs)


def cmd_tolerance_height(cfg: RunConfig, out: Path):
    ctx = cfg.context()
    lens = cfg.lens
    dHs = symmetric_grid(cfg["tolerance.dH_max"], cfg["tolerance.dH_step"])
    recs = tolerance_height(lens, dHs, ctx)
    rows = _sweep_rows(recs)
    for row, dH in zip(rows, dHs):
        row["dH_percent"] = height_error_percent(lens, dH)
    write_csv(out / "tolerance_height.csv", SWEEP_COLUMNS + ("dH_percent",), rows)
    summary = _tolerance_summary(dHs, recs)
    summary["skipped"] = [r.dH for r in recs if r.error]
    summary["lens_height"] = lens_height(lens)
    return summary


HANDLERS = {
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "sweep-k4": cmd_sweep_k4,
    "sweep-k": cmd_sweep_k,
    "family": cmd_family,
    "match-fiber": cmd_match_fiber,
    "tolerance-offset": cmd_tolerance_offset,
    "tolerance-height": cmd_tolerance_height,
}


def _acquire_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out} is locked by another run ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    return lock


def run_command(cfg: RunConfig) -> int:
    """Execute a validated config; returns the process exit code."""
    out = cfg.out_dir
    try:
        lock = _acquire_lock(out)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    started = time.time()
    try:
        summary = HANDLERS[cfg.command](cfg, staging)
        duration = time.time() - started
        write_json(staging / "summary.json", summary)
        outputs = sorted(p.name for p in staging.iterdir())
        write_json(staging / "manifest.json", {
            "command": cfg.command,
            "config": cfg.values,
            "version": __version__,
            "started": started,
            "duration_s": duration,
            "summary": summary,
            "outputs": outputs + ["manifest.json"],
        })
        for p in staging.iterdir():
            os.replace(p, out / p.name)
        return 0
    except (NoInteriorMaximumError, DegenerateFieldError, LensDomainError,
            FloatingPointError, np.linalg.LinAlgError, NumericalFailure) as exc:
        log.error("numerical failure: %s", exc)
        return 2
    except (ConfigError, ValueError) as exc:
        log.error("invalid input: %s", exc)
        return 1
    except Exception as exc:  # anything else is still a failed computation
        log.exception("unexpected failure: %s", exc)
        return 2
    finally:
        shutil.rmtree(staging, ignore_errors=True)
        lock.unlink(missing_ok=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pillarlens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any config key (repeatable)")
        p.add_argument("--R", type=str)
        p.add_argument("--k", type=str)
        p.add_argument("--k4", type=str)
        p.add_argument("--n-lens", dest="n_lens", type=str)
        p.add_argument("--offset-x", dest="offset_x", type=str)
        p.add_argument("--offset-y", dest="offset_y", type=str)
        p.add_argument("--samples", type=str)
        p.add_argument("--mfd-w", dest="mfd_w", type=str)
        p.add_argument("--fiber", type=str)
        p.add_argument("--workers", type=str)
        p.add_argument("--out", type=str, help="output directory (default: $PILLARLENS_OUT)")
        p.add_argument("--summary-only", action="store_true",
                       help="skip bulk far/near-field exports")
    rp = sub.add_parser("replay", help="re-run a command from its manifest.json")
    rp.add_argument("manifest")
    rp.add_argument("--out", type=str)
    return parser


def _overrides(args) -> dict:
    over = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        over[key.strip()] = value.strip()
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            over[key] = value
    if getattr(args, "summary_only", False):
        over["run.summary_only"] = "true"
    return over


def config_from_args(args) -> RunConfig:
    if args.command == "replay":
        manifest = json.loads(Path(args.manifest).read_text())
        values = {k: ("" if v is None else str(v)) for k, v in manifest["config"].items()}
        if args.out:
            values["run.out"] = args.out
        return resolve(manifest["command"], None, values)
    return resolve(args.command, args.config, _overrides(args))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        log.error("configuration error: %s", exc)
        return 1
    return run_command(cfg)


if __name__ == "__main__":
    sys.exit(main())
