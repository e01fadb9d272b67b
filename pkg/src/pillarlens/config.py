"""Flat ``key = value`` run configuration with validation.

Keys are dotted (``grid.N = 512``), ``#`` starts a comment and unknown keys
are rejected. Precedence is command-line flags over file over defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .coupling import FiberSpec, fiber_preset
from .geometry import AsphericLens
from .optimize import DesignContext, GridConfig, default_workers
from .wave import SourceSpec

OUT_ENV = "PILLARLENS_OUT"


class ConfigError(ValueError):
    """Unparseable or invalid run configuration."""


DEFAULTS = {
    "source.mfd_w": 1.5,
    "source.wavelength": 1.3,
    "source.pillar_d": 1.9,
    "fiber.preset": "smf28",
    "fiber.w_f": "",
    "fiber.na_f": "",
    "grid.N": 512,
    "grid.pitch": 0.1,
    "grid.pad_factor": 4,
    "grid.slice_dz": 0.2,
    "grid.monitor_gap": 1.0,
    "lens.R": 5.7,
    "lens.k": 0.0,
    "lens.k4": 3.75e-3,
    "lens.n_lens": 1.45,
    "lens.offset_x": 0.0,
    "lens.offset_y": 0.0,
    "profile.samples": 11,
    "sweep.k4_min": 0.0,
    "sweep.k4_max": 1.5,
    "sweep.k4_points": 31,
    "sweep.k_values": "0,-0.5,-1.0,-1.5",
    "sweep.k4_bracket": "",
    "family.R_min": 1.2,
    "family.R_max": 3.0,
    "family.points": 8,
    "family.warm_start": True,
    "match.radii": "3.0,4.5,6.0,7.5",
    "match.max_iters": 200,
    "match.ftol": 1e-4,
    "tolerance.offset_max": 1.0,
    "tolerance.offset_step": 0.1,
    "tolerance.dH_max": 2.5,
    "tolerance.dH_step": 0.25,
    "run.workers": 0,
    "run.out": "",
    "run.summary_only": False,
}


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def parse_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def floats(text: str) -> list[float]:
    return [float(v) for v in str(text).split(",") if v.strip()]


def symmetric_grid(max_abs: float, step: float) -> list[float]:
    n = int(round(max_abs / step))
    return [round(i * step, 12) for i in range(-n, n + 1)]


@dataclass
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def source(self) -> SourceSpec:
        v = self.values
        return SourceSpec(v["source.mfd_w"], v["source.wavelength"], v["source.pillar_d"])

    @property
    def fiber(self) -> FiberSpec:
        v = self.values
        base = fiber_preset(v["fiber.preset"])
        return FiberSpec(
            w_f=float(v["fiber.w_f"]) if v["fiber.w_f"] != "" else base.w_f,
            na_f=float(v["fiber.na_f"]) if v["fiber.na_f"] != "" else base.na_f,
            wavelength=base.wavelength,
            name=base.name,
        )

    @property
    def grid(self) -> GridConfig:
        v = self.values
        return GridConfig(v["grid.N"], v["grid.pitch"], v["grid.pad_factor"],
                          v["grid.slice_dz"], v["grid.monitor_gap"])

    @property
    def lens(self) -> AsphericLens:
        v = self.values
        return AsphericLens(v["lens.R"], v["lens.k"], v["lens.k4"], v["lens.n_lens"],
                            v["lens.offset_x"], v["lens.offset_y"])

    @property
    def workers(self) -> int:
        return self.values["run.workers"] or default_workers()

    @property
    def out_dir(self) -> Path:
        return Path(self.values["run.out"] or os.environ.get(OUT_ENV, "") or "pillarlens_runs")

    def context(self) -> DesignContext:
        return DesignContext(self.source, self.fiber, self.grid, self.workers)

    def validate(self) -> "RunConfig":
        """Build every physical object once so invariant violations surface early."""
        v = self.values
        try:
            self.context()
            if self.command in ("profile", "simulate", "tolerance-offset", "tolerance-height"):
                self.lens
            if v["profile.samples"] < 2:
                raise ValueError("profile.samples must be >= 2")
            if v["sweep.k4_min"] < 0 or v["sweep.k4_max"] <= v["sweep.k4_min"]:
                raise ValueError("need 0 <= sweep.k4_min < sweep.k4_max")
            if v["sweep.k4_points"] < 2:
                raise ValueError("sweep.k4_points must be >= 2")
            ks = floats(v["sweep.k_values"])
            if 0.0 not in ks or any(k > 0 for k in ks):
                raise ValueError("sweep.k_values must include 0 and be <= 0")
            if v["sweep.k4_bracket"]:
                b = floats(v["sweep.k4_bracket"])
                if len(b) != 2 or not 0 <= b[0] < b[1]:
                    raise ValueError("sweep.k4_bracket must be 'lo,hi' with 0 <= lo < hi")
            if v["family.points"] < 4 or not 0 < v["family.R_min"] < v["family.R_max"]:
                raise ValueError("family scan needs >= 4 points and 0 < R_min < R_max")
            radii = floats(v["match.radii"])
            if len(radii) < 4 or sorted(radii) != radii or radii[0] <= 0:
                raise ValueError("match.radii needs >= 4 ascending positive radii")
            if v["match.max_iters"] < 1 or v["match.ftol"] <= 0:
                raise ValueError("match.max_iters must be >= 1 and match.ftol > 0")
            for key in ("tolerance.offset_step", "tolerance.dH_step"):
                if v[key] <= 0:
                    raise ValueError(f"{key} must be > 0")
            if v["run.workers"] < 0:
                raise ValueError("run.workers must be >= 0 (0 = all cores)")
        except (ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        return self


def resolve(command: str, path=None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, an optional config file and flag overrides."""
    values = dict(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        values.update(parse_text(p.read_text(), str(p)))
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return RunConfig(command, values).validate()
