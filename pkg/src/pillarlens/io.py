"""CSV/JSON artifacts: sweep tables, far-field and near-field exports."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .wave import ComplexFieldGrid, FarFieldMap

FLOAT_FMT = "%.9g"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, columns, rows) -> Path:
    """Write dict rows with a fixed header; floats get 9 significant digits."""
    path = Path(path)
    lines = [",".join(columns)]
    lines += [",".join(_fmt(row[c]) for c in columns) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def export_farfield(ffmap: FarFieldMap, path) -> Path:
    """Write ``nax,nay,intensity`` rows (peak-normalised) plus a JSON sidecar.

    Rows run over the NA grid in row-major order (``nay`` outer). The
    sidecar next to the CSV holds the angular pitch, wavelength, total and
    evanescent power and the peak used for normalisation.
    """
    path = Path(path)
    nx, ny = ffmap.mesh()
    peak = float(ffmap.intensity.max())
    inten = ffmap.intensity / peak if peak > 0 else ffmap.intensity
    table = np.column_stack([nx.ravel(), ny.ravel(), inten.ravel()])
    np.savetxt(path, table, fmt=FLOAT_FMT, delimiter=",", header="nax,nay,intensity",
               comments="")
    write_json(path.with_suffix(".json"), {
        "dNA": ffmap.dNA,
        "wavelength": ffmap.wavelength,
        "total_power": ffmap.total_power,
        "evanescent_loss": ffmap.evanescent_loss,
        "peak_intensity": peak,
        "size": int(ffmap.intensity.shape[0]),
    })
    return path


def read_farfield(path) -> FarFieldMap:
    """Rebuild a (peak-normalised) far-field map from :func:`export_farfield` output."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    _, data = read_csv(path)
    m = int(meta["size"])
    return FarFieldMap(
        intensity=data[:, 2].reshape(m, m),
        dNA=meta["dNA"],
        wavelength=meta["wavelength"],
        total_power=meta["total_power"],
        evanescent_loss=meta["evanescent_loss"],
    )


def export_nearfield(field: ComplexFieldGrid, path) -> Path:
    """Write ``x,y,intensity`` rows (peak-normalised) plus a JSON sidecar."""
    path = Path(path)
    xx, yy = field.mesh()
    inten = field.intensity
    peak = float(inten.max())
    table = np.column_stack([xx.ravel(), yy.ravel(), (inten / peak).ravel()])
    np.savetxt(path, table, fmt=FLOAT_FMT, delimiter=",", header="x,y,intensity", comments="")
    write_json(path.with_suffix(".json"), {
        "pitch": field.pitch,
        "wavelength": field.wavelength,
        "power": field.power,
        "peak_intensity": peak,
        "size": field.n,
    })
    return path
