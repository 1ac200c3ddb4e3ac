"""File formats: waveform and grid CSV, schema-checked JSON reports."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .signals import SpaceTimeGrid, Waveform

__all__ = ["emit_waveform_csv", "emit_grid_csv", "emit_report_json", "emit_manifest_json",
           "read_waveform_csv", "load_schema", "validate", "to_jsonable", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"
_FMT = "%.17g"


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """Shipped JSON schema by short name: 'config', 'report' or 'manifest'."""
    text = resources.files("gemfc.schemas").joinpath(f"{name}-v1.json").read_text()
    return json.loads(text)


def validate(obj: dict, name: str) -> None:
    """Raise jsonschema.ValidationError when ``obj`` violates the named schema."""
    jsonschema.Draft202012Validator(load_schema(name)).validate(obj)


def to_jsonable(obj):
    """Plain JSON types; complex numbers become [re, im], non-finite floats None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _dump(path: Path, obj) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def emit_waveform_csv(path, waveform: Waveform, time_unit: str = "T") -> None:
    """Columns t,re,im,abs; the header comment records t0 and dt exactly."""
    lines = [f"# gemfc waveform v1; t0={waveform.t0!r}; dt={waveform.dt!r}; time_unit={time_unit}",
             "t,re,im,abs"]
    if len(waveform):
        data = np.column_stack([waveform.times, waveform.samples.real, waveform.samples.imag,
                                np.abs(waveform.samples)])
        lines.extend(",".join(_FMT % v for v in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n")


def read_waveform_csv(path) -> Waveform:
    """Inverse of emit_waveform_csv (bit-exact for files it wrote).

    Files without the header comment are accepted when their times are
    uniformly spaced.
    """
    text = Path(path).read_text().splitlines()
    meta = {}
    body = []
    for line in text:
        if line.startswith("#"):
            for part in line[1:].split(";"):
                if "=" in part:
                    k, v = part.split("=", 1)
                    meta[k.strip()] = v.strip()
        elif line.strip() and not line.startswith("t,"):
            body.append(line)
    if not body:
        t0 = float(meta.get("t0", 0.0))
        dt = float(meta.get("dt", 1.0))
        return Waveform(t0, dt, np.zeros(0, complex))
    arr = np.array([[float(x) for x in row.split(",")[:3]] for row in body])
    if "t0" in meta and "dt" in meta:
        t0, dt = float(meta["t0"]), float(meta["dt"])
    else:
        t = arr[:, 0]
        if t.size < 2:
            raise ValueError(f"{path}: need at least two samples to infer the time step")
        dt = (t[-1] - t[0]) / (t.size - 1)
        if not np.allclose(np.diff(t), dt, rtol=1e-6, atol=0):
            raise ValueError(f"{path}: times are not uniformly spaced")
        t0 = float(t[0])
    return Waveform(t0, dt, arr[:, 1] + 1j * arr[:, 2])


def emit_grid_csv(path, grid: SpaceTimeGrid, stride: tuple[int, int] = (1, 1),
                  quantity: str = "field", time_unit: str = "T", length_unit: str = "L") -> None:
    """Columns z,t,re,im,abs in z-major order, z from the entrance face."""
    sz, st = stride
    z = grid.z[::sz]
    t = grid.t[::st]
    v = grid.values[::sz, ::st]
    zz, tt = np.meshgrid(z, t, indexing="ij")
    lines = [f"# gemfc grid v1; quantity={quantity}; length={grid.length!r}; "
             f"z_unit={length_unit}; time_unit={time_unit}", "z,t,re,im,abs"]
    if v.size:
        data = np.column_stack([zz.ravel(), tt.ravel(), v.real.ravel(), v.imag.ravel(),
                                np.abs(v).ravel()])
        lines.extend(",".join(_FMT % x for x in row) for row in data)
    Path(path).write_text("\n".join(lines) + "\n")


def emit_report_json(path, report: dict) -> None:
    """Write a run report after checking it against the shipped schema."""
    obj = to_jsonable(report)
    validate(obj, "report")
    _dump(path, obj)


def emit_manifest_json(path, manifest: dict) -> None:
    obj = to_jsonable(manifest)
    validate(obj, "manifest")
    _dump(path, obj)
