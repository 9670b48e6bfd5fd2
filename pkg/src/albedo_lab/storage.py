"""Artifact persistence: raw little-endian float64 arrays with JSON sidecars,
canonical JSON and provenance stamps."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .coefficients import AbsorptionField, CartesianGrid, PhaseFunction, ScatteringField

RAW_DTYPE = "<f8"


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(canonical_json(obj))
    return path


def config_hash(config: dict) -> str:
    blob = json.dumps(_plain(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def provenance(config: dict, seed) -> dict:
    from . import __version__
    return {"config_hash": config_hash(config), "version": __version__, "seed": seed}


def save_array(stem, array, meta: dict | None = None) -> tuple[Path, Path]:
    """Write `stem.f64` (raw little-endian float64, C order) and `stem.json`."""
    stem = Path(stem)
    a = np.ascontiguousarray(np.asarray(array, dtype=RAW_DTYPE))
    raw = stem.with_suffix(".f64")
    raw.write_bytes(a.tobytes())
    side = write_json(stem.with_suffix(".json"), {"shape": list(a.shape), "dtype": RAW_DTYPE, **(meta or {})})
    return raw, side


def load_array(stem):
    stem = Path(stem)
    meta = json.loads(stem.with_suffix(".json").read_text())
    a = np.frombuffer(stem.with_suffix(".f64").read_bytes(), dtype=meta.get("dtype", RAW_DTYPE))
    return a.reshape(meta["shape"]).astype(float), meta


def _grid_meta(grid: CartesianGrid) -> dict:
    return {"n": grid.n, "N": grid.N, "rho": grid.rho, "spacing": grid.h, "origin": [float(grid.axis[0])] * grid.n}


def save_field(stem, field, extra: dict | None = None):
    """Persist an absorption or scattering field in the coefficient format."""
    meta = {"grid": _grid_meta(field.grid), **(extra or {})}
    if isinstance(field, ScatteringField):
        meta.update(kind="scattering", phase=field.phase.params())
        return save_array(stem, field.amplitude, meta)
    meta["kind"] = "absorption"
    return save_array(stem, field.values, meta)


def load_field(stem):
    values, meta = load_array(stem)
    g = meta["grid"]
    grid = CartesianGrid(g["n"], g["N"], g["rho"])
    if meta.get("kind") == "scattering":
        ph = meta["phase"]
        return ScatteringField(grid, values, PhaseFunction(ph["name"], g["n"], ph.get("g", 0.0)))
    return AbsorptionField(grid, values)
