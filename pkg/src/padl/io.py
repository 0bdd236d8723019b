"""CSV and JSON artifacts with fixed schemas."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .dynamics import TimeTrace
from .errors import DataError

SCHEMAS = {
    "trace": ("t_s", "re", "im", "flux"),
    "s11": ("freq_hz", "re_s11", "im_s11"),
    "spectrum": ("freq_hz", "psd"),
    "threshold": ("drive_amplitude", "integrated_psd"),
    "curve": ("eps2_over_kappa1", "n", "n_classical"),
    "delay": ("freq_hz", "phase_rad", "group_delay_s"),
}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, schema: str, columns) -> Path:
    header = SCHEMAS[schema]
    cols = [np.asarray(c, dtype=float) for c in columns]
    if len(cols) != len(header) or len({c.size for c in cols}) != 1:
        raise DataError(f"{schema} CSV needs {len(header)} equal-length columns")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path, schema: str) -> dict:
    """Read and validate a CSV; returns column name -> float array."""
    header = SCHEMAS[schema]
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    if tuple(h.strip() for h in rows[0]) != header:
        raise DataError(f"{path}: header {rows[0]} does not match {schema} schema {list(header)}")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise DataError(f"{path}: malformed row ({exc})") from exc
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values")
    out = {name: data[:, i] for i, name in enumerate(header)}
    _check(schema, out, path)
    return out


def _check(schema: str, cols: Mapping, path) -> None:
    if schema == "trace":
        t = cols["t_s"]
        if t.size >= 2:
            d = np.diff(t)
            if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-6, atol=0):
                raise DataError(f"{path}: t_s must be uniformly increasing")
        flux = cols["re"] ** 2 + cols["im"] ** 2
        if not np.allclose(flux, cols["flux"], rtol=1e-9, atol=1e-12 * max(1.0, float(np.max(flux, initial=0)))):
            raise DataError(f"{path}: flux column disagrees with re^2 + im^2")
    elif schema in ("s11", "spectrum", "delay"):
        if np.any(np.diff(cols["freq_hz"]) <= 0):
            raise DataError(f"{path}: freq_hz must be strictly increasing")
    elif schema == "threshold":
        if np.any(cols["drive_amplitude"] < 0) or np.any(cols["integrated_psd"] < 0):
            raise DataError(f"{path}: threshold data must be non-negative")


def validate_csv(path) -> str:
    """Identify the schema of a CSV from its header and validate it; returns the schema name."""
    with Path(path).open(newline="") as fh:
        header = tuple(h.strip() for h in next(csv.reader(fh), []))
    for name, cols in SCHEMAS.items():
        if cols == header:
            read_csv(path, name)
            return name
    raise DataError(f"{path}: unknown CSV header {list(header)}")


def write_trace(path, trace: TimeTrace) -> Path:
    s = trace.samples
    return write_csv(path, "trace", (trace.times, s.real, s.imag, trace.flux))


def read_trace(path) -> TimeTrace:
    cols = read_csv(path, "trace")
    t = cols["t_s"]
    if t.size < 2:
        raise DataError(f"{path}: a trace needs at least two samples")
    dt = float((t[-1] - t[0]) / (t.size - 1))
    return TimeTrace(float(t[0]), dt, cols["re"] + 1j * cols["im"])


def write_s11(path, freq_hz, s) -> Path:
    s = np.asarray(s, complex)
    return write_csv(path, "s11", (freq_hz, s.real, s.imag))


def read_s11(path):
    cols = read_csv(path, "s11")
    return cols["freq_hz"], cols["re_s11"] + 1j * cols["im_s11"]


def _jsonable(obj):
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
