"""
Deterministic, atomic file output.

Floats are written with ``repr`` (shortest round-trip form), complex values
as paired ``re_*``/``im_*`` columns, and JSON with sorted keys, so equal
inputs give byte-identical files. Every write goes to a temporary file in
the target directory and is moved into place with ``os.replace``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["atomic_write", "format_value", "write_csv", "write_json",
           "sha256_file", "to_jsonable", "field_csv", "write_field_csv",
           "write_field_manifest"]


def atomic_write(path, data: str | bytes) -> Path:
    """Write ``data`` to ``path`` via a sibling temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return atomic_write(path, buf.getvalue())


def to_jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> Path:
    text = json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"
    return atomic_write(path, text)


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def field_csv(fld, momentum=None):
    """Header and rows for a 1D/2D field export.

    Columns: node coordinates, ``re_psi, im_psi, abs2`` and, when a
    momentum field is given, one velocity column per axis.
    """
    axes = ["x", "y"][: fld.ndim]
    mesh = np.meshgrid(*fld.coords, indexing="ij")
    cols = [m.ravel() for m in mesh]
    psi = fld.amplitudes.ravel()
    cols += [psi.real, psi.imag, np.abs(psi) ** 2]
    header = axes + ["re_psi", "im_psi", "abs2"]
    if momentum is not None:
        mass = fld.constants.mass
        for i, a in enumerate(axes):
            cols.append(momentum.vectors[..., i].ravel() / mass)
            header.append(f"v_{a}")
    return header, zip(*cols)


def write_field_csv(path, fld, momentum=None) -> Path:
    header, rows = field_csv(fld, momentum)
    return write_csv(path, header, rows)


def write_field_manifest(path, fld, seeds=None, extra=None) -> Path:
    """JSON sidecar with grid metadata, constants and seeds."""
    k = fld.constants
    meta = {
        "grid": [{"n": int(c.size), "start": float(c[0]), "spacing": float(c[1] - c[0])}
                 for c in fld.coords],
        "time": fld.time,
        "constants": {"hbar": k.hbar, "mass": k.mass, "c_light": k.c_light},
        "seeds": list(seeds or []),
    }
    if extra:
        meta.update(extra)
    return write_json(path, meta)
