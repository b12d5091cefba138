"""CSV / JSON writers shared by the pipelines and the CLI."""
from __future__ import annotations

import dataclasses
import enum
import json
from pathlib import Path

import numpy as np


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def to_jsonable(obj):
    return _plain(obj)


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_columns(path, header: str, columns, names) -> Path:
    """Write equal-length columns as CSV with a leading '#' comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with path.open("w") as fh:
        fh.write(f"# {header}\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.12g")
    return path


def read_columns(path):
    """Read a file written by write_columns; returns (names, array)."""
    with open(path) as fh:
        fh.readline()
        names = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return names, data


def write_snapshot_csv(psi, path) -> Path:
    """x and Re/Im of the four spinor components of one slice."""
    v = psi.values
    cols = [psi.grid.x]
    names = ["x"]
    for c in range(4):
        cols += [v[c].real, v[c].imag]
        names += [f"re{c}", f"im{c}"]
    return write_columns(path, f"slice at label={psi.label!r}; x in Angstrom, field in Angstrom^-1/2",
                         cols, names)
