"""Deterministic writers for CSV, JSON and raw float64 matrices.

CSV files start with ``# key=value`` provenance lines, then a header row.
Numbers are written with ``repr`` so they round-trip exactly; line endings
are LF regardless of platform.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from . import __version__


def provenance(config_hash: str, seed=None, **extra) -> dict:
    out = {"config_hash": config_hash, "version": __version__}
    if seed is not None:
        out["seed"] = int(seed)
    out.update(extra)
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def render_csv(header, rows, prov: dict | None = None) -> str:
    lines = [f"# {k}={v}" for k, v in (prov or {}).items()]
    lines.append(",".join(header))
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, prov=None):
    Path(path).write_bytes(render_csv(header, rows, prov).encode())


def read_csv(path):
    """Return (provenance, header, rows-of-strings)."""
    prov, header, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            prov[k] = v
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return prov, header, rows


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        # JSON has no inf/nan; keep them readable and explicit
        return o if math.isfinite(o) else ("inf" if o > 0 else "-inf" if o < 0 else "nan")
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def render_json(obj, prov: dict | None = None) -> str:
    doc = dict(_jsonable(obj))
    if prov is not None:
        doc["provenance"] = _jsonable(prov)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path, obj, prov=None):
    Path(path).write_bytes(render_json(obj, prov).encode())


def write_matrix(path, m):
    """Two little-endian uint64 (rows, cols), then row-major float64."""
    m = np.ascontiguousarray(np.asarray(m, dtype="<f8"))
    if m.ndim != 2:
        raise ValueError("matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", *m.shape))
        fh.write(m.tobytes(order="C"))


def read_matrix(path):
    raw = Path(path).read_bytes()
    rows, cols = struct.unpack("<QQ", raw[:16])
    data = np.frombuffer(raw[16:], dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).copy()
