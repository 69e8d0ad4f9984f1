"""Output formats.

* CSV tables start with ``#``-prefixed metadata lines (tool version, config
  hash, extra key=value pairs), then a header row.  Floats are written with
  17 significant digits, so values round-trip exactly.
* Field arrays are raw row-major little-endian float64 (``.bin``) with a JSON
  sidecar (``.json``) holding ``shape``, ``dtype``, ``order`` and metadata.
"""

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import __version__

TOOL = f"stochpert {__version__}"


def fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, columns, rows, meta=None):
    """Write a table; ``path`` of ``None`` or ``'-'`` returns the text instead."""
    lines = [f"# tool={TOOL}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={fmt(value)}")
    text = "\n".join(lines) + "\n"
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text += out.getvalue()
    if path is None or str(path) == "-":
        return text
    Path(path).write_text(text)
    return text


def read_csv(path):
    """``(meta, columns, rows)`` of a table written by :func:`write_csv`."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def write_field(path, array, meta=None):
    """Write ``array`` to ``path.bin`` with sidecar ``path.json``."""
    path = Path(path)
    array = np.ascontiguousarray(array, dtype="<f8")
    path.with_suffix(".bin").write_bytes(array.tobytes(order="C"))
    side = {"shape": list(array.shape), "dtype": "<f8", "order": "C", "tool": TOOL}
    side.update(meta or {})
    write_json(path.with_suffix(".json"), side)


def read_field(path):
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=side["dtype"])
    return data.reshape(side["shape"]), side


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
