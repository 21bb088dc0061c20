"""Portable field files (``.pbf``) and CSV export.

A ``.pbf`` file is ``b"PBF1"``, a little-endian ``uint32`` header length,
a UTF-8 JSON header and the nodal values as little-endian float64 in
row-major node order.  The header is written with sorted keys so that equal
fields give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import InvalidFieldError
from .grid import Field, Grid

__all__ = ["write_pbf", "read_pbf", "pbf_bytes", "write_csv"]

MAGIC = b"PBF1"
ENCODING = "float64-le"


def pbf_bytes(u: Field) -> bytes:
    header = dict(u.grid.to_dict(), value_encoding=ENCODING, order="C", masked=u.masked)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    data = np.ascontiguousarray(u.values, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<I", len(head)) + head + data


def write_pbf(u: Field, path) -> Path:
    path = Path(path)
    path.write_bytes(pbf_bytes(u))
    return path


def read_pbf(path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise InvalidFieldError(f"{path}: not a .pbf file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    if header.get("value_encoding") != ENCODING or header.get("order", "C") != "C":
        raise InvalidFieldError(f"{path}: unsupported encoding {header.get('value_encoding')!r}")
    grid = Grid.from_dict(header)
    vals = np.frombuffer(raw[8 + hlen:], dtype="<f8")
    if vals.size != grid.size:
        raise InvalidFieldError(f"{path}: expected {grid.size} values, found {vals.size}")
    return Field(grid, vals.reshape(grid.shape).astype(float), masked=header.get("masked", True))


def write_csv(u: Field, path, max_nodes: int = 2_000_000) -> Path:
    """One row per node: coordinates ``x0..x{N-1}`` then ``value``."""
    grid = u.grid
    if grid.size > max_nodes:
        raise InvalidFieldError(f"grid has {grid.size} nodes; CSV export is capped at {max_nodes}")
    path = Path(path)
    axes = np.meshgrid(*([grid.axis] * grid.dim), indexing="ij")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{k}" for k in range(grid.dim)] + ["value"])
        flat = [a.ravel() for a in axes] + [u.values.ravel()]
        for row in zip(*flat):
            writer.writerow([repr(float(v)) for v in row])
    return path
