"""File exports: field CSV/PGM, route dumps, reports."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np


def write_field_csv(field, path) -> None:
    """One row per cell: x_mm, y_mm, z_layer, value (cell centers)."""
    v = field.values
    nz, ny, nx = v.shape
    x = (np.arange(nx) + 0.5) * field.dx
    y = (np.arange(ny) + 0.5) * field.dy
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_mm", "y_mm", "z_layer", "value"])
        for z in range(nz):
            for j in range(ny):
                for i in range(nx):
                    w.writerow([repr(float(x[i])), repr(float(y[j])), z, repr(float(v[z, j, i]))])


def read_field_csv(path) -> list[tuple[float, float, int, float]]:
    with open(path) as fh:
        r = csv.DictReader(fh)
        return [(float(d["x_mm"]), float(d["y_mm"]), int(d["z_layer"]), float(d["value"])) for d in r]


def to_gray(plane: np.ndarray) -> np.ndarray:
    """Min-max normalize to 0..255; first output row is the largest y."""
    a = np.asarray(plane, dtype=float)
    lo, hi = float(a.min()), float(a.max())
    if hi > lo:
        g = np.rint((a - lo) / (hi - lo) * 255.0)
    else:
        g = np.zeros_like(a)
    return g.astype(np.uint8)[::-1]


def write_pgm(plane: np.ndarray, path) -> None:
    g = to_gray(plane)
    h, w = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(g.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    # header: magic, width, height, maxval, then exactly one whitespace byte
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM")
    w, h, maxval = map(int, m.groups())
    if maxval != 255:
        raise ValueError("only 8-bit PGM supported")
    return np.frombuffer(data[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)


def write_field_planes(field, outdir, prefix: str) -> list[Path]:
    outdir = Path(outdir)
    paths = []
    for z in range(field.values.shape[0]):
        p = outdir / f"{prefix}_z{z:02d}_{field.roles[z]}.pgm"
        write_pgm(field.values[z], p)
        paths.append(p)
    return paths


def write_route_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["net", "segment", "x0", "y0", "x1", "y1", "wires"])
        for net, k, x0, y0, x1, y1, wires in rows:
            w.writerow([net, k, repr(float(x0)), repr(float(y0)), repr(float(x1)), repr(float(y1)), wires])


def dump_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
