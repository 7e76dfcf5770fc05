"""Legacy ASCII VTK and CSV writers used by the command line tool."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .fem import DiscreteField
from .mesh import Mesh

VTK_TRIANGLE = 5


def fmt(value) -> str:
    """17 significant digits for floats (lossless round trip), plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if value is None:
        return ""
    return str(value)


def vertex_velocity(u: DiscreteField) -> np.ndarray:
    """Velocity at mesh vertices (vertex nodes come first in every space)."""
    return u.nodal()[: u.space.mesh.n_vertices]


def vtk_text(mesh: Mesh, point_vectors=None, point_scalars=None, cell_scalars=None, title="adaptive penalty") -> str:
    """Unstructured grid of triangles with optional point and cell arrays."""
    out = io.StringIO()
    nv, nt = mesh.n_vertices, mesh.n_triangles
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title.replace("\n", " ")[:255] + "\n")
    out.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {nv} double\n")
    for x, y in mesh.vertices:
        out.write(f"{fmt(x)} {fmt(y)} 0\n")
    out.write(f"CELLS {nt} {4 * nt}\n")
    for a, b, c in mesh.triangles:
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {nt}\n")
    out.write(f"{VTK_TRIANGLE}\n" * nt)
    point_vectors = point_vectors or {}
    point_scalars = point_scalars or {}
    if point_vectors or point_scalars:
        out.write(f"POINT_DATA {nv}\n")
        for name, vec in point_vectors.items():
            vec = np.asarray(vec, dtype=float)
            out.write(f"VECTORS {name} double\n")
            for vx, vy in vec:
                out.write(f"{fmt(vx)} {fmt(vy)} 0\n")
        for name, values in point_scalars.items():
            _scalars(out, name, values, nv)
    if cell_scalars:
        out.write(f"CELL_DATA {nt}\n")
        for name, values in cell_scalars.items():
            _scalars(out, name, values, nt)
    return out.getvalue()


def _scalars(out, name, values, n):
    values = np.asarray(values, dtype=float)
    if values.shape != (n,):
        raise ValueError(f"array {name!r} has shape {values.shape}, expected ({n},)")
    out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
    out.write("".join(f"{fmt(v)}\n" for v in values))


def write_vtk(path: Path, mesh: Mesh, **arrays) -> Path:
    path = Path(path)
    path.write_text(vtk_text(mesh, **arrays))
    return path


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_summary(path: Path, summary: dict) -> Path:
    """Two-column ``key,value`` table."""
    return write_csv(path, ["key", "value"], list(summary.items()))


def read_summary(path: Path) -> dict[str, str]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return {k: v for k, v in reader}
