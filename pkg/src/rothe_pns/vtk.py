"""Legacy-VTK (ASCII, unstructured grid) output of velocity and pressure."""

from __future__ import annotations

import numpy as np

from .elements import MixedSpace
from .forms import DiscreteState

VTK_TRIANGLE = 5


def _fmt(v) -> str:
    return repr(float(v))


def vertex_fields(state: DiscreteState, space: MixedSpace):
    """
    Velocity at the vertices, vertex pressure and cell-mean pressure.

    Vertex dofs come first in the scalar numbering and the remaining
    basis functions vanish at vertices, so the vertex values are plain
    coefficients. A discontinuous pressure is averaged over the cells
    sharing a vertex.
    """
    mesh = space.mesh
    nv = mesh.num_vertices
    n = space.n_scalar
    vel = np.stack([state.u[:nv], state.u[n:n + nv]], axis=1)
    local = np.asarray(state.pr)[space.pres_dofs]                  # (nc, 3)
    cell_p = local.mean(axis=1)
    acc = np.bincount(mesh.cells.ravel(), local.ravel(), minlength=nv)
    cnt = np.bincount(mesh.cells.ravel(), minlength=nv)
    point_p = acc / np.maximum(cnt, 1)
    return vel, point_p, cell_p


def emit_fields(state: DiscreteState, space: MixedSpace, path, title="rothe-pns") -> str:
    """Write ``state`` to ``path``; returns the path."""
    state.check(space)
    mesh = space.mesh
    vel, point_p, cell_p = vertex_fields(state, space)
    nv, nc = mesh.num_vertices, mesh.num_cells
    out = ["# vtk DataFile Version 3.0", f"{title} t={_fmt(state.t)}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    out.append(f"CELLS {nc} {4 * nc}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += [str(VTK_TRIANGLE)] * nc
    out += [f"CELL_DATA {nc}", "SCALARS pressure_cell double 1", "LOOKUP_TABLE default"]
    out += [_fmt(v) for v in cell_p]
    out += [f"POINT_DATA {nv}", "VECTORS velocity double"]
    out += [f"{_fmt(a)} {_fmt(b)} 0.0" for a, b in vel]
    out += ["SCALARS pressure double 1", "LOOKUP_TABLE default"]
    out += [_fmt(v) for v in point_p]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
    return str(path)


def read_vtk(path) -> dict:
    """
    Minimal reader for files written by :func:`emit_fields`.

    Returns ``points (nv, 3)``, ``cells (nc, 3)``, ``cell_types`` and the
    ``point_data`` / ``cell_data`` dictionaries.
    """
    with open(path) as fh:
        tok = fh.read().split("\n")
    if not tok[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    if tok[2].strip() != "ASCII" or tok[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError(f"{path}: expected an ASCII unstructured grid")
    words = " ".join(tok[4:]).split()
    pos = 0

    def take(n, conv=float):
        nonlocal pos
        vals = words[pos:pos + n]
        if len(vals) != n:
            raise ValueError(f"{path}: truncated data")
        pos += n
        return np.array([conv(v) for v in vals])

    out = {"point_data": {}, "cell_data": {}}
    target = None
    count = 0
    while pos < len(words):
        kw = words[pos]
        if kw == "POINTS":
            nv = int(words[pos + 1])
            pos += 3
            out["points"] = take(3 * nv).reshape(nv, 3)
        elif kw == "CELLS":
            nc, size = int(words[pos + 1]), int(words[pos + 2])
            pos += 3
            raw = take(size, int).reshape(nc, -1)
            if np.any(raw[:, 0] != 3):
                raise ValueError(f"{path}: only triangles are supported")
            out["cells"] = raw[:, 1:]
        elif kw == "CELL_TYPES":
            n = int(words[pos + 1])
            pos += 2
            out["cell_types"] = take(n, int)
        elif kw in ("CELL_DATA", "POINT_DATA"):
            count = int(words[pos + 1])
            target = out["cell_data" if kw == "CELL_DATA" else "point_data"]
            pos += 2
        elif kw == "SCALARS":
            name = words[pos + 1]
            pos += 4 if words[pos + 3] != "LOOKUP_TABLE" else 3
            if words[pos] == "LOOKUP_TABLE":
                pos += 2
            target[name] = take(count)
        elif kw == "VECTORS":
            name = words[pos + 1]
            pos += 3
            target[name] = take(3 * count).reshape(count, 3)
        else:
            raise ValueError(f"{path}: unexpected keyword {kw!r}")
    return out
