"""
Conforming triangulations of axis-aligned rectangles.

Meshes are built as ``nx x ny`` rectangles, each cut along its
bottom-left to top-right diagonal, and refined by the regular 1:4
(edge midpoint) rule. Boundary edges carry one of four tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TAGS = ("left", "right", "bottom", "top")

# local edge e is opposite local vertex e
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])

# parent local edge -> the two (child, child local edge) pieces it splits into,
# for the child ordering used in refine_regular
_CHILD_BOUNDARY = {
    0: ((1, 0), (2, 0)),
    1: ((0, 1), (2, 1)),
    2: ((0, 2), (1, 2)),
}


class MeshError(ValueError):
    """Invalid mesh construction parameters."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Triangular mesh.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counter-clockwise vertex triples
    boundary_edges : (nb, 3) int array of rows ``(cell, local_edge, tag)``;
        ``tag`` indexes :data:`BOUNDARY_TAGS`
    level : int
        refinement generation, 0 for a freshly built mesh
    """

    vertices: np.ndarray
    cells: np.ndarray
    boundary_edges: np.ndarray
    level: int = 0
    edges: np.ndarray = field(init=False, repr=False)
    cell_edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        cells = np.ascontiguousarray(self.cells, dtype=np.int64)
        bnd = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 3)
        for arr in (vertices, cells, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "boundary_edges", bnd)
        edges, cell_edges = _edge_tables(cells)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "cell_edges", cell_edges)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def diameters(self) -> np.ndarray:
        """Longest edge length of every cell."""
        p = self.vertices[self.cells]
        lengths = np.stack(
            [np.linalg.norm(p[:, j] - p[:, i], axis=1) for i, j in LOCAL_EDGES],
            axis=1,
        )
        return lengths.max(axis=1)

    @property
    def h_max(self) -> float:
        return float(self.diameters().max())

    def boundary_edge_vertices(self) -> np.ndarray:
        """Vertex pairs ``(nb, 2)`` of the tagged boundary edges."""
        c, e = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        return self.cells[c[:, None], LOCAL_EDGES[e]]

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edge_vertices())

    def boundary_edge_ids(self) -> np.ndarray:
        c, e = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        return np.unique(self.cell_edges[c, e])

    def __repr__(self):
        return (f"Mesh(level={self.level}, vertices={self.num_vertices}, "
                f"cells={self.num_cells}, h_max={self.h_max:.4g})")


def _edge_tables(cells):
    """Unique edges sorted lexicographically and the cell -> edge map."""
    if cells.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros((0, 3), dtype=np.int64)
    local = cells[:, LOCAL_EDGES]  # (nc, 3, 2)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    return edges, inverse.reshape(-1, 3)


def build_rectangle_mesh(x0, y0, x1, y1, nx, ny) -> Mesh:
    """
    Uniform triangulation of ``[x0, x1] x [y0, y1]``.

    Every one of the ``nx * ny`` rectangles is split along the diagonal
    from its bottom-left to its top-right corner.
    """
    if not (np.isfinite([x0, y0, x1, y1]).all() and x1 > x0 and y1 > y0):
        raise MeshError(f"invalid extents ({x0}, {y0}) - ({x1}, {y1})")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise MeshError(f"invalid subdivision counts nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j = y index
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    bl, br, tl, tr = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    lower = np.column_stack([bl, br, tr])
    upper = np.column_stack([bl, tr, tl])
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    # rectangle r = j*nx + i owns cells 2r (lower) and 2r+1 (upper)
    rect = J * nx + I
    bnd = []
    tag = {name: k for k, name in enumerate(BOUNDARY_TAGS)}
    # lower triangle (bl, br, tr): edge 2 = bl-br (bottom), edge 0 = br-tr (right)
    # upper triangle (bl, tr, tl): edge 0 = tr-tl (top), edge 1 = tl-bl (left)
    for r, i, j in zip(rect, I, J):
        if j == 0:
            bnd.append((2 * r, 2, tag["bottom"]))
        if i == nx - 1:
            bnd.append((2 * r, 0, tag["right"]))
        if j == ny - 1:
            bnd.append((2 * r + 1, 0, tag["top"]))
        if i == 0:
            bnd.append((2 * r + 1, 1, tag["left"]))
    return Mesh(vertices, cells, np.array(bnd, dtype=np.int64))


def refine_regular(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """
    Split every cell into four by its edge midpoints.

    Returns
    -------
    fine : Mesh
    parent : (4 * nc,) int array
        parent cell of every child cell; children of cell ``c`` are
        ``4c .. 4c+3``, the last one being the interior triangle.
    """
    nv = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])

    v0, v1, v2 = mesh.cells.T
    m0, m1, m2 = (nv + mesh.cell_edges).T
    children = np.stack([
        np.column_stack([v0, m2, m1]),
        np.column_stack([m2, v1, m0]),
        np.column_stack([m1, m0, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.num_cells), 4)

    bnd = []
    for c, e, t in mesh.boundary_edges:
        for child, ce in _CHILD_BOUNDARY[int(e)]:
            bnd.append((4 * c + child, ce, t))
    fine = Mesh(vertices, children, np.array(bnd, dtype=np.int64).reshape(-1, 3),
                level=mesh.level + 1)
    return fine, parent


def refine_uniformly(mesh: Mesh, times: int) -> Mesh:
    for _ in range(times):
        mesh, _ = refine_regular(mesh)
    return mesh


def validate(mesh: Mesh, tol: float = 1e-12) -> list[str]:
    """
    Check orientation, conformity and boundary closure.

    Returns a list of human-readable violations; an empty list means
    the mesh is valid.
    """
    problems = []
    if mesh.num_cells == 0:
        return ["mesh has no cells"]
    if mesh.cells.min() < 0 or mesh.cells.max() >= mesh.num_vertices:
        return ["cell references a vertex index out of range"]

    areas = mesh.signed_areas()
    scale = max(float(np.abs(areas).max()), 1.0e-300)
    for c in np.flatnonzero(areas <= tol * scale):
        problems.append(f"cell {c} has non-positive signed area {areas[c]:.3e}")

    # edge multiplicity
    counts = np.bincount(mesh.cell_edges.ravel(), minlength=mesh.num_edges)
    for e in np.flatnonzero(counts > 2):
        problems.append(f"edge {tuple(mesh.edges[e])} is shared by {counts[e]} cells")

    # hanging nodes: a vertex strictly inside an edge it does not end
    used = np.unique(mesh.cells)
    pts = mesh.vertices[used]
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    for start in range(0, mesh.num_edges, 256):
        sl = slice(start, start + 256)
        d = b[sl] - a[sl]
        rel = pts[None, :, :] - a[sl, None, :]
        s = np.einsum("eik,ek->ei", rel, d) / (length[sl, None] ** 2)
        cross = rel[..., 0] * d[:, None, 1] - rel[..., 1] * d[:, None, 0]
        on_line = np.abs(cross) <= tol * length[sl, None] ** 2
        inside = (s > tol) & (s < 1 - tol)
        for e_loc, v_loc in zip(*np.nonzero(on_line & inside)):
            e = start + e_loc
            problems.append(
                f"hanging vertex {used[v_loc]} on edge {tuple(mesh.edges[e])}")

    # boundary closure: single-cell edges must be exactly the tagged edges
    single = set(np.flatnonzero(counts == 1).tolist())
    tagged = mesh.cell_edges[mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]]
    tagged_set = set(tagged.tolist())
    if len(tagged_set) != len(tagged):
        problems.append("a boundary edge is tagged more than once")
    for e in sorted(single - tagged_set):
        problems.append(f"edge {tuple(mesh.edges[e])} lies on the boundary but is untagged")
    for e in sorted(tagged_set - single):
        problems.append(f"tagged boundary edge {tuple(mesh.edges[e])} is interior")
    return problems


def write_mesh(mesh: Mesh, path) -> None:
    """Write the line-based ``triangles 2d`` text format."""
    lines = ["triangles 2d", str(mesh.num_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.num_cells))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    lines.append(str(len(mesh.boundary_edges)))
    lines += [f"{c} {e} {t}" for c, e, t in mesh.boundary_edges.tolist()]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        tokens = [ln.strip() for ln in fh if ln.strip()]
    if tokens[0] != "triangles 2d":
        raise MeshError(f"{path}: not a 'triangles 2d' mesh file")
    pos = 1

    def block(ncols, dtype):
        nonlocal pos
        n = int(tokens[pos])
        rows = [ln.split() for ln in tokens[pos + 1:pos + 1 + n]]
        pos += 1 + n
        arr = np.array(rows, dtype=dtype).reshape(n, ncols)
        return arr

    vertices = block(2, float)
    cells = block(3, np.int64)
    bnd = block(3, np.int64)
    return Mesh(vertices, cells, bnd)
