import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rothe_pns.mesh import (BOUNDARY_TAGS, Mesh, MeshError, build_rectangle_mesh,
                            read_mesh, refine_regular, refine_uniformly, validate,
                            write_mesh)


def test_unit_square(unit_square):
    m = unit_square
    assert (m.num_cells, m.num_vertices) == (2, 4)
    assert m.h_max == pytest.approx(math.sqrt(2), rel=1e-15)
    assert validate(m) == []


def test_paper_base_mesh():
    m = build_rectangle_mesh(-1, -1, 1, 1, 2, 2)
    assert m.num_cells == 8
    assert m.h_max == pytest.approx(2 * math.sqrt(2) / 2, rel=1e-15)


def test_vortex_mesh_cell_count():
    assert build_rectangle_mesh(0, 0, 3, 1, 48, 16).num_cells == 1536


def test_diagonal_bottom_left_to_top_right(unit_square):
    m = unit_square
    diag = {tuple(sorted(e)) for e in m.edges.tolist()} & {(0, 3), (1, 2)}
    assert diag == {(0, 3)}


@pytest.mark.parametrize("args", [(0, 0, 0, 1, 1, 1), (0, 0, 1, -1, 1, 1),
                                  (0, 0, 1, 1, 0, 1), (0, 0, 1, 1, 1, 0),
                                  (0, 0, float("nan"), 1, 1, 1)])
def test_invalid_rectangle(args):
    with pytest.raises(MeshError):
        build_rectangle_mesh(*args)


def test_refine_unit_square(unit_square):
    fine, parent = refine_regular(unit_square)
    assert fine.num_cells == 8
    assert fine.h_max == pytest.approx(math.sqrt(2) / 2, rel=1e-15)
    assert np.array_equal(np.bincount(parent), [4, 4])
    assert fine.level == 1
    assert validate(fine) == []


def test_refine_counts_and_table_h(eight_cells):
    counts = [eight_cells.num_cells]
    m = eight_cells
    for n in range(2, 5):
        m, _ = refine_regular(m)
        counts.append(m.num_cells)
        assert m.h_max == 2 * math.sqrt(2) / 2 ** n
    assert counts[:3] == [8, 32, 128]


@settings(max_examples=25, deadline=None)
@given(nx=st.integers(1, 4), ny=st.integers(1, 4), times=st.integers(0, 3),
       w=st.floats(0.1, 5), h=st.floats(0.1, 5))
def test_refinement_properties(nx, ny, times, w, h):
    m0 = build_rectangle_mesh(0.0, 0.0, w, h, nx, ny)
    m = refine_uniformly(m0, times)
    assert validate(m) == []
    assert m.signed_areas().sum() == pytest.approx(w * h, rel=1e-13)
    assert m.h_max == pytest.approx(m0.h_max / 2 ** times, rel=1e-14)
    # every vertex on the rectangle boundary lies on a tagged edge
    V = m.vertices
    on_bnd = np.flatnonzero(np.isclose(V[:, 0], 0) | np.isclose(V[:, 0], w)
                            | np.isclose(V[:, 1], 0) | np.isclose(V[:, 1], h))
    assert set(on_bnd.tolist()) == set(m.boundary_vertices().tolist())


def test_boundary_tags_geometry():
    m = refine_uniformly(build_rectangle_mesh(0, 0, 3, 1, 3, 1), 2)
    V = m.vertices
    for cell, edge, tag in m.boundary_edges.tolist():
        a, b = m.edges[m.cell_edges[cell, edge]]
        name = BOUNDARY_TAGS[tag]
        coord, value = {"left": (0, 0.0), "right": (0, 3.0),
                        "bottom": (1, 0.0), "top": (1, 1.0)}[name]
        assert V[a, coord] == pytest.approx(value) and V[b, coord] == pytest.approx(value)


def test_validate_flipped_cell(unit_square):
    cells = unit_square.cells.copy()
    cells[0] = cells[0][::-1]
    bad = Mesh(unit_square.vertices, cells, unit_square.boundary_edges)
    assert any("non-positive signed area" in p for p in validate(bad))


def test_validate_hanging_node(unit_square):
    # split only the lower triangle (0, 1, 3) at the midpoint of the diagonal
    V = np.vstack([unit_square.vertices, [[0.5, 0.5]]])
    cells = np.array([[0, 1, 4], [4, 1, 3], [0, 3, 2]])
    bnd = np.array([[0, 2, 2], [1, 0, 1], [2, 0, 3], [2, 1, 0]])
    problems = validate(Mesh(V, cells, bnd))
    assert any("hanging vertex 4" in p for p in problems)


def test_mesh_text_roundtrip(tmp_path):
    m = refine_uniformly(build_rectangle_mesh(-1, -1, 1, 1, 2, 2), 1)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    assert path.read_text().startswith("triangles 2d\n")
    back = read_mesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.boundary_edges, m.boundary_edges)
