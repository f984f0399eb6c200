import numpy as np
import pytest

from rothe_pns.elements import build_space, interpolate
from rothe_pns.forms import DiscreteState
from rothe_pns.mesh import build_rectangle_mesh, refine_uniformly
from rothe_pns.vtk import emit_fields, read_vtk


def test_zero_state(tmp_path, small_space):
    path = emit_fields(DiscreteState.zero(small_space), small_space, tmp_path / "z.vtk")
    d = read_vtk(path)
    assert np.all(d["point_data"]["velocity"] == 0)
    assert np.all(d["point_data"]["pressure"] == 0)
    assert np.all(d["cell_types"] == 5)
    assert d["points"].shape == (small_space.mesh.num_vertices, 3)


def test_two_cell_mesh(tmp_path, unit_square):
    V = build_space(unit_square, "taylor_hood")
    d = read_vtk(emit_fields(DiscreteState.zero(V), V, tmp_path / "a.vtk"))
    assert d["points"].shape[0] == 4 and d["cells"].shape[0] == 2
    assert np.array_equal(d["cells"], unit_square.cells)


def test_roundtrip_coefficients(tmp_path, family, rng):
    V = build_space(refine_uniformly(build_rectangle_mesh(0, 0, 3, 1, 3, 1), 1), family)
    s = DiscreteState(rng.standard_normal(V.n_u), rng.standard_normal(V.n_p), 0.37)
    d = read_vtk(emit_fields(s, V, tmp_path / "r.vtk"))
    nv, n = V.mesh.num_vertices, V.n_scalar
    vel = d["point_data"]["velocity"]
    assert np.abs(vel[:, 0] - s.u[:nv]).max() <= 1e-12
    assert np.abs(vel[:, 1] - s.u[n:n + nv]).max() <= 1e-12
    assert np.all(vel[:, 2] == 0)
    assert np.abs(d["points"][:, :2] - V.mesh.vertices).max() <= 1e-12
    cell_p = s.pr[V.pres_dofs].mean(axis=1)
    assert np.abs(d["cell_data"]["pressure_cell"] - cell_p).max() <= 1e-12
    if not V.family.discontinuous_pressure:
        assert np.abs(d["point_data"]["pressure"] - s.pr[:nv]).max() <= 1e-12


def test_interpolated_field_at_nodes(tmp_path, eight_cells):
    V = build_space(eight_cells, "mini")
    u = interpolate(V, lambda x: np.stack([x[:, 1], -x[:, 0]], axis=1))
    d = read_vtk(emit_fields(DiscreteState(u, np.zeros(V.n_p), 0.0), V, tmp_path / "i.vtk"))
    P = d["points"]
    assert np.allclose(d["point_data"]["velocity"][:, :2], np.stack([P[:, 1], -P[:, 0]], axis=1),
                       atol=1e-14)


def test_bit_stable(tmp_path, small_space, rng):
    s = DiscreteState(rng.standard_normal(small_space.n_u), rng.standard_normal(small_space.n_p), 1.0)
    a = emit_fields(s, small_space, tmp_path / "a.vtk")
    b = emit_fields(s, small_space, tmp_path / "b.vtk")
    assert open(a, "rb").read() == open(b, "rb").read()


def test_reader_rejects_other_files(tmp_path):
    p = tmp_path / "x.vtk"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        read_vtk(p)


def test_state_size_mismatch(tmp_path, small_space):
    with pytest.raises(ValueError):
        emit_fields(DiscreteState(np.zeros(3), np.zeros(2), 0.0), small_space, tmp_path / "e.vtk")
