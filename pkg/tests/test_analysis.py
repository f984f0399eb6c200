import math

import numpy as np
import pytest
from scipy import integrate

from rothe_pns.analysis import (ConvergenceReport, ExactSolution, PlanEvaluator, combine_F,
                                eoc, error_F, error_L2_time_max, singular_quadrature,
                                spatial_errors)
from rothe_pns.constitutive import StressModel, sym
from rothe_pns.elements import build_space, interpolate
from rothe_pns.experiments import SingularSolution, singular_alpha
from rothe_pns.forms import DiscreteState
from rothe_pns.mesh import build_rectangle_mesh, refine_uniformly
from rothe_pns.timestepping import TimeGrid, Trajectory


def linear_exact(offset=(0.0, 0.0)):
    c = np.asarray(offset)

    def vel(t, x):
        x = np.asarray(x)
        return np.stack([x[..., 0] + 2 * x[..., 1], -x[..., 1]], axis=-1) + c

    def grad(t, x):
        return np.broadcast_to(np.array([[1.0, 2.0], [0.0, -1.0]]), np.shape(x)[:-1] + (2, 2))

    return ExactSolution(vel, lambda t, x: np.zeros(np.shape(x)[:-1]), grad, (0.0, 0.0))


def linear_trajectory(family="mini", K=3):
    V = build_space(build_rectangle_mesh(-1, -1, 1, 1, 2, 2), family)
    u = interpolate(V, lambda x: linear_exact().velocity(0, x))
    grid = TimeGrid(0.3, K)
    states = [DiscreteState(u, np.zeros(V.n_p), grid.time(k)) for k in range(K + 1)]
    return Trajectory(V, grid, states)


def test_exact_equals_discrete():
    traj = linear_trajectory()
    assert error_L2_time_max(traj, linear_exact()) <= 1e-13
    assert error_F(traj, linear_exact(), model=StressModel(11 / 5, 1e-4)) <= 1e-13


def test_constant_offset():
    traj = linear_trajectory("taylor_hood")
    c = (0.3, -0.4)
    e, _ = spatial_errors(traj, linear_exact(c))
    assert np.allclose(e, 0.5 * math.sqrt(4.0), rtol=1e-13)


def test_p2_F_error_is_gradient_error(rng):
    traj = linear_trajectory("crouzeix_raviart")
    V = traj.space
    traj.states[1] = DiscreteState(traj.states[1].u + 0.1 * rng.standard_normal(V.n_u),
                                   traj.states[1].pr, traj.states[1].t)
    exact = linear_exact()
    plan = singular_quadrature(V.mesh, None)
    ev = PlanEvaluator.build(V, plan)
    _, eF = spatial_errors(traj, exact, StressModel(2.0, 0.7), evaluator=ev)
    for s, val in zip(traj.states, eF):
        _, jac = ev.velocity(s.u)
        d = sym(exact.gradient(s.t, ev.x)) - sym(jac)
        ref = math.sqrt(float(np.sum(plan.weights * np.einsum("pij,pij->p", d, d))))
        assert val == pytest.approx(ref, rel=1e-13, abs=1e-15)


def test_combine_variants():
    per = np.array([0.5, 1.0, 2.0])
    assert combine_F(per, 0.1) == pytest.approx(math.sqrt(0.1 * 5.25))
    assert combine_F(per, 0.1, "as_written") == pytest.approx(math.sqrt(0.1 * 3.5))
    with pytest.raises(ValueError):
        combine_F(per, 0.1, "cubed")
    with pytest.raises(ValueError):
        error_F(linear_trajectory(), linear_exact())


def test_plan_far_cell_uses_base_rule():
    mesh = refine_uniformly(build_rectangle_mesh(-1, -1, 1, 1, 1, 1), 3)
    plan = singular_quadrature(mesh)
    P = mesh.vertices[mesh.cells]
    far = np.flatnonzero(np.linalg.norm(P, axis=2).min(axis=1) > 0.5)
    assert np.all(plan.subdivisions[far] == 1)
    assert plan.subdivisions.max() > 16
    assert plan.weights.sum() == pytest.approx(4.0, rel=1e-13)


def test_plan_deterministic():
    mesh = refine_uniformly(build_rectangle_mesh(-1, -1, 1, 1, 1, 1), 1)
    a, b = singular_quadrature(mesh), singular_quadrature(mesh)
    assert np.array_equal(a.bary, b.bary) and np.array_equal(a.weights, b.weights)


def test_radial_oracle():
    alpha = singular_alpha(11 / 5)
    beta = 2 * (alpha - 1)
    # 8 congruent wedges of the square, r from 0 to 1/cos(theta)
    inner = integrate.quad(lambda th: math.cos(th) ** -(beta + 2), 0, math.pi / 4)[0]
    oracle = 8 * inner / (beta + 2)
    mesh = refine_uniformly(build_rectangle_mesh(-1, -1, 1, 1, 1, 1), 1)
    plan = singular_quadrature(mesh)
    r = np.linalg.norm(plan.points(mesh), axis=1)
    approx = float(np.sum(plan.weights * r ** beta))
    assert approx == pytest.approx(oracle, rel=5e-3)


def test_eoc_values():
    assert eoc([0.2, 0.1], [0.5, 0.25]) == [pytest.approx(1.0, abs=0)]
    assert eoc([4.698e-1, 2.451e-1], [1, 0.5])[0] == pytest.approx(0.939, abs=5e-4)
    # the table's inputs are rounded to four digits, hence the wider band
    assert eoc([1.256, 1.062], [1, 0.5])[0] == pytest.approx(0.243, abs=1.5e-3)


def test_eoc_scale_invariant(rng):
    e = rng.uniform(0.1, 1, 5)
    h = 0.5 ** np.arange(5)
    assert np.allclose(eoc(e, h), eoc(7.3 * e, h), rtol=1e-13)


@pytest.mark.parametrize("errors,hs", [([1.0], [1.0]), ([1.0, 0.0], [1, 0.5]),
                                       ([1.0, 0.5], [0.5, 1.0]), ([1.0, 0.5], [1.0])])
def test_eoc_invalid(errors, hs):
    with pytest.raises(ValueError):
        eoc(errors, hs)


def test_report_csv_roundtrip(tmp_path):
    rep = ConvergenceReport()
    for n, (l2, f) in enumerate([(4.698e-1, 1.256), (2.451e-1, 1.062), (1.578e-1, 0.9407)], 1):
        rep.add(n, 2 * math.sqrt(2) / 2 ** n, l2, f)
    assert rep.rows[0].EOC_L2 is None
    assert rep.rows[1].EOC_L2 == pytest.approx(0.939, abs=5e-4)
    assert rep.rows[1].EOC_tot == pytest.approx(
        math.log((4.698e-1 + 1.256) / (2.451e-1 + 1.062)) / math.log(2))
    text = rep.to_csv()
    assert text.splitlines()[0] == "n,h,e_L2,EOC_L2,e_F,EOC_F,EOC_tot"
    assert text.splitlines()[1].endswith(",-,1.256000e+00,-,-")
    path = tmp_path / "r.csv"
    rep.write_csv(path)
    assert ConvergenceReport.read_csv(path).to_csv() == text


def test_report_floor():
    rep = ConvergenceReport()
    rep.add(1, 0.5, 1e-15, 1e-14)
    rep.add(2, 0.25, 2e-15, 1e-14)
    assert not rep.reliable(rep.rows[1])


def test_singular_solution_divergence_free():
    sol = SingularSolution()
    x = np.random.default_rng(3).uniform(-1, 1, (50, 2))
    G = sol.gradient(0.4, x)
    assert np.allclose(G[:, 0, 0] + G[:, 1, 1], 0, atol=1e-13)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (sol.velocity(0.4, x + e) - sol.velocity(0.4, x - e)) / (2 * h)
        assert np.allclose(fd, G[:, :, j], rtol=1e-6, atol=1e-6)
