import numpy as np
import pytest

from rothe_pns.constitutive import StressModel
from rothe_pns.elements import build_space
from rothe_pns.experiments import SteadyPolynomialSolution, VortexInitialData, vortex_viscosity
from rothe_pns.forms import DiscreteState, divergence_matrix, mass_matrix
from rothe_pns.mesh import build_rectangle_mesh, refine_uniformly
from rothe_pns.nonlinear import NewtonConfig
from rothe_pns.timestepping import (StepFailure, TimeGrid, Trajectory, backward_difference,
                                    energy_identity_check, interpolant_eval, project_initial,
                                    read_checkpoint, run, stability_report, step,
                                    write_checkpoint)


@pytest.fixture(scope="module")
def vortex_run():
    mesh = refine_uniformly(build_rectangle_mesh(0, 0, 3, 1, 3, 1), 2)
    V = build_space(mesh, "mini")
    model = StressModel(11 / 5, 1e-2, vortex_viscosity)
    u0 = project_initial(V, VortexInitialData())
    return run(V, model, u0, TimeGrid(0.2, 20)), model


def test_time_grid():
    g = TimeGrid(0.5, 250)
    assert g.tau == 0.5 / 250
    assert g.interval(1) == (0.0, g.tau)
    assert g.time(250) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 5)


def test_backward_difference():
    c = np.array([1.0, -2.0])
    tau = 0.1
    assert np.all(backward_difference(c, c, tau) == 0)
    for k in range(1, 5):
        assert np.allclose(backward_difference(k * tau * c, (k - 1) * tau * c, tau), c)
        assert np.allclose(backward_difference((k * tau) ** 2 * c, ((k - 1) * tau) ** 2 * c, tau),
                           (2 * k - 1) * tau * c)
    with pytest.raises(ValueError):
        backward_difference(np.zeros(2), np.zeros(3), tau)


def test_zero_data_stays_zero(small_space):
    model = StressModel(11 / 5, 1e-4)
    traj = run(small_space, model, np.zeros(small_space.n_u), TimeGrid(1.0, 3))
    assert all(np.all(s.u == 0) and np.all(s.pr == 0) for s in traj.states)
    assert all(st.iterations == 0 for st in traj.newton)
    led = stability_report(traj)
    assert np.all(led.lhs == 0) and np.all(led.rhs == 0)


def test_discrete_fixed_point():
    sol = SteadyPolynomialSolution()
    model = StressModel(2.0, 0.3)
    V = build_space(refine_uniformly(build_rectangle_mesh(0, 0, 1, 1, 1, 1), 2), "taylor_hood")
    kw = dict(rhs_f=sol.forcing(model), bc=sol.trace, convection=False)
    s = DiscreteState(project_initial(V, lambda x: sol.velocity(0, x), sol.trace),
                      np.zeros(V.n_p), 0.0)
    big = TimeGrid(1e12, 1)
    for _ in range(2):
        s, _ = step(V, model, s, big, 1, **kw)
    s = DiscreteState(s.u, s.pr, 0.0, s.mult)
    nxt, _ = step(V, model, s, TimeGrid(1.0, 10), 1, **kw)
    assert np.abs(nxt.u - s.u).max() <= 1e-9 * np.abs(s.u).max()


def test_run_single_step_equals_step(small_space, rng):
    model = StressModel(11 / 5, 1e-2)
    u0 = project_initial(small_space, lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1))
    traj = run(small_space, model, u0, TimeGrid(0.1, 1))
    s, _ = step(small_space, model, traj.states[0], TimeGrid(0.1, 1), 1)
    assert len(traj) == 2 and traj.complete
    assert np.array_equal(traj.states[1].u, s.u)


def test_projection_is_discretely_divergence_free(small_space):
    u0 = project_initial(small_space, VortexInitialData(regions=((-1.0, 1.0, 1.0),), height=1.0))
    D = divergence_matrix(small_space)
    assert np.abs(D @ u0).max() <= 1e-12 * max(1.0, np.abs(u0).max())


def test_vortex_energy_decay(vortex_run):
    traj, _ = vortex_run
    M = mass_matrix(traj.space)
    kinetic = [float(s.u @ (M @ s.u)) for s in traj.states]
    assert all(b <= a + 1e-12 for a, b in zip(kinetic, kinetic[1:]))
    assert max(st.iterations for st in traj.newton) <= 10


def test_energy_identity_per_step(vortex_run):
    traj, _ = vortex_run
    M = mass_matrix(traj.space)
    for k in range(1, len(traj.states)):
        scale = 1 + float(traj.states[k].u @ (M @ traj.states[k].u)) / traj.grid.tau
        assert energy_identity_check(traj, k, M) <= 1e-10 * scale
    with pytest.raises(ValueError):
        energy_identity_check(traj, 0)


def test_energy_identity_random_vectors(small_space, rng):
    M = mass_matrix(small_space)
    tau = 0.01
    traj = Trajectory(small_space, TimeGrid(tau, 1),
                      [DiscreteState(rng.standard_normal(small_space.n_u), np.zeros(small_space.n_p), t)
                       for t in (0, tau)])
    uk = traj.states[1].u
    assert energy_identity_check(traj, 1, M) <= 1e-12 * (1 + float(uk @ (M @ uk)) / tau)
    same = Trajectory(small_space, TimeGrid(tau, 1), [traj.states[0]] * 2)
    assert energy_identity_check(same, 1, M) == 0.0


def test_stability_ledger(vortex_run):
    traj, model = vortex_run
    led = stability_report(traj)
    assert np.all(led.holds)
    assert np.all(np.diff(led.kinetic) <= 0)
    assert led.balance_defect.max() <= 1e-8 * led.kinetic[0]
    again = stability_report(traj, model)
    assert np.allclose(again.lhs, led.lhs, rtol=1e-12)


def test_interpolants(vortex_run):
    traj, _ = vortex_run
    tau = traj.grid.tau
    k = 5
    for kind in ("constant", "affine"):
        assert np.allclose(interpolant_eval(traj, k * tau, kind), traj.states[k].u)
    mid = (k - 0.5) * tau
    assert np.allclose(interpolant_eval(traj, mid, "affine"),
                       0.5 * (traj.states[k].u + traj.states[k - 1].u))
    assert np.array_equal(interpolant_eval(traj, mid, "constant"), traj.states[k].u)
    with pytest.raises(ValueError):
        interpolant_eval(traj, 0.0)
    with pytest.raises(ValueError):
        interpolant_eval(traj, 0.3)
    with pytest.raises(ValueError):
        interpolant_eval(traj, tau, "cubic")


def test_step_failure_keeps_partial_trajectory():
    mesh = refine_uniformly(build_rectangle_mesh(0, 0, 3, 1, 3, 1), 1)
    V = build_space(mesh, "mini")
    u0 = project_initial(V, VortexInitialData())
    cfg = NewtonConfig(abs_tol=1e-14, rel_tol=1e-16, max_iter=1)
    with pytest.raises(StepFailure) as info:
        run(V, StressModel(11 / 5, 1e-2, 1.0), u0, TimeGrid(1.0, 5), newton_cfg=cfg)
    assert info.value.k == 1
    assert len(info.value.trajectory.states) == 1


def test_checkpoint_roundtrip(vortex_run, tmp_path):
    traj, _ = vortex_run
    paths = write_checkpoint(traj, tmp_path)
    assert len(paths) == len(traj.states)
    assert paths[3].endswith("level_00003.txt")
    k, s = read_checkpoint(paths[3])
    assert k == 3 and s.t == traj.states[3].t
    assert np.array_equal(s.u, traj.states[3].u) and np.array_equal(s.pr, traj.states[3].pr)
