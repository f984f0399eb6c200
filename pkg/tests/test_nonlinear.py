import numpy as np
import pytest
import scipy.sparse as sp

from rothe_pns.constitutive import StressModel
from rothe_pns.elements import build_space
from rothe_pns.experiments import VortexInitialData
from rothe_pns.forms import DiscreteState
from rothe_pns.mesh import build_rectangle_mesh, refine_uniformly
from rothe_pns.nonlinear import (FactorizationError, NewtonConfig, NewtonError, SolveStats,
                                 export_matrix, newton_solve, sparse_factor_solve)
from rothe_pns.timestepping import TimeGrid, project_initial, step


def test_scalar_quadratic():
    x, st = newton_solve(lambda x: x ** 2 - 4, lambda x: np.diag(2 * x), [3.0])
    assert x[0] == pytest.approx(2.0, abs=1e-9)
    assert st.iterations <= 6
    assert len(st.residuals) == st.iterations + 1
    r = st.residuals
    # quadratic decay: r_{k+1} <= C r_k^2
    assert all(b <= 1.0 * a * a for a, b in zip(r[1:], r[2:]) if a < 0.1)


def test_linear_one_iteration():
    x, st = newton_solve(lambda x: x, lambda x: np.eye(1), [5.0])
    assert st.iterations == 1 and x[0] == 0.0


def test_already_converged():
    x, st = newton_solve(lambda x: x, lambda x: np.eye(1), [0.0])
    assert st.iterations == 0 and st.residuals == [0.0]


def test_damping_keeps_residual_monotone():
    # arctan overshoots without damping from x0 = 3
    x, st = newton_solve(np.arctan, lambda x: np.diag(1 / (1 + x ** 2)), [3.0])
    assert abs(x[0]) < 1e-8
    assert sum(st.damping) > 0
    assert all(b < a for a, b in zip(st.residuals, st.residuals[1:]))


def test_failure_carries_stats():
    with pytest.raises(NewtonError) as info:
        newton_solve(lambda x: x ** 2 + 1, lambda x: np.diag(2 * x), [0.3],
                     NewtonConfig(max_iter=5))
    assert isinstance(info.value.stats, SolveStats)
    assert info.value.stats.iterations >= 1


def test_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(abs_tol=0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)


def test_sparse_identity(rng):
    b = rng.standard_normal(7)
    assert np.array_equal(sparse_factor_solve(sp.eye(7), b), b)


def test_zero_diagonal_pivoting():
    x = sparse_factor_solve(sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 2.0]))
    assert np.allclose(x, [2.0, 1.0], rtol=0, atol=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_random_spd_against_dense(seed):
    rng = np.random.default_rng(seed)
    B = sp.random(200, 200, density=0.02, random_state=seed, format="csr")
    A = B @ B.T + sp.eye(200) * 0.5
    b = rng.standard_normal(200)
    x = sparse_factor_solve(A, b)
    xd = np.linalg.solve(A.toarray(), b)
    assert np.linalg.norm(x - xd) <= 1e-10 * np.linalg.norm(xd)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_singular_matrix():
    with pytest.raises(FactorizationError):
        sparse_factor_solve(sp.csr_matrix([[1.0, 1.0], [1.0, 1.0]]), np.ones(2))
    with pytest.raises(FactorizationError):
        sparse_factor_solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))


def test_fem_step_quadratic_convergence():
    V = build_space(refine_uniformly(build_rectangle_mesh(0, 0, 3, 1, 3, 1), 2), "taylor_hood")
    u0 = project_initial(V, VortexInitialData())
    prev = DiscreteState(u0, np.zeros(V.n_p), 0.0)
    _, st = step(V, StressModel(2.0, 1e-2, 0.05), prev, TimeGrid(1.0, 10), 1,
                 newton_cfg=NewtonConfig(abs_tol=1e-13, rel_tol=1e-15))
    assert st.observed_order() >= 1.9


def test_export_matrix(tmp_path):
    A = sp.csr_matrix([[0.0, 2.5], [1.0, 0.0]])
    path = tmp_path / "A.txt"
    export_matrix(A, path)
    assert path.read_text() == "0 1 2.5\n1 0 1.0\n"
