"""
Implicit Euler (Rothe) time loop with a Newton solve per step.

Step ``k`` advances from level ``k - 1`` to level ``k`` at ``t_k = k tau``;
all data enter through their means over ``I_k = ((k-1) tau, k tau]``.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .elements import MixedSpace
from .forms import (DEFAULT_TIME_QUAD, DiscreteState, SparseSystem, _assemble,
                    apply_dirichlet, convective_form, dirichlet_values,
                    divergence_matrix, forcing_form, mass_matrix,
                    pressure_mean_weights, stress_form)
from .nonlinear import NewtonConfig, NewtonError, newton_solve, sparse_factor_solve

log = logging.getLogger(__name__)


class StepFailure(RuntimeError):
    """A Rothe step's Newton solve failed."""

    def __init__(self, k, stats, trajectory=None):
        super().__init__(f"Newton failed in step {k}")
        self.k = k
        self.stats = stats
        self.trajectory = trajectory


@dataclass(frozen=True)
class TimeGrid:
    T: float
    K: int

    def __post_init__(self):
        if self.K < 1 or int(self.K) != self.K:
            raise ValueError(f"step count K must be a positive integer, got {self.K}")
        if not self.T > 0:
            raise ValueError(f"horizon T must be positive, got {self.T}")

    @property
    def tau(self) -> float:
        return self.T / self.K

    def time(self, k) -> float:
        return k * self.tau

    def interval(self, k) -> tuple[float, float]:
        return ((k - 1) * self.tau, k * self.tau)


@dataclass
class EnergyEntry:
    k: int
    kinetic: float          # 1/2 |u^k|^2
    stress_work: float      # tau <[S]_k u^k, u^k>
    forcing_work: float     # tau <[f]_k, u^k>
    convective: float       # tau <B^ u^k, u^k>
    dissipation: float      # tau^2 / 2 |d_tau u^k|^2
    identity_residual: float


@dataclass
class Trajectory:
    space: MixedSpace
    grid: TimeGrid
    states: list = field(default_factory=list)
    newton: list = field(default_factory=list)
    energy: list = field(default_factory=list)

    def __len__(self):
        return len(self.states)

    @property
    def complete(self) -> bool:
        return len(self.states) == self.grid.K + 1


def backward_difference(xk, xkm1, tau):
    """``(x^k - x^{k-1}) / tau``."""
    xk = np.asarray(xk, dtype=float)
    xkm1 = np.asarray(xkm1, dtype=float)
    if xk.shape != xkm1.shape:
        raise ValueError(f"length mismatch {xk.shape} vs {xkm1.shape}")
    if not tau > 0:
        raise ValueError("tau must be positive")
    return (xk - xkm1) / tau


def project_initial(space: MixedSpace, u0, bc=None, t0=0.0, method="projection"):
    """
    Discrete initial velocity.

    ``method="projection"`` solves the L2 projection onto discretely
    divergence-free velocities with the boundary trace ``bc(t0, .)``;
    ``"nodal"`` is plain nodal interpolation.
    """
    from .elements import interpolate

    if method == "nodal":
        return interpolate(space, u0, "velocity")
    if method != "projection":
        raise ValueError(f"unknown initial-data method {method!r}")
    tab = space.tabulate()
    vals = np.asarray(u0(tab.x), dtype=float)              # (nc, nq, 2)
    loc = np.einsum("cq,qa,cqi->cia", tab.wdet, tab.phi_u, vals)
    b = np.zeros(space.n_total)
    np.add.at(b, space.cell_velocity_dofs().ravel(), loc.reshape(len(loc), -1).ravel())
    M = mass_matrix(space)
    D = divergence_matrix(space)
    mw = sp.csr_matrix(pressure_mean_weights(space)[None, :])
    A = sp.bmat([[M, D.T, None], [D, None, mw.T], [None, mw, None]], format="csr")
    trace = bc if bc is not None else None
    system = apply_dirichlet(SparseSystem(A, b), space, trace, t0)
    x = sparse_factor_solve(system.matrix, system.rhs)
    return x[:space.n_u]


def step(space, model, prev: DiscreteState, grid: TimeGrid, k, rhs_f=None, bc=None,
         newton_cfg=None, convection=True, time_quad=DEFAULT_TIME_QUAD):
    """
    Solve step ``k`` of the scheme starting Newton from ``prev``.

    Returns ``(state, stats)``; raises :class:`StepFailure`.
    """
    tau = grid.tau
    t = grid.time(k)
    dofs = space.dirichlet_dofs
    g = dirichlet_values(space, bc, t)

    def residual(x):
        s = DiscreteState.from_vector(space, x, t)
        R, _ = _assemble(space, model, s, prev, tau, k, rhs_f, convection,
                         time_quad, False)
        R[dofs] = x[dofs] - g
        return R

    def jacobian(x):
        s = DiscreteState.from_vector(space, x, t)
        R, J = _assemble(space, model, s, prev, tau, k, None, convection,
                         time_quad, True)
        return apply_dirichlet(SparseSystem(J, -R), space, bc, t, current=x).matrix

    x0 = prev.vector()
    x0[dofs] = g
    try:
        x, stats = newton_solve(residual, jacobian, x0, newton_cfg or NewtonConfig())
    except NewtonError as exc:
        raise StepFailure(k, exc.stats) from exc
    return DiscreteState.from_vector(space, x, t), stats


def _energy_entry(space, model, M, prev, cur, k, tau, rhs_f, time_quad):
    du = backward_difference(cur.u, prev.u, tau)
    return EnergyEntry(
        k=k,
        kinetic=0.5 * float(cur.u @ (M @ cur.u)),
        stress_work=tau * stress_form(space, model, cur.u, cur.u, k, tau, time_quad),
        forcing_work=tau * forcing_form(space, rhs_f, cur.u, k, tau, time_quad),
        convective=tau * convective_form(space, cur.u, cur.u),
        dissipation=0.5 * tau ** 2 * float(du @ (M @ du)),
        identity_residual=_identity_residual(M, cur.u, prev.u, tau),
    )


def run(space, model, u0, grid: TimeGrid, rhs_f=None, bc=None, newton_cfg=None,
        convection=True, time_quad=DEFAULT_TIME_QUAD, callback=None) -> Trajectory:
    """
    Full Rothe trajectory ``k = 0..K`` from the initial coefficients ``u0``.

    On a failed step the :class:`StepFailure` carries the partial
    trajectory.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (space.n_u,):
        raise ValueError(f"initial velocity has {u0.size} entries, space needs {space.n_u}")
    traj = Trajectory(space, grid)
    M = mass_matrix(space)
    state = DiscreteState(u0.copy(), np.zeros(space.n_p), 0.0)
    traj.states.append(state)
    traj.energy.append(EnergyEntry(0, 0.5 * float(u0 @ (M @ u0)), 0.0, 0.0, 0.0, 0.0, 0.0))
    for k in range(1, grid.K + 1):
        try:
            new, stats = step(space, model, state, grid, k, rhs_f, bc, newton_cfg,
                              convection, time_quad)
        except StepFailure as exc:
            exc.trajectory = traj
            raise
        traj.states.append(new)
        traj.newton.append(stats)
        traj.energy.append(_energy_entry(space, model, M, state, new, k, grid.tau,
                                         rhs_f, time_quad))
        log.debug("step %d: %d Newton iterations, |r| = %.2e", k, stats.iterations,
                  stats.residuals[-1])
        if callback is not None:
            callback(k, new)
        state = new
    return traj


def interpolant_eval(traj: Trajectory, t, kind="constant"):
    """
    Piecewise-constant (``x^k`` on ``((k-1) tau, k tau]``) or
    piecewise-affine reconstruction of the velocity at time ``t``.
    """
    grid = traj.grid
    tau = grid.tau
    if not 0 < t <= grid.T * (1 + 1e-14):
        raise ValueError(f"t = {t} outside (0, {grid.T}]")
    s = t / tau
    k = int(round(s)) if abs(s - round(s)) <= 1e-12 * max(1.0, s) else math.ceil(s)
    k = min(max(k, 1), len(traj.states) - 1)
    xk = traj.states[k].u
    if kind == "constant":
        return xk.copy()
    if kind == "affine":
        xkm1 = traj.states[k - 1].u
        return (s - (k - 1)) * xk + (k - s) * xkm1
    raise ValueError(f"kind must be 'constant' or 'affine', not {kind!r}")


def _identity_residual(M, uk, ukm1, tau):
    du = backward_difference(uk, ukm1, tau)
    a = float(du @ (M @ uk))
    b = 0.5 * (float(uk @ (M @ uk)) - float(ukm1 @ (M @ ukm1))) / tau
    c = 0.5 * tau * float(du @ (M @ du))
    return abs(a - b - c)


def energy_identity_check(traj: Trajectory, k, M=None) -> float:
    """
    ``|(d u^k, u^k) - 1/2 d |u^k|^2 - tau/2 |d u^k|^2|`` in L2; pure
    round-off for any pair of levels.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    M = mass_matrix(traj.space) if M is None else M
    return _identity_residual(M, traj.states[k].u, traj.states[k - 1].u, traj.grid.tau)


@dataclass
class StabilityLedger:
    """
    Per-level energy balance.

    ``lhs[l] = 1/2 |u^l|^2 + sum_{k<=l} tau <[S]_k u^k, u^k>`` and
    ``rhs[l] = 1/2 |u^0|^2 + sum_{k<=l} tau <[f]_k, u^k>``;
    ``dissipation[l]`` is the non-negative numerical dissipation
    ``sum tau^2/2 |d u^k|^2`` that closes the balance to an equality.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    dissipation: np.ndarray
    convective: np.ndarray
    kinetic: np.ndarray
    tol: float

    @property
    def holds(self) -> np.ndarray:
        return self.lhs <= self.rhs + self.tol

    @property
    def balance_defect(self) -> np.ndarray:
        return np.abs(self.lhs + self.dissipation + self.convective - self.rhs)


def stability_report(traj: Trajectory, model=None, rhs_f=None, tol=None,
                     time_quad=DEFAULT_TIME_QUAD) -> StabilityLedger:
    """
    Energy ledger of a trajectory. Uses the per-step entries recorded by
    :func:`run`; when ``model`` is given they are recomputed.
    """
    entries = traj.energy
    if model is not None:
        M = mass_matrix(traj.space)
        entries = [entries[0]] + [
            _energy_entry(traj.space, model, M, traj.states[k - 1], traj.states[k], k,
                          traj.grid.tau, rhs_f, time_quad)
            for k in range(1, len(traj.states))]
    kinetic = np.array([e.kinetic for e in entries])
    lhs = kinetic + np.cumsum([e.stress_work for e in entries])
    rhs = kinetic[0] + np.cumsum([e.forcing_work for e in entries])
    dissipation = np.cumsum([e.dissipation for e in entries])
    convective = np.cumsum([e.convective for e in entries])
    if tol is None:
        tol = 1e-8 * max(1.0, float(kinetic.max())) * max(1, len(entries) - 1)
    return StabilityLedger(lhs, rhs, dissipation, convective, kinetic, tol)


def write_checkpoint(traj: Trajectory, directory) -> list:
    """One text file per level: header ``k t n_u n_p``, then u, then pr."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for k, s in enumerate(traj.states):
        path = os.path.join(directory, f"level_{k:05d}.txt")
        with open(path, "w") as fh:
            fh.write("# k t n_u n_p\n")
            fh.write(f"{k} {s.t!r} {s.u.size} {s.pr.size}\n")
            fh.writelines(f"{v!r}\n" for v in s.u.tolist())
            fh.writelines(f"{v!r}\n" for v in s.pr.tolist())
        paths.append(path)
    return paths


def read_checkpoint(path) -> tuple[int, DiscreteState]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    k, t, n_u, n_p = lines[0].split()
    n_u, n_p = int(n_u), int(n_p)
    vals = np.array([float(v) for v in lines[1:1 + n_u + n_p]])
    if vals.size != n_u + n_p:
        raise ValueError(f"{path}: truncated checkpoint")
    return int(k), DiscreteState(vals[:n_u], vals[n_u:], float(t))
