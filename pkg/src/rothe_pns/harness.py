"""
Experiment drivers: single runs, refinement sweeps and the invariant
self-check suite.

Every run writes into its own directory::

    <out>/<experiment>_<family>_n<level>/
        config.txt  mesh.txt  energy.csv  [errors.csv  report.csv]
        checkpoints/level_*.txt  fields/fields_*.vtk
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from . import config as cfgmod
from .analysis import ConvergenceReport, ReportRow, combine_F, eoc, spatial_errors
from .config import ConfigError, ExperimentConfig
from .constitutive import StressModel
from .elements import ElementFamily, build_space
from .experiments import (SingularSolution, SteadyPolynomialSolution,
                          VortexInitialData, vortex_viscosity)
from .forms import (DiscreteState, assemble_jacobian, assemble_residual,
                    clement_mean, convective_form)
from .mesh import build_rectangle_mesh, refine_uniformly, write_mesh
from .nonlinear import NewtonConfig
from .quadrature import quadrature
from .timestepping import (StepFailure, TimeGrid, energy_identity_check,
                           project_initial, run, stability_report,
                           write_checkpoint)
from .vtk import emit_fields

log = logging.getLogger(__name__)

ENERGY_COLUMNS = ("k", "t", "kinetic", "stress_work", "forcing_work", "convective",
                  "dissipation", "identity_residual", "newton_iterations",
                  "newton_residual")
ERROR_COLUMNS = ("k", "t", "e_L2", "e_F")


class SolverFailure(RuntimeError):
    """A run stopped in the nonlinear solver; partial outputs are on disk."""

    def __init__(self, message, directory=None, report=None):
        super().__init__(message)
        self.directory = directory
        self.report = report


@dataclass
class Problem:
    """Everything a run needs, resolved from a configuration."""

    cfg: ExperimentConfig
    space: object
    model: StressModel
    u0: Callable
    bc: Optional[Callable]
    forcing: object
    exact: object = None


@dataclass
class RunResult:
    directory: str
    trajectory: object
    row: Optional[ReportRow] = None
    seconds: float = 0.0


def build_problem(cfg: ExperimentConfig) -> Problem:
    mesh = refine_uniformly(
        build_rectangle_mesh(cfg.x0, cfg.y0, cfg.x1, cfg.y1, cfg.nx, cfg.ny), cfg.level)
    space = build_space(mesh, cfg.element_family)
    nu = vortex_viscosity if cfg.viscosity == "vortex" else cfg.nu
    model = StressModel(cfg.p, cfg.delta, nu)
    if cfg.experiment == "singular":
        sol = SingularSolution(cfg.p, cfg.delta)
        if cfg.viscosity != "constant" or cfg.nu != 1.0:
            raise ConfigError("the singular solution is built for nu = 1")
        return Problem(cfg, space, model, lambda x: sol.velocity(0.0, x), sol.trace,
                       sol.forcing(), sol.exact())
    if cfg.experiment == "manufactured":
        sol = SteadyPolynomialSolution()
        return Problem(cfg, space, model, lambda x: sol.velocity(0.0, x), sol.trace,
                       sol.forcing(model), sol.exact())
    return Problem(cfg, space, model, VortexInitialData(), None, None, None)


def newton_config(cfg: ExperimentConfig) -> NewtonConfig:
    return NewtonConfig(cfg.abs_tol, cfg.rel_tol, cfg.max_iter, cfg.damping_factor,
                        cfg.max_halvings)


def run_directory(cfg: ExperimentConfig) -> str:
    fam = cfg.element_family.value
    return os.path.join(cfg.out, f"{cfg.experiment}_{fam}_n{cfg.level}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)


def _g(v) -> str:
    return f"{v:.12e}"


def _write_outputs(directory, problem, traj):
    write_checkpoint(traj, os.path.join(directory, "checkpoints"))
    rows = []
    for k, (s, e) in enumerate(zip(traj.states, traj.energy)):
        st = traj.newton[k - 1] if k else None
        rows.append([k, _g(s.t), _g(e.kinetic), _g(e.stress_work), _g(e.forcing_work),
                     _g(e.convective), _g(e.dissipation), _g(e.identity_residual),
                     st.iterations if st else 0, _g(st.residuals[-1]) if st else "-"])
    _write_csv(os.path.join(directory, "energy.csv"), ENERGY_COLUMNS, rows)

    fields_dir = os.path.join(directory, "fields")
    os.makedirs(fields_dir, exist_ok=True)
    every = problem.cfg.vtk_every
    last = len(traj.states) - 1
    for k, s in enumerate(traj.states):
        if k in (0, last) or (every and k % every == 0):
            emit_fields(s, problem.space, os.path.join(fields_dir, f"fields_{k:05d}.vtk"))


def _error_outputs(directory, problem, traj) -> ReportRow:
    cfg = problem.cfg
    e_l2, e_f = spatial_errors(traj, problem.exact, problem.model)
    _write_csv(os.path.join(directory, "errors.csv"), ERROR_COLUMNS,
               [[k, _g(s.t), _g(a), _g(b)]
                for k, (s, a, b) in enumerate(zip(traj.states, e_l2, e_f))])
    row = ReportRow(cfg.level, problem.space.mesh.h_max, float(e_l2.max()),
                    combine_F(e_f, traj.grid.tau, cfg.error_variant))
    rep = ConvergenceReport(metadata={"variant": cfg.error_variant})
    rep.add(row.n, row.h, row.e_L2, row.e_F)
    rep.write_csv(os.path.join(directory, "report.csv"))
    return row


def run_experiment(cfg: ExperimentConfig, directory=None) -> RunResult:
    """
    Run one configuration and write its outputs.

    Raises :class:`SolverFailure` after writing whatever levels were
    computed when a Newton solve fails.
    """
    directory = directory or run_directory(cfg)
    os.makedirs(directory, exist_ok=True)
    cfgmod.dump(cfg, os.path.join(directory, "config.txt"))
    problem = build_problem(cfg)
    write_mesh(problem.space.mesh, os.path.join(directory, "mesh.txt"))

    start = time.perf_counter()
    grid = TimeGrid(cfg.T, cfg.K)
    u0 = project_initial(problem.space, problem.u0, problem.bc, 0.0, cfg.initial)
    try:
        traj = run(problem.space, problem.model, u0, grid, problem.forcing, problem.bc,
                   newton_config(cfg), cfg.convection)
    except StepFailure as exc:
        _write_outputs(directory, problem, exc.trajectory)
        raise SolverFailure(f"{exc} ({directory})", directory) from exc
    _write_outputs(directory, problem, traj)
    row = _error_outputs(directory, problem, traj) if problem.exact is not None else None
    seconds = time.perf_counter() - start
    log.info("%s: %d steps in %.1f s", directory, cfg.K, seconds)
    return RunResult(directory, traj, row, seconds)


def sweep_path(cfg: ExperimentConfig) -> str:
    return os.path.join(cfg.out, f"convergence_{cfg.experiment}_"
                                 f"{cfg.element_family.value}.csv")


def convergence_sweep(cfg: ExperimentConfig, n_min: int, n_max: int) -> ConvergenceReport:
    """Levels ``n_min..n_max`` of ``cfg``; the report CSV goes to :func:`sweep_path`."""
    if n_min < 1 or n_max < n_min:
        raise ValueError(f"need 1 <= n_min <= n_max, got {n_min}, {n_max}")
    if cfg.experiment == "vortex":
        raise ConfigError("the vortex experiment has no exact solution to measure errors")
    report = ConvergenceReport(metadata={"variant": cfg.error_variant})
    os.makedirs(cfg.out, exist_ok=True)
    path = sweep_path(cfg)
    for n in range(n_min, n_max + 1):
        try:
            res = run_experiment(cfg.replace(level=n))
        except SolverFailure as exc:
            report.write_csv(path)
            exc.report = report
            raise
        report.add(n, res.row.h, res.row.e_L2, res.row.e_F)
        report.write_csv(path)
    return report


# ---------------------------------------------------------------------------
# invariant suite


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} value={self.value:.3e} threshold={self.threshold:.1e} {self.detail}".rstrip()


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"{'PASS' if self.passed else 'FAIL'} all ({self.seconds:.1f} s)")
        return "\n".join(lines) + "\n"


def _small_space(family, n_base=2):
    mesh = build_rectangle_mesh(-1.0, -1.0, 1.0, 1.0, n_base, n_base)
    return build_space(mesh, family)


def check_skew(samples=100, seed=0) -> CheckResult:
    """``<B^ u, u> = 0`` for random discrete fields on the 8-cell mesh."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for fam in ElementFamily:
        space = _small_space(fam)
        for _ in range(samples):
            u = rng.standard_normal(space.n_u)
            linf = np.abs(u).max()
            area = 4.0
            val = abs(convective_form(space, u, u))
            worst = max(worst, val / (1 + linf ** 3 * area))
    return CheckResult("skew_symmetry", worst <= 1e-12, worst, 1e-12)


def check_jacobian(jacobian=assemble_jacobian, states=10, seed=1, eps=1e-7) -> CheckResult:
    """Central differences of the residual against Jacobian-vector products."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for fam in ElementFamily:
        space = _small_space(fam)
        for p in (2.0, 11 / 5):
            model = StressModel(p, 1e-2, 1.0)
            for conv in (False, True):
                for _ in range(states):
                    s = DiscreteState.from_vector(space, rng.standard_normal(space.n_total), 0.1)
                    prev = DiscreteState.from_vector(space, rng.standard_normal(space.n_total), 0.0)
                    d = rng.standard_normal(space.n_total)
                    J = jacobian(space, model, s, prev, 0.1, 1, convection=conv)

                    def R(x):
                        return assemble_residual(space, model,
                                                 DiscreteState.from_vector(space, x, 0.1),
                                                 prev, 0.1, 1, None, conv)

                    x = s.vector()
                    fd = (R(x + eps * d) - R(x - eps * d)) / (2 * eps)
                    jd = J @ d
                    worst = max(worst, np.linalg.norm(fd - jd) / np.linalg.norm(jd))
    return CheckResult("jacobian_fd", worst <= 1e-6, worst, 1e-6)


def check_quadrature(max_degree=14) -> CheckResult:
    """Monomials ``x^a y^b`` on the reference triangle: ``a! b! / (a+b+2)!``."""
    worst = 0.0
    for deg in range(1, max_degree + 1):
        rule = quadrature(deg)
        x, y = rule.points[:, 1], rule.points[:, 2]
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                approx = float(rule.weights @ (x ** a * y ** b))
                worst = max(worst, abs(approx - exact) / exact)
    return CheckResult("quadrature_exactness", worst <= 1e-13, worst, 1e-13)


def check_clement(time_quad=3, p=11 / 5) -> CheckResult:
    """Exactness up to degree ``2 q - 1`` and the discrete ``l^p`` contraction."""
    worst = 0.0
    tau, K = 0.1, 10
    for deg in range(2 * time_quad):
        for k in range(1, K + 1):
            a, b = (k - 1) * tau, k * tau
            exact = (b ** (deg + 1) - a ** (deg + 1)) / ((deg + 1) * tau)
            worst = max(worst, abs(clement_mean(lambda t: t ** deg, k, tau, time_quad) - exact))
    ok_exact = worst <= 1e-13
    contraction = True
    for g in (np.sin, lambda t: np.exp(-3 * t), lambda t: np.cos(7 * t) + t * t):
        discrete = sum(tau * abs(clement_mean(g, k, tau, time_quad)) ** p
                       for k in range(1, K + 1)) ** (1 / p)
        cont = integrate.quad(lambda t: abs(g(t)) ** p, 0, K * tau, limit=200)[0] ** (1 / p)
        contraction &= discrete <= cont * (1 + 1e-12)
    return CheckResult("clement_mean", ok_exact and contraction, worst, 1e-13,
                       "" if contraction else "contraction violated")


def vortex_trajectory(steps=20, level=1):
    cfg = cfgmod.defaults("vortex").replace(level=level, K=steps, T=steps * 1e-2)
    problem = build_problem(cfg)
    u0 = project_initial(problem.space, problem.u0, None, 0.0, cfg.initial)
    traj = run(problem.space, problem.model, u0, TimeGrid(cfg.T, cfg.K), None, None,
               newton_config(cfg), cfg.convection)
    return problem, traj


def check_energy_identity(traj) -> CheckResult:
    """``(d u, u) = 1/2 d |u|^2 + tau/2 |d u|^2`` at every step."""
    worst = 0.0
    tau = traj.grid.tau
    for k in range(1, len(traj.states)):
        scale = (traj.energy[k].kinetic + traj.energy[k - 1].kinetic) / tau
        worst = max(worst, energy_identity_check(traj, k) / scale)
    return CheckResult("energy_identity", worst <= 1e-10, worst, 1e-10)


def check_stability(traj, newton_tol=1e-8) -> CheckResult:
    """Energy inequality, monotone kinetic energy and the closed balance."""
    led = stability_report(traj)
    K = len(traj.states) - 1
    scale = max(1.0, float(led.kinetic[0]))
    slack = K * newton_tol * scale
    excess = float(np.max(led.lhs - led.rhs))
    monotone = bool(np.all(np.diff(led.kinetic) <= slack))
    defect = float(led.balance_defect.max()) / scale
    ok = excess <= slack and monotone and defect <= 1e-8
    return CheckResult("stability_ledger", ok, max(excess, 0.0), slack,
                       f"balance_defect={defect:.1e} monotone={monotone}")


def verify(cfg: ExperimentConfig = None, jacobian=assemble_jacobian) -> VerifyReport:
    """
    Run the invariant checks. ``jacobian`` replaces the assembled
    Jacobian (same signature as :func:`forms.assemble_jacobian`), which
    lets tests feed a corrupted one.
    """
    start = time.perf_counter()
    report = VerifyReport()
    report.checks.append(check_skew())
    report.checks.append(check_jacobian(jacobian))
    report.checks.append(check_quadrature())
    report.checks.append(check_clement())
    _, traj = vortex_trajectory()
    report.checks.append(check_energy_identity(traj))
    report.checks.append(check_stability(traj, (cfg or ExperimentConfig()).abs_tol))
    report.seconds = time.perf_counter() - start
    return report
