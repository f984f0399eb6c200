"""
Error norms against exact solutions and experimental orders of convergence.

Errors are integrated with a high-degree rule on every cell; cells close
to the solution's singular point are subdivided first (regular 1:4
splits), and sub-triangles touching the point itself are refined
further towards it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constitutive import StressModel, natural_map, sym
from .elements import MixedSpace, velocity_basis
from .mesh import Mesh
from .quadrature import quadrature

CSV_COLUMNS = ("n", "h", "e_L2", "EOC_L2", "e_F", "EOC_F", "EOC_tot")


@dataclass(frozen=True)
class ExactSolution:
    """Velocity, pressure and velocity Jacobian (``[i, j] = d u_i / d x_j``)."""

    velocity: Callable
    pressure: Callable
    gradient: Callable
    singular_point: Optional[tuple] = None


# ---------------------------------------------------------------------------
# quadrature plan


def _tri_point_distance(P, q):
    """Distance from point ``q`` to the closed triangles ``P`` (m, 3, 2)."""
    q = np.asarray(q, dtype=float)
    a, b, c = P[:, 0], P[:, 1], P[:, 2]

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1 = cross(b - a, q - a)
    d2 = cross(c - b, q - b)
    d3 = cross(a - c, q - c)
    inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))

    def seg(p0, p1):
        d = p1 - p0
        s = np.clip(np.einsum("ij,ij->i", q - p0, d) / np.einsum("ij,ij->i", d, d), 0, 1)
        return np.linalg.norm(p0 + s[:, None] * d - q, axis=1)

    dist = np.minimum(np.minimum(seg(a, b), seg(b, c)), seg(c, a))
    return np.where(inside, 0.0, dist)


_SUB = np.array([[0, 5, 4], [5, 1, 3], [4, 3, 2], [3, 4, 5]])


def _split(tris):
    """Regular 1:4 split of barycentric sub-triangles ``(m, 3, 3)``."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    nodes = np.stack([a, b, c, 0.5 * (b + c), 0.5 * (c + a), 0.5 * (a + b)], axis=1)
    return nodes[:, _SUB].reshape(-1, 3, 3)


@dataclass(frozen=True, eq=False)
class QuadraturePlan:
    """Flattened points ``(cell, barycentric)`` and physical weights."""

    cells: np.ndarray
    bary: np.ndarray
    weights: np.ndarray
    subdivisions: np.ndarray  # sub-triangles per mesh cell

    def points(self, mesh: Mesh) -> np.ndarray:
        P = mesh.vertices[mesh.cells[self.cells]]
        return np.einsum("mk,mkd->md", self.bary, P)


def singular_quadrature(mesh: Mesh, singular_point=(0.0, 0.0),
                        thresholds=((0.25, 1), (0.1, 2)), base_degree=12,
                        graded_depth=10) -> QuadraturePlan:
    """
    Quadrature plan for integrands with a point singularity.

    A cell at distance ``< d`` from ``singular_point`` is split ``4**n``
    times for the largest matching ``(d, n)`` in ``thresholds``; any
    sub-triangle whose closure contains the point is then refined
    ``graded_depth`` more times towards it. ``singular_point=None``
    gives the plain base rule on every cell.
    """
    rule = quadrature(base_degree)
    P = mesh.vertices[mesh.cells]
    areas = np.abs(mesh.signed_areas())
    nc = mesh.num_cells
    if singular_point is None:
        levels = np.zeros(nc, dtype=int)
    else:
        dist = _tri_point_distance(P, singular_point)
        levels = np.zeros(nc, dtype=int)
        for d, n in sorted(thresholds, key=lambda x: x[1]):
            levels = np.where(dist < d, np.maximum(levels, n), levels)

    cells, bary, weights, counts = [], [], [], np.zeros(nc, dtype=int)
    root = np.eye(3)[None]
    for c in range(nc):
        tris = root
        for _ in range(levels[c]):
            tris = _split(tris)
        if singular_point is not None and graded_depth > 0:
            tris = _grade(tris, P[c], singular_point, graded_depth)
        sub_area = _bary_area(tris)                         # fraction of the cell
        pts = np.einsum("qk,mkj->mqj", rule.points, tris)  # (m, nq, 3)
        w = 2.0 * sub_area[:, None] * rule.weights[None, :] * areas[c]
        cells.append(np.full(pts.shape[0] * pts.shape[1], c))
        bary.append(pts.reshape(-1, 3))
        weights.append(w.ravel())
        counts[c] = len(tris)
    return QuadraturePlan(np.concatenate(cells), np.concatenate(bary),
                          np.concatenate(weights), counts)


def _bary_area(tris):
    # area of barycentric sub-triangles relative to the parent
    e1 = tris[:, 1, 1:] - tris[:, 0, 1:]
    e2 = tris[:, 2, 1:] - tris[:, 0, 1:]
    return np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _grade(tris, Pc, point, depth):
    point = np.asarray(point, dtype=float)
    done = []
    for _ in range(depth):
        phys = np.einsum("mkj,jd->mkd", tris, Pc)
        hit = _tri_point_distance(phys, point) <= 1e-14 * max(1.0, np.abs(Pc).max())
        if not hit.any():
            break
        done.append(tris[~hit])
        tris = _split(tris[hit])
    done.append(tris)
    return np.concatenate(done)


# ---------------------------------------------------------------------------
# evaluation of discrete fields on a plan


@dataclass(frozen=True, eq=False)
class PlanEvaluator:
    """Velocity basis values/gradients of ``space`` at all plan points."""

    space: MixedSpace
    plan: QuadraturePlan
    x: np.ndarray
    phi: np.ndarray    # (P, nloc)
    grad: np.ndarray   # (P, nloc, 2)
    dofs: np.ndarray   # (P, nloc)

    @classmethod
    def build(cls, space: MixedSpace, plan: QuadraturePlan) -> "PlanEvaluator":
        phi, dphi = velocity_basis(space.family, plan.bary)
        glam = space.geometry.grad_lambda[plan.cells]
        grad = np.einsum("pak,pkd->pad", dphi, glam)
        return cls(space, plan, plan.points(space.mesh), phi, grad,
                   space.vel_dofs[plan.cells])

    def velocity(self, u):
        N = self.space.n_scalar
        U = np.stack([u[:N][self.dofs], u[N:2 * N][self.dofs]], axis=-1)  # (P, nloc, 2)
        vals = np.einsum("pa,pai->pi", self.phi, U)
        jac = np.einsum("pai,pad->pid", U, self.grad)
        return vals, jac


def _default_plan(space, exact, plan):
    if plan is not None:
        return plan
    return singular_quadrature(space.mesh, exact.singular_point)


def spatial_errors(traj, exact: ExactSolution, model: StressModel = None, plan=None,
                   evaluator: PlanEvaluator = None):
    """
    Per-level ``|u(t_k) - u^k|_{L2}`` and, with ``model``,
    ``|F(Du(t_k)) - F(Du^k)|_{L2}`` for ``k = 0..K``.
    """
    space = traj.space
    if evaluator is None:
        evaluator = PlanEvaluator.build(space, _default_plan(space, exact, plan))
    w = evaluator.plan.weights
    x = evaluator.x
    e_l2, e_f = [], []
    for s in traj.states:
        vals, jac = evaluator.velocity(s.u)
        diff = np.asarray(exact.velocity(s.t, x)) - vals
        e_l2.append(math.sqrt(float(np.sum(w * np.einsum("pi,pi->p", diff, diff)))))
        if model is not None:
            Du_ex = sym(np.asarray(exact.gradient(s.t, x)))
            dF = natural_map(model, Du_ex) - natural_map(model, sym(jac))
            e_f.append(math.sqrt(float(np.sum(w * np.einsum("pij,pij->p", dF, dF)))))
    return np.array(e_l2), (np.array(e_f) if model is not None else None)


def error_L2_time_max(traj, exact: ExactSolution, space=None, plan=None) -> float:
    """``max_k |u(t_k) - u^k|_{L2(Omega)}`` over all levels ``k = 0..K``."""
    e, _ = spatial_errors(traj, exact, plan=plan)
    return float(e.max())


def combine_F(per_level, tau, variant="squared") -> float:
    per_level = np.asarray(per_level, dtype=float)
    if variant == "squared":
        return math.sqrt(float(np.sum(tau * per_level ** 2)))
    if variant == "as_written":
        return math.sqrt(float(np.sum(tau * per_level)))
    raise ValueError(f"unknown e_F variant {variant!r}")


def error_F(traj, exact: ExactSolution, space=None, model: StressModel = None,
            variant="squared", plan=None) -> float:
    """
    Parabolic natural-map error over the levels ``k = 0..K``.

    ``squared``: ``(sum_k tau |F(Du(t_k)) - F(Du^k)|^2)^(1/2)``;
    ``as_written``: the same without the square inside the sum.
    """
    if model is None:
        raise ValueError("error_F needs the stress model (p, delta)")
    _, e_f = spatial_errors(traj, exact, model, plan=plan)
    return combine_F(e_f, traj.grid.tau, variant)


def eoc(errors, hs) -> list:
    """``log(e_n / e_{n-1}) / log(h_n / h_{n-1})`` for consecutive pairs."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need equally many errors and mesh sizes, at least two")
    if np.any(errors <= 0) or np.any(hs <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    return list(np.log(errors[1:] / errors[:-1]) / np.log(hs[1:] / hs[:-1]))


# ---------------------------------------------------------------------------
# reports


@dataclass
class ReportRow:
    n: int
    h: float
    e_L2: float
    e_F: float
    EOC_L2: Optional[float] = None
    EOC_F: Optional[float] = None
    EOC_tot: Optional[float] = None

    @property
    def e_tot(self) -> float:
        return self.e_F + self.e_L2


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    floor: float = 1e-12

    def add(self, n, h, e_L2, e_F):
        self.rows.append(ReportRow(n, h, e_L2, e_F))
        self._update_eoc()

    def _update_eoc(self):
        for prev, row in zip(self.rows, self.rows[1:]):
            for name, a, b in (("EOC_L2", prev.e_L2, row.e_L2),
                               ("EOC_F", prev.e_F, row.e_F),
                               ("EOC_tot", prev.e_tot, row.e_tot)):
                if a > 0 and b > 0:
                    setattr(row, name, eoc([a, b], [prev.h, row.h])[0])

    def reliable(self, row: ReportRow) -> bool:
        """EOCs are meaningless once errors reach round-off."""
        return row.e_L2 > self.floor and row.e_F > self.floor

    def column(self, name) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            def fmt(v):
                return "-" if v is None else f"{v:.6e}"
            wr.writerow([r.n, f"{r.h:.6e}", fmt(r.e_L2), fmt(r.EOC_L2),
                         fmt(r.e_F), fmt(r.EOC_F), fmt(r.EOC_tot)])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "ConvergenceReport":
        """Rows as stored; EOC columns are read, not recomputed."""
        def num(v):
            return None if v == "-" else float(v)

        rep = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rep.rows.append(ReportRow(int(rec["n"]), float(rec["h"]), float(rec["e_L2"]),
                                          float(rec["e_F"]), num(rec["EOC_L2"]),
                                          num(rec["EOC_F"]), num(rec["EOC_tot"])))
        return rep
