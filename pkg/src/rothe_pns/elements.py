"""
Mixed velocity/pressure finite element spaces on triangle meshes.

Three pairs are provided:

* ``MINI``: continuous P1 + cubic bubble velocity, continuous P1 pressure
* ``TAYLOR_HOOD``: continuous P2 velocity, continuous P1 pressure
* ``CROUZEIX_RAVIART``: continuous P2 + cubic bubble velocity,
  discontinuous P1 pressure (the conforming Crouzeix-Raviart pair)

Velocity unknowns are stored component-blocked: the x-components of all
scalar dofs first, then the y-components. Scalar dofs are numbered
vertices first, then edges, then cells, each in index order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .mesh import Mesh
from .quadrature import quadrature

BUBBLE_SCALE = 27.0


class ElementFamily(enum.Enum):
    MINI = "mini"
    TAYLOR_HOOD = "taylor_hood"
    CROUZEIX_RAVIART = "crouzeix_raviart"

    @classmethod
    def parse(cls, name) -> "ElementFamily":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"th": "taylor_hood", "cr": "crouzeix_raviart",
                   "p1b": "mini", "p1_bubble": "mini"}
        key = aliases.get(key, key)
        for fam in cls:
            if fam.value == key:
                return fam
        raise ValueError(f"unknown element family {name!r}")

    @property
    def has_edge_dofs(self) -> bool:
        return self is not ElementFamily.MINI

    @property
    def has_bubble(self) -> bool:
        return self is not ElementFamily.TAYLOR_HOOD

    @property
    def velocity_degree(self) -> int:
        return 2 if self is ElementFamily.TAYLOR_HOOD else 3

    @property
    def discontinuous_pressure(self) -> bool:
        return self is ElementFamily.CROUZEIX_RAVIART


def velocity_basis(family: ElementFamily, bary):
    """
    Local scalar velocity basis at barycentric points.

    Returns ``(values, dvalues)`` of shapes ``(nq, nloc)`` and
    ``(nq, nloc, 3)``, the latter being derivatives with respect to the
    three barycentric coordinates.
    """
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    nq = lam.shape[0]
    eye = np.eye(3)
    vals, dvals = [], []
    if family.has_edge_dofs:
        for i in range(3):
            vals.append(lam[:, i] * (2 * lam[:, i] - 1))
            dvals.append((4 * lam[:, i] - 1)[:, None] * eye[i])
        for k, (i, j) in enumerate([(1, 2), (2, 0), (0, 1)]):
            vals.append(4 * lam[:, i] * lam[:, j])
            dvals.append(4 * (lam[:, j, None] * eye[i] + lam[:, i, None] * eye[j]))
    else:
        for i in range(3):
            vals.append(lam[:, i])
            dvals.append(np.broadcast_to(eye[i], (nq, 3)))
    if family.has_bubble:
        l0, l1, l2 = lam.T
        vals.append(BUBBLE_SCALE * l0 * l1 * l2)
        dvals.append(BUBBLE_SCALE * np.column_stack([l1 * l2, l0 * l2, l0 * l1]))
    return np.stack(vals, axis=1), np.stack(dvals, axis=1)


def pressure_basis(family: ElementFamily, bary):
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    dvals = np.broadcast_to(np.eye(3), (lam.shape[0], 3, 3))
    return lam.copy(), dvals


# reference gradients of the barycentric coordinates w.r.t. (xi, eta)
_REF_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CellGeometry:
    """Affine maps ``x = x0 + J xi`` of all cells."""

    origin: np.ndarray      # (nc, 2)
    jac: np.ndarray         # (nc, 2, 2)
    det: np.ndarray         # (nc,)
    grad_lambda: np.ndarray  # (nc, 3, 2) physical gradients of barycentrics

    @classmethod
    def of(cls, mesh: Mesh) -> "CellGeometry":
        p = mesh.vertices[mesh.cells]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= det[:, None, None]
        # grad lambda_k = J^{-T} grad_ref lambda_k
        grad_lambda = np.einsum("kr,crd->ckd", _REF_DLAMBDA, inv)
        return cls(p[:, 0].copy(), jac, det, grad_lambda)

    def map(self, bary) -> np.ndarray:
        """Physical coordinates ``(nc, nq, 2)`` of barycentric points."""
        xy = np.atleast_2d(bary)[:, 1:]
        return self.origin[:, None, :] + np.einsum("cdr,qr->cqd", self.jac, xy)


@dataclass(frozen=True, eq=False)
class MixedSpace:
    """Velocity/pressure degree-of-freedom layout for one family on one mesh."""

    mesh: Mesh
    family: ElementFamily
    vel_dofs: np.ndarray = field(repr=False)     # (nc, nloc_u) scalar dof ids
    pres_dofs: np.ndarray = field(repr=False)    # (nc, 3)
    n_scalar: int = 0
    n_p: int = 0
    scalar_nodes: np.ndarray = field(repr=False, default=None)  # (n_scalar, 2)
    scalar_is_bubble: np.ndarray = field(repr=False, default=None)
    pressure_nodes: np.ndarray = field(repr=False, default=None)  # (n_p, 2)
    boundary_scalar: np.ndarray = field(repr=False, default=None)

    @property
    def n_u(self) -> int:
        return 2 * self.n_scalar

    @property
    def n_total(self) -> int:
        """Size of the saddle-point system incl. the mean-pressure multiplier."""
        return self.n_u + self.n_p + 1

    @property
    def nloc_u(self) -> int:
        return self.vel_dofs.shape[1]

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        """Velocity dofs (both components) attached to the boundary."""
        b = self.boundary_scalar
        return np.concatenate([b, b + self.n_scalar])

    @cached_property
    def geometry(self) -> CellGeometry:
        return CellGeometry.of(self.mesh)

    @property
    def quad_degree(self) -> int:
        return 2 * self.family.velocity_degree + 4

    def cell_velocity_dofs(self) -> np.ndarray:
        """``(nc, 2 * nloc_u)`` global velocity dofs, component-major."""
        return np.hstack([self.vel_dofs, self.vel_dofs + self.n_scalar])

    def split(self, x):
        """Split a full system vector into ``(u, p, multiplier)``."""
        x = np.asarray(x)
        return x[:self.n_u], x[self.n_u:self.n_u + self.n_p], x[self.n_u + self.n_p:]

    def tabulate(self, degree=None) -> "Tabulation":
        degree = self.quad_degree if degree is None else degree
        cache = self.__dict__.setdefault("_tab_cache", {})
        if degree not in cache:
            cache[degree] = Tabulation.build(self, quadrature(degree))
        return cache[degree]


def build_space(mesh: Mesh, family) -> MixedSpace:
    """Dof maps for ``family`` on ``mesh`` (deterministic numbering)."""
    family = ElementFamily.parse(family)
    nv, ne, nc = mesh.num_vertices, mesh.num_edges, mesh.num_cells
    V = mesh.vertices

    blocks = [mesh.cells]
    nodes = [V]
    bubble_mask = [np.zeros(nv, dtype=bool)]
    offset = nv
    if family.has_edge_dofs:
        blocks.append(offset + mesh.cell_edges)
        nodes.append(0.5 * (V[mesh.edges[:, 0]] + V[mesh.edges[:, 1]]))
        bubble_mask.append(np.zeros(ne, dtype=bool))
        offset += ne
    if family.has_bubble:
        blocks.append(offset + np.arange(nc)[:, None])
        nodes.append(V[mesh.cells].mean(axis=1))
        bubble_mask.append(np.ones(nc, dtype=bool))
        offset += nc
    vel_dofs = np.hstack(blocks)

    boundary = [mesh.boundary_vertices()]
    if family.has_edge_dofs:
        boundary.append(nv + mesh.boundary_edge_ids())
    boundary_scalar = np.sort(np.concatenate(boundary))

    if family.discontinuous_pressure:
        pres_dofs = np.arange(3 * nc).reshape(nc, 3)
        pressure_nodes = V[mesh.cells].reshape(-1, 2)
        n_p = 3 * nc
    else:
        pres_dofs = mesh.cells.copy()
        pressure_nodes = V.copy()
        n_p = nv

    arrays = (vel_dofs, pres_dofs, boundary_scalar)
    for arr in arrays:
        arr.setflags(write=False)
    return MixedSpace(
        mesh=mesh, family=family, vel_dofs=vel_dofs, pres_dofs=pres_dofs,
        n_scalar=offset, n_p=n_p, scalar_nodes=np.vstack(nodes),
        scalar_is_bubble=np.concatenate(bubble_mask),
        pressure_nodes=pressure_nodes, boundary_scalar=boundary_scalar,
    )


@dataclass(frozen=True, eq=False)
class Tabulation:
    """Basis data of a space at the points of one quadrature rule, all cells."""

    phi_u: np.ndarray    # (nq, nloc_u)
    grad_u: np.ndarray   # (nc, nq, nloc_u, 2)
    phi_p: np.ndarray    # (nq, 3)
    x: np.ndarray        # (nc, nq, 2)
    wdet: np.ndarray     # (nc, nq) quadrature weight times |det J|

    @classmethod
    def build(cls, space: MixedSpace, rule) -> "Tabulation":
        geo = space.geometry
        phi_u, dphi = velocity_basis(space.family, rule.points)
        phi_p, _ = pressure_basis(space.family, rule.points)
        grad_u = np.einsum("qak,ckd->cqad", dphi, geo.grad_lambda)
        wdet = np.abs(geo.det)[:, None] * rule.weights[None, :]
        return cls(phi_u, grad_u, phi_p, geo.map(rule.points), wdet)


def eval_basis(space: MixedSpace, cell: int, point) -> dict:
    """
    Local basis data on one cell at one barycentric point.

    Returns a dict with velocity-scalar ``values`` and ``ref_grad``
    (w.r.t. reference coordinates), physical ``grad``, and the same for
    the pressure basis under ``p_values``, ``p_ref_grad``, ``p_grad``.
    """
    if not 0 <= cell < space.mesh.num_cells:
        raise IndexError(f"cell index {cell} out of range")
    lam = np.asarray(point, dtype=float).reshape(1, 3)
    if np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise ValueError(f"{point} is not a barycentric point of the reference triangle")
    glam = space.geometry.grad_lambda[cell]
    vals, dvals = velocity_basis(space.family, lam)
    pvals, pdvals = pressure_basis(space.family, lam)
    return {
        "values": vals[0],
        "ref_grad": dvals[0] @ _REF_DLAMBDA,
        "grad": dvals[0] @ glam,
        "p_values": pvals[0],
        "p_ref_grad": pdvals[0] @ _REF_DLAMBDA,
        "p_grad": pdvals[0] @ glam,
    }


def interpolate(space: MixedSpace, func, component: str = "velocity") -> np.ndarray:
    """
    Nodal interpolation of ``func`` into the velocity or pressure space.

    ``func`` maps an ``(n, 2)`` array of points to ``(n, 2)`` (velocity)
    or ``(n,)`` (pressure) values. Bubble coefficients are set to zero.
    """
    if component == "velocity":
        vals = np.asarray(func(space.scalar_nodes), dtype=float).reshape(-1, 2)
        vals = np.where(space.scalar_is_bubble[:, None], 0.0, vals)
        return np.concatenate([vals[:, 0], vals[:, 1]])
    if component == "pressure":
        return np.asarray(func(space.pressure_nodes), dtype=float).reshape(-1)
    raise ValueError(f"component must be 'velocity' or 'pressure', not {component!r}")


def evaluate_velocity(space: MixedSpace, u, cells, bary, with_grad=False):
    """
    Evaluate the discrete velocity ``u`` at barycentric points.

    ``cells`` is ``(m,)``, ``bary`` is ``(m, nq, 3)`` or ``(nq, 3)``
    (shared). Returns values ``(m, nq, 2)`` and, optionally, the
    Jacobians ``(m, nq, 2, 2)`` with entry ``[i, j] = d u_i / d x_j``.
    """
    cells = np.asarray(cells)
    bary = np.asarray(bary, dtype=float)
    shared = bary.ndim == 2
    U = np.stack([u[:space.n_scalar], u[space.n_scalar:space.n_u]], axis=1)
    Uc = U[space.vel_dofs[cells]]  # (m, nloc, 2)
    if shared:
        phi, dphi = velocity_basis(space.family, bary)
        vals = np.einsum("qa,mai->mqi", phi, Uc)
    else:
        m, nq = bary.shape[:2]
        phi, dphi = velocity_basis(space.family, bary.reshape(-1, 3))
        phi = phi.reshape(m, nq, -1)
        dphi = dphi.reshape(m, nq, -1, 3)
        vals = np.einsum("mqa,mai->mqi", phi, Uc)
    if not with_grad:
        return vals
    glam = space.geometry.grad_lambda[cells]
    if shared:
        grads = np.einsum("qak,mkd,mai->mqid", dphi, glam, Uc)
    else:
        grads = np.einsum("mqak,mkd,mai->mqid", dphi, glam, Uc)
    return vals, grads


def evaluate_pressure(space: MixedSpace, pr, cells, bary):
    cells = np.asarray(cells)
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    Pc = np.asarray(pr)[space.pres_dofs[cells]]
    if bary.ndim == 2:
        return np.einsum("qa,ma->mq", bary, Pc)
    return np.einsum("mqa,ma->mq", bary, Pc)
