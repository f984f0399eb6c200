"""
Residual and Newton Jacobian of one implicit Rothe step.

Unknowns of the saddle-point system are ordered ``[u, pr, lam]``:
``n_u`` velocity coefficients, ``n_p`` pressure coefficients, and one
multiplier enforcing a zero pressure mean. For test functions
``(v, q, mu)`` the residual reads

    (u - u_prev, v) / tau + <[S]_k(Du), Dv> + <B^ u, v> - (pr, div v) - <[f]_k, v>
    -(div u, q) + lam (1, q)
    (pr, 1) mu

where ``[.]_k`` is the mean over ``((k-1) tau, k tau]`` computed with a
Gauss rule in time and ``B^`` is the skew-symmetrised convective form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .constitutive import StressModel, stress, sym, tangent_coefficients
from .elements import MixedSpace
from .quadrature import gauss_legendre

DEFAULT_TIME_QUAD = 3


@dataclass(frozen=True)
class Forcing:
    """
    Right-hand side ``<f(t), v> = (body, v) + (flux, grad v)``.

    ``body(t, x)`` returns ``(..., 2)``; ``flux(t, x)`` returns
    ``(..., 2, 2)`` paired as ``flux[i, j] * d v_i / d x_j``. Either may
    be ``None``.
    """

    body: Optional[Callable] = None
    flux: Optional[Callable] = None

    @classmethod
    def coerce(cls, rhs) -> "Forcing":
        if rhs is None:
            return cls()
        if isinstance(rhs, cls):
            return rhs
        if callable(rhs):
            return cls(body=rhs)
        raise TypeError(f"cannot use {type(rhs).__name__} as a forcing term")

    @property
    def is_zero(self) -> bool:
        return self.body is None and self.flux is None


@dataclass(frozen=True, eq=False)
class DiscreteState:
    """Coefficients at one time level (``mult`` is the pressure-mean multiplier)."""

    u: np.ndarray
    pr: np.ndarray
    t: float
    mult: float = 0.0

    @classmethod
    def zero(cls, space: MixedSpace, t=0.0) -> "DiscreteState":
        return cls(np.zeros(space.n_u), np.zeros(space.n_p), t)

    @classmethod
    def from_vector(cls, space: MixedSpace, x, t) -> "DiscreteState":
        u, pr, lam = space.split(np.array(x, dtype=float))
        return cls(u, pr, t, float(lam[0]))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.u, self.pr, [self.mult]])

    def check(self, space: MixedSpace):
        if self.u.shape != (space.n_u,) or self.pr.shape != (space.n_p,):
            raise ValueError(
                f"state of size ({self.u.size}, {self.pr.size}) does not match "
                f"space ({space.n_u}, {space.n_p})")


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray


def clement_mean(g, interval_k, tau, time_quad=DEFAULT_TIME_QUAD):
    """
    Mean of ``g`` over ``((k-1) tau, k tau]`` by a ``time_quad``-point
    Gauss rule; exact for polynomials of degree ``2 * time_quad - 1``.
    """
    times, weights = time_nodes(interval_k, tau, time_quad)
    total = 0.0
    for t, w in zip(times, weights):
        total = total + w * np.asarray(g(t))
    return total


def time_nodes(interval_k, tau, time_quad=DEFAULT_TIME_QUAD):
    s, w = gauss_legendre(time_quad)
    return (interval_k - 1 + s) * tau, w


# ---------------------------------------------------------------------------
# quadrature-point kernels


@dataclass
class _PointData:
    u: np.ndarray      # (nc, nq, 2)
    jac: np.ndarray    # (nc, nq, 2, 2), [i, j] = d u_i / d x_j
    pr: np.ndarray     # (nc, nq)


def _point_data(space, tab, U, pr) -> _PointData:
    Uc = np.stack([U[:space.n_scalar], U[space.n_scalar:]], axis=1)[space.vel_dofs]
    u = np.einsum("qa,cai->cqi", tab.phi_u, Uc)
    jac = np.einsum("cqad,cai->cqid", tab.grad_u, Uc)
    prq = np.einsum("qr,cr->cq", tab.phi_p, np.asarray(pr)[space.pres_dofs])
    return _PointData(u, jac, prq)


def _mean_stress(model, x, Du, times, weights, with_tangent):
    S = 0.0
    c1 = c2 = 0.0
    for t, w in zip(times, weights):
        S = S + w * stress(model, t, x, Du)
        if with_tangent:
            a, b = tangent_coefficients(model, t, x, Du)
            c1 = c1 + w * a
            c2 = c2 + w * b
    return S, c1, c2


def _mean_forcing(forcing, x, times, weights, shape):
    body = np.zeros(shape)
    flux = np.zeros(shape + (2,))
    for t, w in zip(times, weights):
        if forcing.body is not None:
            body += w * np.asarray(forcing.body(t, x))
        if forcing.flux is not None:
            flux += w * np.asarray(forcing.flux(t, x))
    return body, flux


@lru_cache(maxsize=8)
def _pattern(space: MixedSpace):
    """COO index arrays of all local blocks (fixed per space)."""
    nc = space.mesh.num_cells
    vdofs = space.cell_velocity_dofs()                  # (nc, 2 nloc)
    pdofs = space.n_u + space.pres_dofs                 # (nc, 3)
    lam = space.n_total - 1
    m = vdofs.shape[1]
    rows_uu = np.repeat(vdofs, m, axis=1).ravel()
    cols_uu = np.tile(vdofs, (1, m)).ravel()
    rows_up = np.repeat(vdofs, 3, axis=1).ravel()
    cols_up = np.tile(pdofs, (1, m)).ravel()
    p_all = space.n_u + np.arange(space.n_p)
    rows = np.concatenate([rows_uu, rows_up, cols_up, p_all, np.full(space.n_p, lam)])
    cols = np.concatenate([cols_uu, cols_up, rows_up, np.full(space.n_p, lam), p_all])
    return rows, cols, nc


def pressure_mean_weights(space: MixedSpace) -> np.ndarray:
    """``(1, psi_r)`` for every pressure basis function."""
    tab = space.tabulate()
    local = np.einsum("cq,qr->cr", tab.wdet, tab.phi_p)
    return np.bincount(space.pres_dofs.ravel(), local.ravel(), minlength=space.n_p)


def _assemble(space: MixedSpace, model: StressModel, state: DiscreteState,
              prev: DiscreteState, tau, interval_k, rhs_f, convection,
              time_quad, want_matrix, quad_degree=None):
    if tau <= 0:
        raise ValueError(f"time step must be positive, got {tau}")
    state.check(space)
    prev.check(space)
    forcing = Forcing.coerce(rhs_f)
    tab = space.tabulate(quad_degree)
    nc, nq = tab.wdet.shape
    nloc = space.nloc_u
    phi, G, w = tab.phi_u, tab.grad_u, tab.wdet

    pt = _point_data(space, tab, state.u, state.pr)
    u_prev = _point_data(space, tab, prev.u, prev.pr).u
    Du = sym(pt.jac)
    times, tweights = time_nodes(interval_k, tau, time_quad)
    S, c1, c2 = _mean_stress(model, tab.x, Du, times, tweights, want_matrix)

    # value part f0 (paired with phi_a) and gradient part F1 (paired with G_a)
    f0 = (pt.u - u_prev) / tau
    F1 = S - pt.pr[..., None, None] * np.eye(2)
    if convection:
        f0 = f0 + 0.5 * np.einsum("cqij,cqj->cqi", pt.jac, pt.u)
        F1 = F1 - 0.5 * np.einsum("cqi,cqs->cqis", pt.u, pt.u)
    if not forcing.is_zero:
        body, flux = _mean_forcing(forcing, tab.x, times, tweights, pt.u.shape)
        f0 = f0 - body
        F1 = F1 - flux

    Rloc = (np.einsum("cq,qa,cqi->cia", w, phi, f0)
            + np.einsum("cq,cqas,cqis->cia", w, G, F1)).reshape(nc, 2 * nloc)
    div_u = np.einsum("cqii->cq", pt.jac)
    Rp_loc = -np.einsum("cq,qr,cq->cr", w, tab.phi_p, div_u)

    mean_w = pressure_mean_weights(space)
    R = np.zeros(space.n_total)
    np.add.at(R, space.cell_velocity_dofs().ravel(), Rloc.ravel())
    np.add.at(R, space.n_u + space.pres_dofs.ravel(), Rp_loc.ravel())
    R[space.n_u:space.n_u + space.n_p] += state.mult * mean_w
    R[-1] = mean_w @ state.pr
    if not want_matrix:
        return R, None

    eye2 = np.eye(2)
    wphi = w[:, :, None] * phi[None]                      # (c, q, a)
    mass = np.einsum("cqa,qb->cab", wphi, phi) / tau
    GG = np.einsum("cqas,cqbs->cqab", G, G)
    diag = mass + 0.5 * np.einsum("cq,cqab->cab", w * c1, GG)
    gen = (0.5 * np.einsum("cq,cqaj,cqbi->ciajb", w * c1, G, G)
           + np.einsum("cq,cqia,cqjb->ciajb", w * c2,
                       np.einsum("cqis,cqas->cqia", Du, G),
                       np.einsum("cqjs,cqbs->cqjb", Du, G)))
    if convection:
        Gu = np.einsum("cqbs,cqs->cqb", G, pt.u)
        diag = diag + 0.5 * (np.einsum("cqa,cqb->cab", wphi, Gu)
                             - np.einsum("cqa,qb->cab", w[:, :, None] * Gu, phi))
        gen = gen + 0.5 * (np.einsum("cqa,qb,cqij->ciajb", wphi, phi, pt.jac)
                           - np.einsum("cq,cqi,cqaj,qb->ciajb", w, pt.u, G, phi))
    Kloc = gen + np.einsum("ij,cab->ciajb", eye2, diag)
    m = 2 * nloc
    Kloc = Kloc.reshape(nc, m, m)
    Bt = -np.einsum("cq,cqai,qr->ciar", w, G, tab.phi_p).reshape(nc, m * 3)

    rows, cols, _ = _pattern(space)
    vals = np.concatenate([Kloc.ravel(), Bt.ravel(), Bt.ravel(), mean_w, mean_w])
    n = space.n_total
    J = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    J.sum_duplicates()
    J.eliminate_zeros()
    return R, J


def assemble_residual(space, model, state, prev, tau, interval_k, rhs_f=None,
                      convection=True, time_quad=DEFAULT_TIME_QUAD, quad_degree=None):
    """Residual vector (length ``space.n_total``) of step ``interval_k``."""
    R, _ = _assemble(space, model, state, prev, tau, interval_k, rhs_f,
                     convection, time_quad, False, quad_degree)
    return R


def assemble_jacobian(space, model, state, prev, tau, interval_k,
                      convection=True, time_quad=DEFAULT_TIME_QUAD, quad_degree=None):
    """Derivative of :func:`assemble_residual` w.r.t. ``[u, pr, lam]`` (CSR)."""
    _, J = _assemble(space, model, state, prev, tau, interval_k, None,
                     convection, time_quad, True, quad_degree)
    return J


def assemble_system(space, model, state, prev, tau, interval_k, rhs_f=None,
                    convection=True, time_quad=DEFAULT_TIME_QUAD,
                    quad_degree=None) -> SparseSystem:
    """Newton system ``J dx = -R`` at ``state``."""
    R, J = _assemble(space, model, state, prev, tau, interval_k, rhs_f,
                     convection, time_quad, True, quad_degree)
    return SparseSystem(J, -R)


def dirichlet_values(space: MixedSpace, trace, t) -> np.ndarray:
    """Trace interpolated at the boundary velocity dofs (ordered as ``dirichlet_dofs``)."""
    nodes = space.scalar_nodes[space.boundary_scalar]
    if trace is None:
        vals = np.zeros((len(nodes), 2))
    else:
        vals = np.asarray(trace(t, nodes), dtype=float).reshape(-1, 2)
    return np.concatenate([vals[:, 0], vals[:, 1]])


def apply_dirichlet(system: SparseSystem, space: MixedSpace, trace, t,
                    current=None) -> SparseSystem:
    """
    Replace the boundary velocity rows by identity rows.

    The right-hand side receives the interpolated trace, or the
    difference ``trace - current`` when the system is in increment form
    (Newton). Columns are left untouched, so a symmetric matrix loses its
    symmetry.
    """
    dofs = space.dirichlet_dofs
    values = dirichlet_values(space, trace, t)
    if current is not None:
        values = values - np.asarray(current)[dofs]
    keep = np.ones(system.matrix.shape[0])
    keep[dofs] = 0.0
    A = sp.diags(keep) @ system.matrix + sp.diags(1.0 - keep)
    A = sp.csr_matrix(A)
    A.eliminate_zeros()
    rhs = np.array(system.rhs, dtype=float)
    rhs[dofs] = values
    return SparseSystem(A, rhs)


def mass_matrix(space: MixedSpace) -> sp.csr_matrix:
    """Velocity L2 mass matrix (``n_u x n_u``)."""
    tab = space.tabulate()
    local = np.einsum("cq,qa,qb->cab", tab.wdet, tab.phi_u, tab.phi_u)
    dofs = space.vel_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    M = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(space.n_scalar,) * 2)
    M.sum_duplicates()
    return sp.block_diag([M, M], format="csr")


def divergence_matrix(space: MixedSpace) -> sp.csr_matrix:
    """``D[r, j] = -(psi_r, div phi_j)`` (``n_p x n_u``)."""
    tab = space.tabulate()
    nc = space.mesh.num_cells
    m = 2 * space.nloc_u
    Bt = -np.einsum("cq,cqai,qr->crai", tab.wdet, tab.grad_u, tab.phi_p)
    Bt = np.swapaxes(Bt, 2, 3).reshape(nc, 3, m)
    rows = np.repeat(space.pres_dofs, m, axis=1).ravel()
    cols = np.tile(space.cell_velocity_dofs(), (1, 3)).ravel()
    D = sp.csr_matrix((Bt.ravel(), (rows, cols)), shape=(space.n_p, space.n_u))
    D.sum_duplicates()
    return D


def convective_form(space: MixedSpace, u, v, quad_degree=None) -> float:
    """``<B^ u, v>`` by quadrature of the pointwise skew density."""
    from .constitutive import temam_kernel

    tab = space.tabulate(quad_degree)
    zero = np.zeros(space.n_p)
    pu = _point_data(space, tab, u, zero)
    pv = _point_data(space, tab, v, zero)
    dens = temam_kernel(pu.u, np.swapaxes(pu.jac, -1, -2),
                        pv.u, np.swapaxes(pv.jac, -1, -2))
    return float(np.sum(tab.wdet * dens))


def stress_form(space: MixedSpace, model: StressModel, u, v, interval_k, tau,
                time_quad=DEFAULT_TIME_QUAD) -> float:
    """``<[S]_k u, v>``."""
    tab = space.tabulate()
    zero = np.zeros(space.n_p)
    Du = sym(_point_data(space, tab, u, zero).jac)
    Dv = sym(_point_data(space, tab, v, zero).jac)
    times, weights = time_nodes(interval_k, tau, time_quad)
    S, _, _ = _mean_stress(model, tab.x, Du, times, weights, False)
    return float(np.einsum("cq,cqij,cqij->", tab.wdet, S, Dv))


def forcing_form(space: MixedSpace, rhs_f, v, interval_k, tau,
                 time_quad=DEFAULT_TIME_QUAD) -> float:
    """``<[f]_k, v>``."""
    forcing = Forcing.coerce(rhs_f)
    if forcing.is_zero:
        return 0.0
    tab = space.tabulate()
    pv = _point_data(space, tab, v, np.zeros(space.n_p))
    times, weights = time_nodes(interval_k, tau, time_quad)
    body, flux = _mean_forcing(forcing, tab.x, times, weights, pv.u.shape)
    return float(np.einsum("cq,cqi,cqi->", tab.wdet, body, pv.u)
                 + np.einsum("cq,cqij,cqij->", tab.wdet, flux, pv.jac))
