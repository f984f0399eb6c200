"""Damped Newton iteration with a sparse direct (pivoted LU) linear solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class FactorizationError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    """Newton did not converge; ``stats`` carries the iteration history."""

    def __init__(self, message, stats):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_iter: int = 50
    damping_factor: float = 0.5
    max_halvings: int = 20

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolveStats:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    damping: list = field(default_factory=list)   # halvings per iteration

    @property
    def converged_residual(self) -> float:
        return self.residuals[-1]

    def observed_order(self, floor: float = 1e-11) -> float:
        """
        Convergence order from the last three residual norms above
        ``floor * residuals[0]`` (values below it are round-off).
        """
        r = [x for x in self.residuals if x > floor * self.residuals[0]]
        if len(r) < 3:
            return float("nan")
        r0, r1, r2 = r[-3:]
        return float(np.log(r2 / r1) / np.log(r1 / r0))


def sparse_factor_solve(matrix, rhs) -> np.ndarray:
    """Solve ``matrix x = rhs`` by SuperLU with partial pivoting."""
    A = sp.csc_matrix(matrix)
    if A.shape[0] != A.shape[1]:
        raise FactorizationError(f"matrix is not square: {A.shape}")
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise FactorizationError(str(exc)) from exc
    x = lu.solve(np.asarray(rhs, dtype=float))
    if not np.all(np.isfinite(x)):
        raise FactorizationError("factorization produced non-finite values")
    return x


def newton_solve(residual_fn, jacobian_fn, x0, cfg: NewtonConfig | None = None,
                 linear_solve=sparse_factor_solve):
    """
    Damped Newton iteration.

    Stops once ``|r(x)| <= abs_tol`` or ``|r(x)| <= rel_tol * |r(x0)|``
    (Euclidean norms). A step is accepted when it decreases the residual
    norm; otherwise it is halved up to ``cfg.max_halvings`` times.

    Returns
    -------
    x : ndarray
    stats : SolveStats
    """
    cfg = cfg or NewtonConfig()
    x = np.array(x0, dtype=float)
    r = np.atleast_1d(np.asarray(residual_fn(x), dtype=float))
    rnorm = float(np.linalg.norm(r))
    stats = SolveStats(residuals=[rnorm])
    target = max(cfg.abs_tol, cfg.rel_tol * rnorm)
    if rnorm <= cfg.abs_tol:
        return x, stats

    for it in range(1, cfg.max_iter + 1):
        J = jacobian_fn(x)
        if sp.issparse(J):
            dx = linear_solve(J, -r)
        else:
            J = np.atleast_2d(np.asarray(J, dtype=float))
            try:
                dx = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(str(exc)) from exc
        lam = 1.0
        for halvings in range(cfg.max_halvings + 1):
            x_try = x + lam * dx
            r_try = np.atleast_1d(np.asarray(residual_fn(x_try), dtype=float))
            rn_try = float(np.linalg.norm(r_try))
            if np.isfinite(rn_try) and rn_try < rnorm:
                break
            lam *= cfg.damping_factor
        else:
            stats.iterations = it
            raise NewtonError(
                f"no residual decrease after {cfg.max_halvings} halvings "
                f"(|r| = {rnorm:.3e})", stats)
        x, r, rnorm = x_try, r_try, rn_try
        stats.iterations = it
        stats.residuals.append(rnorm)
        stats.damping.append(halvings)
        if halvings:
            log.debug("Newton iteration %d damped %d times", it, halvings)
        if rnorm <= target:
            return x, stats
    raise NewtonError(
        f"Newton did not converge in {cfg.max_iter} iterations "
        f"(|r| = {rnorm:.3e})", stats)


def export_matrix(matrix, path) -> None:
    """Write ``i j value`` triplets (0-based) for debugging."""
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for i, j, v in zip(A.row[order], A.col[order], A.data[order]):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
