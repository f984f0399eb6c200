"""Quadrature on the reference triangle and on time intervals."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 14


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Rule on the reference triangle with vertices (0,0), (1,0), (0,1).

    ``points`` are barycentric ``(nq, 3)``; weights sum to the reference
    area 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def xy(self) -> np.ndarray:
        """Reference coordinates ``(nq, 2)``."""
        return self.points[:, 1:]

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature(degree: int) -> QuadratureRule:
    """
    Fully symmetric, positive-weight rule exact for polynomials of
    total degree ``degree`` (1 <= degree <= 14).

    Node tables are the Xiao-Gimbutas rules shipped with ``modepy``.
    """
    if int(degree) != degree or not 1 <= degree <= MAX_DEGREE:
        raise QuadratureError(f"unsupported quadrature degree {degree!r}")
    import modepy

    q = modepy.XiaoGimbutasSimplexQuadrature(int(degree), 2)
    # biunit simplex (-1,-1), (1,-1), (-1,1) -> unit simplex
    xy = 0.5 * (np.asarray(q.nodes).T + 1.0)
    w = np.asarray(q.weights, dtype=float)
    w = w * (0.5 / w.sum())
    bary = np.column_stack([1.0 - xy[:, 0] - xy[:, 1], xy[:, 0], xy[:, 1]])
    for arr in (bary, w):
        arr.setflags(write=False)
    return QuadratureRule(bary, w, int(degree))


@lru_cache(maxsize=None)
def gauss_legendre(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1] (weights sum to 1)."""
    if npts < 1:
        raise QuadratureError("need at least one Gauss point")
    x, w = np.polynomial.legendre.leggauss(int(npts))
    return 0.5 * (x + 1.0), 0.5 * w
