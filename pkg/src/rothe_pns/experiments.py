"""
Problem data: the two-vortex flow, the point-singular exact solution,
and a smooth steady Newtonian solution for sanity checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .analysis import ExactSolution
from .constitutive import StressModel, stress, sym
from .forms import Forcing

P_DEFAULT = 11 / 5


def singular_alpha(p: float) -> float:
    return 6 / 5 - 2 / p


# ---------------------------------------------------------------------------
# point singularity at the origin


@dataclass(frozen=True)
class SingularSolution:
    """``u = (t^2, t^2) + |x|^(alpha-1) (x2, -x1)``, zero pressure."""

    p: float = P_DEFAULT
    delta: float = 1e-4

    @property
    def alpha(self) -> float:
        return singular_alpha(self.p)

    @property
    def model(self) -> StressModel:
        return StressModel(self.p, self.delta, 1.0)

    def velocity(self, t, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(r > 0, r ** (self.alpha - 1), 0.0)
        out = np.empty(x.shape)
        out[..., 0] = t * t + g * x[..., 1]
        out[..., 1] = t * t - g * x[..., 0]
        return out

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        a = self.alpha
        x1, x2 = x[..., 0], x[..., 1]
        r = np.hypot(x1, x2)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(r > 0, r ** (a - 1), 0.0)
            h = np.where(r > 0, (a - 1) * r ** (a - 3), 0.0)
        J = np.empty(x.shape + (2,))
        J[..., 0, 0] = h * x1 * x2
        J[..., 0, 1] = h * x2 * x2 + g
        J[..., 1, 0] = -h * x1 * x1 - g
        J[..., 1, 1] = -h * x1 * x2
        return J

    def pressure(self, t, x):
        return np.zeros(np.asarray(x).shape[:-1])

    def exact(self) -> ExactSolution:
        return ExactSolution(self.velocity, self.pressure, self.gradient, (0.0, 0.0))

    def forcing(self) -> Forcing:
        """``f = d_t u - div S(Du) + div(u (x) u)`` in weak form."""
        model = self.model

        def body(t, x):
            out = np.empty(np.asarray(x).shape)
            out[...] = 2.0 * t
            return out

        def flux(t, x):
            u = self.velocity(t, x)
            S = stress(model, t, x, sym(self.gradient(t, x)))
            return S - np.einsum("...i,...j->...ij", u, u)

        return Forcing(body, flux)

    def trace(self, t, x):
        return self.velocity(t, x)


# ---------------------------------------------------------------------------
# smooth steady Stokes-type solution


@dataclass(frozen=True)
class SteadyPolynomialSolution:
    """
    ``u = (3 x^3 y^2, -3 x^2 y^3)`` (divergence free), ``pr = x - y``,
    steady, for the Newtonian law ``S(A) = A`` without convection.
    """

    def velocity(self, t, x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        return np.stack([3 * X**3 * Y**2, -3 * X**2 * Y**3], axis=-1)

    def gradient(self, t, x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        J = np.empty(x.shape + (2,))
        J[..., 0, 0] = 9 * X**2 * Y**2
        J[..., 0, 1] = 6 * X**3 * Y
        J[..., 1, 0] = -6 * X * Y**3
        J[..., 1, 1] = -9 * X**2 * Y**2
        return J

    def pressure(self, t, x):
        x = np.asarray(x, dtype=float)
        return x[..., 0] - x[..., 1]

    def exact(self) -> ExactSolution:
        return ExactSolution(self.velocity, self.pressure, self.gradient, None)

    def forcing(self, model: StressModel) -> Forcing:
        def flux(t, x):
            S = stress(model, t, x, sym(self.gradient(t, x)))
            return S - self.pressure(t, x)[..., None, None] * np.eye(2)

        return Forcing(None, flux)

    def trace(self, t, x):
        return self.velocity(t, x)


# ---------------------------------------------------------------------------
# two vortices


def vortex_viscosity(t, x):
    x = np.asarray(x, dtype=float)
    return t * t + np.exp(-x[..., 0] ** 2 + x[..., 1] ** 2)


def _bump(s):
    return s * s * (1 - s) ** 2


def _dbump(s):
    return 2 * s * (1 - s) * (1 - 2 * s)


@dataclass(frozen=True)
class VortexInitialData:
    """
    One stream-function vortex per region ``[a, b] x [0, 1]``:
    ``u = gamma curl psi``, ``psi = s(xi_1) s(xi_2)``, ``s(z) = z^2 (1-z)^2``,
    with ``gamma`` chosen so that the peak speed equals the region's scale.
    """

    regions: tuple = ((0.0, 2.0, 1.0), (2.0, 3.0, 10.0))
    height: float = 1.0
    samples: int = 801

    def _unit(self, a, b, x):
        xi1 = (x[..., 0] - a) / (b - a)
        xi2 = x[..., 1] / self.height
        inside = (xi1 >= 0) & (xi1 <= 1) & (xi2 >= 0) & (xi2 <= 1)
        u1 = _bump(xi1) * _dbump(xi2) / self.height
        u2 = -_dbump(xi1) * _bump(xi2) / (b - a)
        return np.where(inside[..., None], np.stack([u1, u2], axis=-1), 0.0)

    @lru_cache(maxsize=None)
    def gamma(self, a, b, scale):
        s = np.linspace(0, 1, self.samples)
        X, Y = np.meshgrid(a + (b - a) * s, self.height * s)
        u = self._unit(a, b, np.stack([X, Y], axis=-1))
        return scale / np.linalg.norm(u, axis=-1).max()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        # each field vanishes on its region's boundary, so the sum is continuous
        for a, b, scale in self.regions:
            out += self.gamma(a, b, scale) * self._unit(a, b, x)
        return out
