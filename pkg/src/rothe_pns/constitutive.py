"""
Power-law stress with (p, delta)-structure.

All tensor arguments are numpy arrays of shape ``(..., 2, 2)`` holding
symmetric matrices; ``A : B`` is the Frobenius product and
``|A| = sqrt(A : A)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

Viscosity = Union[float, Callable]


class SingularPointError(ArithmeticError):
    """Stress derivative requested where the law is not differentiable."""


def frob(A, B):
    return np.einsum("...ij,...ij->...", A, B)


def norm(A):
    return np.sqrt(frob(A, A))


def sym(G):
    """Symmetric part of ``(..., 2, 2)`` matrices."""
    return 0.5 * (G + np.swapaxes(G, -1, -2))


@dataclass(frozen=True)
class StressModel:
    """
    ``S(t, x, A) = nu(t, x) * (delta + |A|)**(p - 2) * A``.

    ``nu`` is a positive constant or a callable ``nu(t, x)`` taking a
    scalar time and points of shape ``(..., 2)``.
    """

    p: float
    delta: float = 0.0
    nu: Viscosity = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")

    def viscosity(self, t, x):
        x = np.asarray(x, dtype=float)
        if callable(self.nu):
            return np.broadcast_to(np.asarray(self.nu(t, x), dtype=float), x.shape[:-1])
        return np.full(x.shape[:-1], float(self.nu))


def _power(base, expo):
    # 0 ** negative -> inf; callers mask those entries
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.power(base, expo)


def stress(model: StressModel, t, x, A):
    """Evaluate the stress; the zero tensor maps to zero for every p."""
    A = np.asarray(A, dtype=float)
    a = norm(A)
    scale = _power(model.delta + a, model.p - 2.0)
    scale = np.where(a > 0, scale, 0.0)
    return (model.viscosity(t, x) * scale)[..., None, None] * A


def tangent_coefficients(model: StressModel, t, x, A):
    """
    Coefficients ``(c1, c2)`` of the derivative
    ``DS[A] H = c1 * H + c2 * (A : H) * A``.
    """
    A = np.asarray(A, dtype=float)
    a = norm(A)
    base = model.delta + a
    if model.p < 2 and np.any(base == 0):
        raise SingularPointError(
            "stress derivative undefined at A = 0 with delta = 0 and p < 2")
    nu = model.viscosity(t, x)
    c1 = nu * _power(base, model.p - 2.0)
    if model.p == 2:
        c2 = np.zeros_like(a)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            c2 = nu * (model.p - 2.0) * _power(base, model.p - 3.0) / a
        c2 = np.where(a > 0, c2, 0.0)
    return c1, c2


def stress_derivative(model: StressModel, t, x, A):
    """
    Derivative of :func:`stress` as a fourth-order array ``C`` with
    ``DS[A] H = einsum('...ijkl,...kl->...ij', C, H)``.

    Acts on symmetric ``H``; the result is symmetric in ``(ij)`` and
    ``(kl)`` and major-symmetric.
    """
    A = np.asarray(A, dtype=float)
    c1, c2 = tangent_coefficients(model, t, x, A)
    eye = np.eye(2)
    ident = 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    return (c1[..., None, None, None, None] * ident
            + c2[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", A, A))


def apply_derivative(model: StressModel, t, x, A, H):
    c1, c2 = tangent_coefficients(model, t, x, A)
    return c1[..., None, None] * H + (c2 * frob(A, H))[..., None, None] * A


def natural_map(model: StressModel, A):
    """``F(A) = (delta + |A|)**((p - 2) / 2) * A``."""
    A = np.asarray(A, dtype=float)
    a = norm(A)
    scale = np.where(a > 0, _power(model.delta + a, 0.5 * (model.p - 2.0)), 0.0)
    return scale[..., None, None] * A


def temam_kernel(u, grad_u, v, grad_v):
    """
    Pointwise density ``1/2 (u (x) v) : M_u - 1/2 (u (x) u) : M_v``.

    ``M_w`` must be passed with ``M_w[..., i, j] = d w_j / d x_i`` (the
    transpose of the Jacobian), so the density integrates to the skew
    convective form ``1/2 (u.grad u, v) - 1/2 (u.grad v, u)``. It
    vanishes identically when ``v = u``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    first = np.einsum("...i,...j,...ij->...", u, v, grad_u)
    second = np.einsum("...i,...j,...ij->...", u, u, grad_v)
    return 0.5 * first - 0.5 * second
