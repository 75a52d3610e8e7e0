"""Concrete conformal metrics and constraint sets.

All matrix spaces are flattened row-major, so a point of ``R^{n x m}`` is a
vector of length ``n * m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg_core as lc
from .conformal import (ConformalMetric, ConstraintSet, constrained_force,
                        flat_metric)
from .errors import DimensionError, DomainError
from .selfconvexity import RhoBundle


class _SvdCache:
    # One-entry memo: integrators evaluate alpha, its gradient and the domain
    # test at the same point in quick succession.
    def __init__(self, n, m):
        self.shape = (n, m)
        self.entry = (None, None)

    def __call__(self, x) -> lc.MatrixPoint:
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        cached_key, point = self.entry
        if key != cached_key:
            point = lc.as_point(x.reshape(self.shape))
            # single assignment keeps (key, point) consistent across threads
            self.entry = (key, point)
        return point


def gl_metric(n, m, gap_tol=None) -> ConformalMetric:
    """Condition metric ``sigma_n(A)^-2 <., .>_F`` on ``GL^>_{n,m}``."""
    if not 1 <= n <= m:
        raise DimensionError(f"need 1 <= n <= m, got n={n}, m={m}")
    point = _SvdCache(n, m)

    def parts(x):
        A = point(x)
        if A.smallest <= 0:
            raise DomainError("matrix is rank deficient")
        A.require_gap(gap_tol)
        return A

    def in_domain(x):
        return point(x).in_gl_simple(gap_tol)

    def alpha(x):
        s = point(x).smallest
        if s <= 0:
            raise DomainError("matrix is rank deficient")
        return s**-2

    def grad(x):
        A = parts(x)
        return (-2.0 * A.smallest**-3 * np.outer(A.u_n, A.v_n)).ravel()

    def hess(x, v):
        A = parts(x)
        s2 = A.smallest**2
        ds2 = 2.0 * A.smallest * lc.d_sigma_n(A, v, gap_tol)
        return 2.0 * s2**-3 * ds2**2 - s2**-2 * lc.d2_sigma_n_sq(A, v, gap_tol=gap_tol)

    def hess_matrix(x):
        A = parts(x)
        s2 = A.smallest**2
        g = 2.0 * A.smallest * np.outer(A.u_n, A.v_n).ravel()
        return 2.0 * s2**-3 * np.outer(g, g) - s2**-2 * lc.hess_sigma_n_sq_matrix(A, gap_tol)

    return ConformalMetric(n * m, alpha, grad, hess, hess_matrix, in_domain,
                           name=f"gl[{n}x{m}]")


def sphere_constraints(dim, r=1.0) -> ConstraintSet:
    """``||x||^2 - r^2 = 0``."""
    return ConstraintSet(
        dim, 1,
        c=lambda x: np.array([x @ x - r * r]),
        jacobian=lambda x: 2.0 * np.asarray(x)[None, :],
        hess_c=lambda x, v: np.array([2.0 * (v @ v)]),
        hess_matrices=lambda x: 2.0 * np.eye(dim)[None],
        name=f"sphere(r={r:g})",
    )


def sphere_instance(r, base: ConformalMetric):
    """The sphere of radius ``r`` with the metric induced by ``base``."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return sphere_constraints(base.dim, r), base


def projective_alpha2(A) -> float:
    """``||A||_F^2 / sigma_n(A)^2``; invariant under ``A -> lambda A``."""
    A = lc.as_point(A)
    A.require_gap()
    return float(np.sum(A.entries**2) / A.smallest**2)


def projective_metric(n, m, gap_tol=None) -> ConformalMetric:
    """Ambient metric ``alpha_2 = ||A||^2 sigma_n^-2`` (degree-0 homogeneous)."""
    base = gl_metric(n, m, gap_tol)

    def alpha(x):
        return float(x @ x) * base.alpha(x)

    def grad(x):
        return 2.0 * x * base.alpha(x) + float(x @ x) * base.grad_alpha(x)

    def hess(x, v):
        return (2.0 * (v @ v) * base.alpha(x)
                + 4.0 * (x @ v) * (base.grad_alpha(x) @ v)
                + float(x @ x) * base.hess_alpha(x, v))

    def hess_matrix(x):
        g = base.grad_alpha(x)
        return (2.0 * base.alpha(x) * np.eye(x.size)
                + 2.0 * (np.outer(x, g) + np.outer(g, x))
                + float(x @ x) * base.hessian(x))

    return ConformalMetric(n * m, alpha, grad, hess, hess_matrix,
                           base.in_domain, name=f"projective[{n}x{m}]")


@dataclass(frozen=True)
class ProjectivePoint:
    """A point of ``P(R^{n x m})`` via a unit representative ``z``.

    ``horizontal`` is an orthonormal basis (columns) of ``z^perp``; in the
    real case this is the whole tangent space of the sphere at ``z``.
    """

    z: np.ndarray
    horizontal: np.ndarray

    @classmethod
    def from_vector(cls, y) -> "ProjectivePoint":
        y = np.asarray(y, dtype=float).ravel()
        z = y / np.linalg.norm(y)
        _, _, Vt = np.linalg.svd(z[None, :], full_matrices=True)
        return cls(z, Vt[1:].T)

    def chart(self, u) -> np.ndarray:
        """Unit representative of ``p(z + u)`` for horizontal ``u``."""
        w = self.z + np.asarray(u, dtype=float)
        return w / np.linalg.norm(w)

    def lift(self, coords) -> np.ndarray:
        """Horizontal vector with the given coordinates in ``horizontal``."""
        return self.horizontal @ np.asarray(coords, dtype=float)


@dataclass(frozen=True)
class SolutionVarietyPoint:
    """``(M, zeta)`` with ``||M||_F = ||zeta|| = 1`` and ``M zeta = 0``."""

    M: np.ndarray
    zeta: np.ndarray

    @property
    def residual(self) -> float:
        return float(np.linalg.norm(self.M @ self.zeta))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.M.ravel(), self.zeta])

    @classmethod
    def from_vector(cls, x, n) -> "SolutionVarietyPoint":
        k = n * (n + 1)
        return cls(np.asarray(x[:k]).reshape(n, n + 1), np.asarray(x[k:]))


def solution_variety_constraints(n) -> ConstraintSet:
    """``||M||^2 = 1``, ``||zeta||^2 = 1``, ``M zeta = 0`` on ``R^{n(n+1)} x R^{n+1}``."""
    k = n * (n + 1)
    dim = k + n + 1

    def split(x):
        return np.asarray(x[:k]).reshape(n, n + 1), np.asarray(x[k:])

    def c(x):
        M, z = split(x)
        return np.concatenate([[np.sum(M * M) - 1.0, z @ z - 1.0], M @ z])

    def jac(x):
        M, z = split(x)
        J = np.zeros((n + 2, dim))
        J[0, :k] = 2.0 * M.ravel()
        J[1, k:] = 2.0 * z
        for i in range(n):
            J[2 + i, i * (n + 1):(i + 1) * (n + 1)] = z
            J[2 + i, k:] = M[i]
        return J

    def hess_c(x, v):
        Md, zd = split(v)
        return np.concatenate([[2.0 * np.sum(Md * Md), 2.0 * (zd @ zd)], 2.0 * Md @ zd])

    H = np.zeros((n + 2, dim, dim))
    H[0, :k, :k] = 2.0 * np.eye(k)
    H[1, k:, k:] = 2.0 * np.eye(n + 1)
    for i in range(n):
        for j in range(n + 1):
            H[2 + i, i * (n + 1) + j, k + j] = 1.0
            H[2 + i, k + j, i * (n + 1) + j] = 1.0

    return ConstraintSet(dim, n + 2, c, jac, hess_c, lambda x: H,
                         name=f"solution_variety(n={n})")


def solution_variety_instance(n, gap_tol=None):
    """Constraints of ``W^>`` and the metric ``alpha(M, zeta) = sigma_n(M)^-2``."""
    if n < 1:
        raise DimensionError("n must be >= 1")
    k = n * (n + 1)
    dim = k + n + 1
    base = gl_metric(n, n + 1, gap_tol)

    def alpha(x):
        return base.alpha(x[:k])

    def grad(x):
        g = np.zeros(dim)
        g[:k] = base.grad_alpha(x[:k])
        return g

    def hess(x, v):
        return base.hess_alpha(x[:k], v[:k])

    def hess_matrix(x):
        H = np.zeros((dim, dim))
        H[:k, :k] = base.hessian(x[:k])
        return H

    metric = ConformalMetric(dim, alpha, grad, hess, hess_matrix,
                             lambda x: base.in_domain(x[:k]),
                             name=f"solution_variety_alpha(n={n})")
    return solution_variety_constraints(n), metric


def lemma_value(n, x, xdot) -> float:
    """``D sigma_n(M) M''(0) / ||xdot||^2`` for the Euclidean geodesic of W^> through ``(x, xdot)``.

    Expected to equal ``-||Mdot||^2 sigma_n(M) / ||xdot||^2 < 0``.
    """
    k = n * (n + 1)
    cons = solution_variety_constraints(n)
    acc = constrained_force(flat_metric(cons.dim), cons, x, xdot)
    M = np.asarray(x[:k]).reshape(n, n + 1)
    return lc.d_sigma_n(M, acc[:k].reshape(n, n + 1)) / float(xdot @ xdot)


def random_solution_variety_point(rng, n, min_gap=0.05, min_sigma=1e-3):
    """Normalised Gaussian ``M`` (GL^> rejection rule), ``zeta`` its unit kernel vector."""
    M = lc.random_gl_point(rng, n, n + 1, min_gap, min_sigma)
    M = M / np.linalg.norm(M)
    zeta = np.linalg.svd(M, full_matrices=True)[2][-1]
    return SolutionVarietyPoint(M, zeta)


def random_tangent(rng, constraints: ConstraintSet, x) -> np.ndarray:
    """Gaussian vector projected onto the tangent space at ``x``."""
    B = constraints.tangent_basis(x)
    return B @ rng.standard_normal(B.shape[1])


def hyperbolic_instance(dim=2) -> ConformalMetric:
    """``alpha(x) = x_n^-2`` on the upper half space (Poincare model)."""
    if dim < 2:
        raise DimensionError("dim must be >= 2")

    def in_domain(x):
        return x[-1] > 0

    def alpha(x):
        if x[-1] <= 0:
            raise DomainError("half-space metric needs x_n > 0")
        return x[-1] ** -2

    def grad(x):
        g = np.zeros(dim)
        g[-1] = -2.0 * x[-1] ** -3
        return g

    def hess_matrix(x):
        H = np.zeros((dim, dim))
        H[-1, -1] = 6.0 * x[-1] ** -4
        return H

    return ConformalMetric(dim, alpha, grad,
                           lambda x, v: 6.0 * x[-1] ** -4 * v[-1] ** 2,
                           hess_matrix, in_domain, name=f"hyperbolic[{dim}]")


def frobenius_alpha(n) -> ConformalMetric:
    """``alpha(A) = ||A^-1||_F^2 = sum_k sigma_k^-2`` on invertible ``n x n`` matrices."""

    def inv(x):
        A = np.asarray(x, dtype=float).reshape(n, n)
        if np.linalg.cond(A) > 1e14:
            raise DomainError("matrix is singular")
        return np.linalg.inv(A)

    def alpha(x):
        return float(np.sum(inv(x) ** 2))

    def grad(x):
        B = inv(x)
        return (-2.0 * B.T @ B @ B.T).ravel()

    def hess(x, v):
        B = inv(x)
        Ad = np.asarray(v).reshape(n, n)
        BAB = B @ Ad @ B
        return 2.0 * np.sum(BAB**2) + 4.0 * np.sum(B * (BAB @ Ad @ B))

    return ConformalMetric(n * n, alpha, grad, hess,
                           in_domain=lambda x: np.linalg.cond(np.reshape(x, (n, n))) < 1e14,
                           name=f"frobenius[{n}]")


def frobenius_example_form(A, Adot):
    """Literal evaluation of the Frobenius counterexample quadratic form.

    Returns ``(convex, selfconvex)``: the expression with the ``-8 <.,.>^2``
    term (coefficient ``-2`` on ``(D alpha Adot)^2``) and the variant with
    coefficient ``-4``.
    """
    A = np.asarray(A, dtype=float)
    Ad = np.asarray(Adot, dtype=float)
    B = np.linalg.inv(A)
    BAB = B @ Ad @ B
    d2 = 2.0 * np.sum(BAB**2) + 4.0 * np.sum(B * (BAB @ Ad @ B))
    lin = np.sum(B * BAB)
    head = (2.0 * np.sum(B**2) * d2
            + 4.0 * np.sum(Ad**2) * np.sum((B.T @ B @ B.T) ** 2))
    return float(head - 8.0 * lin**2), float(head - 16.0 * lin**2)


def sigma_rho_bundle(n, m, gap_tol=None):
    """``rho = sigma_n`` on ``GL^>`` as a RhoBundle (``alpha = rho^-2`` is the condition metric)."""
    point = _SvdCache(n, m)

    def rho(x):
        return point(x).smallest

    def grad_rho(x):
        A = point(x)
        A.require_gap(gap_tol)
        return np.outer(A.u_n, A.v_n).ravel()

    def hess_sq(x, v):
        return lc.d2_sigma_n_sq(point(x), v, gap_tol=gap_tol)

    def hess_sq_matrix(x):
        return lc.hess_sigma_n_sq_matrix(point(x), gap_tol)

    return RhoBundle(n * m, rho, grad_rho, hess_sq, hess_sq_matrix)
