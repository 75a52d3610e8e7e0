"""Smallest singular value of a full-rank matrix and its derivatives.

Everything is real.  Matrices are ``n x m`` with ``n <= m``.  The smallest
singular value ``sigma_n`` is smooth wherever it is simple; all derivative
routines refuse to run when the gap ``sigma_{n-1} - sigma_n`` falls below
``gap_tol`` (default ``1e-8 * sigma_1``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, OrthogonalityError, SingularGapError

GAP_RTOL = 1e-8
FD_STEP_FIRST = 1e-5
FD_STEP_SECOND = 1e-4


def _fix_signs(P, Q):
    # Make the largest-magnitude entry of each left singular vector positive
    # and flip the paired right singular vector with it.
    n = P.shape[0]
    idx = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[idx, np.arange(n)])
    signs[signs == 0] = 1.0
    P = P * signs
    Q = Q.copy()
    Q[:, :n] *= signs
    return P, Q


@dataclass(frozen=True, eq=False)
class MatrixPoint:
    """A real ``n x m`` matrix together with its full SVD.

    ``entries = P @ diag(sigma) @ Q[:, :n].T`` with ``P`` (n x n) and ``Q``
    (m x m) orthogonal and ``sigma`` non-increasing.
    """

    entries: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    sigma: np.ndarray

    @classmethod
    def from_array(cls, A) -> "MatrixPoint":
        if isinstance(A, MatrixPoint):
            return A
        A = np.array(A, dtype=float)
        if A.ndim != 2:
            raise DimensionError(f"expected a 2-D matrix, got shape {A.shape}")
        n, m = A.shape
        if n > m:
            raise DimensionError(f"need n <= m, got {n} x {m}")
        P, sigma, Vt = np.linalg.svd(A, full_matrices=True)
        P, Q = _fix_signs(P, Vt.T)
        return cls(A, P, Q, sigma)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    @property
    def smallest(self) -> float:
        return float(self.sigma[-1])

    @property
    def gap(self) -> float:
        """``sigma_{n-1} - sigma_n``; infinite for a single row."""
        if self.n == 1:
            return np.inf
        return float(self.sigma[-2] - self.sigma[-1])

    @property
    def u_n(self) -> np.ndarray:
        return self.P[:, -1]

    @property
    def v_n(self) -> np.ndarray:
        return self.Q[:, self.n - 1]

    def default_gap_tol(self) -> float:
        return GAP_RTOL * float(self.sigma[0])

    def in_gl_simple(self, gap_tol=None) -> bool:
        """Membership in GL^>: full rank with a simple smallest singular value."""
        tol = self.default_gap_tol() if gap_tol is None else gap_tol
        return self.smallest > 0 and self.gap > tol

    def reconstruct(self) -> np.ndarray:
        n = self.n
        return (self.P * self.sigma) @ self.Q[:, :n].T

    def align(self, U) -> "AlignedPerturbation":
        U = np.asarray(U, dtype=float).reshape(self.shape)
        return AlignedPerturbation(self.P.T @ U @ self.Q)

    def require_gap(self, gap_tol=None) -> None:
        tol = self.default_gap_tol() if gap_tol is None else gap_tol
        if not self.gap > tol:
            raise SingularGapError(
                f"singular value gap {self.gap:.3e} <= gap_tol {tol:.3e}")


@dataclass(frozen=True)
class AlignedPerturbation:
    """A direction ``U`` expressed in the SVD frame, ``P^T U Q``.

    In this frame the base matrix is ``(Sigma, 0)``.
    """

    u_entries: np.ndarray

    @property
    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.u_entries))


def as_point(A) -> MatrixPoint:
    return MatrixPoint.from_array(A)


def smallest_singular(A) -> float:
    """Smallest singular value, i.e. the Frobenius distance to rank-deficient matrices."""
    return as_point(A).smallest


def d_sigma_n(A, U, gap_tol=None) -> float:
    """First derivative of ``sigma_n`` at ``A`` in direction ``U``: ``u_n^T U v_n``."""
    A = as_point(A)
    A.require_gap(gap_tol)
    U = np.asarray(U, dtype=float).reshape(A.shape)
    return float(A.u_n @ U @ A.v_n)


def grad_sigma_n(A, gap_tol=None) -> np.ndarray:
    """Frobenius gradient of ``sigma_n``; a rank-one matrix of unit norm."""
    A = as_point(A)
    A.require_gap(gap_tol)
    return np.outer(A.u_n, A.v_n)


def _aligned_bilinear(sigma, Ut, Vt):
    # 2 sum_j u_nj v_nj - 2 sum_{k<n} (u_kn s_n + u_nk s_k)(v_kn s_n + v_nk s_k) / (s_k^2 - s_n^2)
    n = sigma.shape[0]
    s_n = sigma[-1]
    s_k = sigma[:-1]
    first = 2.0 * float(Ut[n - 1, :] @ Vt[n - 1, :])
    wu = Ut[:n - 1, n - 1] * s_n + Ut[n - 1, :n - 1] * s_k
    wv = Vt[:n - 1, n - 1] * s_n + Vt[n - 1, :n - 1] * s_k
    second = 2.0 * float(np.sum(wu * wv / (s_k**2 - s_n**2)))
    return first - second


def d2_sigma_n_sq(A, U, V=None, gap_tol=None) -> float:
    """Second derivative of ``sigma_n^2`` at ``A``.

    With ``V`` omitted this is the quadratic form ``D^2 sigma_n^2(A)(U, U)``;
    otherwise the symmetric bilinear form ``(U, V)``.  Evaluated after
    rotating the directions into the SVD frame of ``A``.
    """
    A = as_point(A)
    A.require_gap(gap_tol)
    Ut = A.align(U).u_entries
    Vt = Ut if V is None else A.align(V).u_entries
    return _aligned_bilinear(A.sigma, Ut, Vt)


def hess_sigma_n_sq_matrix(A, gap_tol=None) -> np.ndarray:
    """Matrix of ``D^2 sigma_n^2(A)`` acting on row-major ``vec(U)``."""
    A = as_point(A)
    A.require_gap(gap_tol)
    n, m = A.shape
    sigma = A.sigma
    # Linear functionals of the aligned direction, as (n*m)-vectors.
    rows = []
    weights = []
    for j in range(m):
        e = np.zeros((n, m))
        e[n - 1, j] = 1.0
        rows.append(e.ravel())
        weights.append(2.0)
    for k in range(n - 1):
        w = np.zeros((n, m))
        w[k, n - 1] += sigma[-1]
        w[n - 1, k] += sigma[k]
        rows.append(w.ravel())
        weights.append(-2.0 / (sigma[k] ** 2 - sigma[-1] ** 2))
    L = np.array(rows)
    H_aligned = (L.T * np.array(weights)) @ L
    # vec_r(P^T U Q) = kron(P^T, Q^T) vec_r(U)
    T = np.kron(A.P.T, A.Q.T)
    return T.T @ H_aligned @ T


def singular_vector_derivative(A, U, gap_tol=None) -> np.ndarray:
    """Derivative of the left singular vector ``u_n`` in direction ``U``.

    Solves ``(sigma_n^2 I - A A^T) du = (U A^T + A U^T - D(sigma_n^2) I) u_n``
    with the Moore-Penrose inverse, so ``u_n^T du = 0``.
    """
    A = as_point(A)
    A.require_gap(gap_tol)
    U = np.asarray(U, dtype=float).reshape(A.shape)
    M = A.entries
    u = A.u_n
    s2 = A.smallest**2
    ds2 = 2.0 * float(u @ U @ M.T @ u)
    rhs = (U @ M.T + M @ U.T) @ u - ds2 * u
    # pinv(s2 I - A A^T) = P diag(1 / (s2 - s_k^2), 0) P^T
    inv = np.zeros(A.n)
    inv[:-1] = 1.0 / (s2 - A.sigma[:-1] ** 2)
    return A.P @ (inv * (A.P.T @ rhs))


def rho_sphere_derivatives(A, U, gap_tol=None, tangency_tol=1e-10):
    """Derivatives of ``rho(A) = sigma_n(A) / ||A||_F`` along a tangent ``U``.

    ``U`` must satisfy ``<A, U>_F = 0``.  Returns ``(D rho(A) U,
    D^2 rho^2(A)(U, U))``.
    """
    A = as_point(A)
    U = np.asarray(U, dtype=float).reshape(A.shape)
    normA = np.linalg.norm(A.entries)
    normU = np.linalg.norm(U)
    inner = float(np.sum(A.entries * U))
    if abs(inner) > tangency_tol * max(normA * normU, 1.0):
        raise OrthogonalityError(f"<A, U>_F = {inner:.3e} is not zero")
    A.require_gap(gap_tol)
    Ut = A.align(U).u_entries
    drho = float(Ut[-1, A.n - 1]) / normA
    d2 = _aligned_bilinear(A.sigma, Ut, Ut)
    d2rho2 = (2.0 / normA**2) * (
        0.5 * d2 - normU**2 * A.smallest**2 / normA**2)
    return drho, d2rho2


def fd_oracle(f, x, u, order=1, h=None):
    """Central finite-difference directional derivative of ``f``.

    ``h`` defaults to 1e-5 (first order) or 1e-4 (second order) scaled by
    ``max(1, ||x||)``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if h is None:
        base = FD_STEP_FIRST if order == 1 else FD_STEP_SECOND
        h = base * max(1.0, float(np.linalg.norm(x)))
    if order == 1:
        return (f(x + h * u) - f(x - h * u)) / (2.0 * h)
    if order == 2:
        return (f(x + h * u) - 2.0 * f(x) + f(x - h * u)) / h**2
    raise ValueError(f"order must be 1 or 2, got {order}")


def random_orthogonal(rng, k) -> np.ndarray:
    """Haar-distributed orthogonal ``k x k`` matrix."""
    Z = rng.standard_normal((k, k))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def random_gl_point(rng, n, m, min_gap=0.05, min_sigma=1e-3) -> np.ndarray:
    """Gaussian matrix in GL^> with relative gap above ``min_gap``.

    Rejects draws with ``sigma_{n-1} - sigma_n <= min_gap * sigma_1`` or
    ``sigma_n <= min_sigma``.
    """
    while True:
        A = rng.standard_normal((n, m))
        s = np.linalg.svd(A, compute_uv=False)
        gap = np.inf if n == 1 else s[-2] - s[-1]
        if gap > min_gap * s[0] and s[-1] > min_sigma:
            return A
