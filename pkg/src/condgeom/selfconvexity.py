"""Pointwise criteria for self-convexity and log-convexity checks along geodesics.

For a conformal factor ``alpha`` the quadratic form

    Q(v) = 2 alpha D^2 alpha(v, v) + ||D alpha||^2 ||v||^2 - c (D alpha v)^2

is positive semidefinite everywhere iff ``log alpha`` is convex along the
geodesics of ``alpha <., .>`` (``c = 4``), or ``alpha`` itself is (``c = 2``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import interpolate

from .conformal import ConformalMetric, ConstraintSet, GeodesicPath, polarize
from .errors import DomainError, NotCritical

CONV_TOL = 1e-6
GRID_SIZE = 201
SELFCONVEX_COEFF = 4.0
CONVEX_COEFF = 2.0


def intrinsic_derivatives(metric: ConformalMetric, x, constraints=None):
    """``(alpha, gradient, Hessian)`` of ``alpha``, intrinsic to the constraint set.

    Without constraints these are the flat ambient quantities.  With a
    ConstraintSet they are expressed in an orthonormal basis of the tangent
    space and the Hessian is the Riemannian one of the induced metric:
    ``B^T (D^2 alpha - sum_i mu_i D^2 c_i) B`` with ``mu = (J J^T)^-1 J grad``.
    """
    x = np.asarray(x, dtype=float)
    a = metric.check(x)
    g = np.asarray(metric.grad_alpha(x), dtype=float)
    H = metric.hessian(x)
    if constraints is None:
        return a, g, H
    J = constraints.checked_jacobian(x)
    mu = np.linalg.solve(J @ J.T, J @ g)
    H = H - np.einsum("i,ijk->jk", mu, constraints.hessians(x))
    B = constraints.tangent_basis(x)
    return a, B.T @ g, B.T @ H @ B


def _form(metric, x, coeff, constraints):
    a, g, H = intrinsic_derivatives(metric, x, constraints)
    Q = 2.0 * a * H + (g @ g) * np.eye(H.shape[0]) - coeff * np.outer(g, g)
    Q = 0.5 * (Q + Q.T)
    return Q, float(np.linalg.eigvalsh(Q)[0])


def selfconvex_form(metric: ConformalMetric, x, constraints: Optional[ConstraintSet] = None):
    """Matrix of ``2 alpha D^2 alpha + ||D alpha||^2 I - 4 D alpha (x) D alpha`` and its
    smallest eigenvalue.  ``alpha`` is self-convex at ``x`` iff it is >= 0."""
    return _form(metric, x, SELFCONVEX_COEFF, constraints)


def convex_form(metric: ConformalMetric, x, constraints: Optional[ConstraintSet] = None):
    """As :func:`selfconvex_form` with coefficient 2 (convexity of ``alpha`` itself)."""
    return _form(metric, x, CONVEX_COEFF, constraints)


def condition_min_eigenvalue(metric: ConformalMetric, x, constraints=None) -> float:
    """Smallest eigenvalue of the Hessian of ``log alpha`` in the condition metric.

    Equals ``min eig(Q) / (2 alpha^3)``: same sign as the self-convexity form
    but invariant under rescaling of the ambient space.
    """
    a = metric.check(x)
    _, e = selfconvex_form(metric, x, constraints)
    return e / (2.0 * a**3)


def form_value(metric: ConformalMetric, x, xdot, coeff=SELFCONVEX_COEFF) -> float:
    """``Q(xdot, xdot)`` in ambient coordinates, without assembling the matrix."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    a = metric.check(x)
    g = np.asarray(metric.grad_alpha(x), dtype=float)
    gv = float(g @ xdot)
    return float(2.0 * a * metric.hess_alpha(x, xdot)
                 + (g @ g) * (xdot @ xdot) - coeff * gv * gv)


@dataclass(frozen=True)
class RhoBundle:
    """A positive function ``rho`` with ``alpha = rho^-2``.

    ``hess_rho_sq(x, v)`` is ``D^2 rho^2(x)(v, v)``; ``hess_rho_sq_matrix``
    is optional.
    """

    dim: int
    rho: Callable[[np.ndarray], float]
    grad_rho: Callable[[np.ndarray], np.ndarray]
    hess_rho_sq: Callable[[np.ndarray, np.ndarray], float]
    hess_rho_sq_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def checked_rho(self, x) -> float:
        r = float(self.rho(x))
        if not r > 0:
            raise DomainError(f"rho(x) = {r!r} must be positive")
        return r

    def hess_sq(self, x) -> np.ndarray:
        if self.hess_rho_sq_matrix is not None:
            return np.asarray(self.hess_rho_sq_matrix(x), dtype=float)
        return polarize(lambda v: self.hess_rho_sq(x, v), self.dim)

    def to_metric(self, name="rho^-2") -> ConformalMetric:
        """The conformal metric ``alpha = rho^-2`` with derivatives from rho."""

        def alpha(x):
            return self.checked_rho(x) ** -2

        def grad(x):
            return -2.0 * self.checked_rho(x) ** -3 * np.asarray(self.grad_rho(x))

        def hess(x, v):
            r2 = self.checked_rho(x) ** 2
            d = 2.0 * np.sqrt(r2) * float(np.asarray(self.grad_rho(x)) @ v)
            return 2.0 * r2**-3 * d * d - r2**-2 * self.hess_rho_sq(x, v)

        def hess_matrix(x):
            r = self.checked_rho(x)
            g2 = 2.0 * r * np.asarray(self.grad_rho(x))
            return 2.0 * r**-6 * np.outer(g2, g2) - r**-4 * self.hess_sq(x)

        return ConformalMetric(self.dim, alpha, grad, hess, hess_matrix, name=name)


def rho_form(bundle: RhoBundle, x, xdot) -> float:
    """``2 ||xdot||^2 ||D rho||^2 - D^2 rho^2(xdot, xdot)``; nonnegative for all
    ``xdot`` iff ``rho^-2`` is self-convex at ``x``."""
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    bundle.checked_rho(x)
    g = np.asarray(bundle.grad_rho(x), dtype=float)
    return float(2.0 * (xdot @ xdot) * (g @ g) - bundle.hess_rho_sq(x, xdot))


def rho_form_min(bundle: RhoBundle, x) -> float:
    """Minimum of :func:`rho_form` over unit vectors."""
    x = np.asarray(x, dtype=float)
    bundle.checked_rho(x)
    g = np.asarray(bundle.grad_rho(x), dtype=float)
    M = 2.0 * (g @ g) * np.eye(bundle.dim) - bundle.hess_sq(x)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def sufficient_checks(bundle: RhoBundle, x, tol=1e-10) -> dict:
    """Evaluate the two sufficient conditions for self-convexity of ``rho^-2`` at ``x``.

    ``concave_rho``: ``D^2 rho(x) <= 0``.
    ``hessian_bound``: ``||D^2 rho^2(x)|| <= 2 ||D rho(x)||^2`` (operator norm).
    """
    x = np.asarray(x, dtype=float)
    r = bundle.checked_rho(x)
    g = np.asarray(bundle.grad_rho(x), dtype=float)
    H2 = bundle.hess_sq(x)
    H2 = 0.5 * (H2 + H2.T)
    # rho^2'' = 2 Drho (x) Drho + 2 rho D^2 rho
    H1 = (H2 - 2.0 * np.outer(g, g)) / (2.0 * r)
    max_eig = float(np.linalg.eigvalsh(H1)[-1])
    op_norm = float(np.max(np.abs(np.linalg.eigvalsh(H2))))
    bound = 2.0 * float(g @ g)
    scale = max(1.0, bound)
    return {
        "concave_rho": max_eig <= tol * scale,
        "hessian_bound": op_norm <= bound + tol * scale,
        "max_eig_hess_rho": max_eig,
        "op_norm_hess_rho_sq": op_norm,
        "twice_grad_rho_sq": bound,
    }


@dataclass
class ConvexityReport:
    """Discrete convexity test of ``log alpha`` along a sampled path."""

    samples: list
    min_second_difference: float
    verdict: str
    conv_tol: float
    scale: float
    grid_size: int
    min_form_eigenvalue: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "samples": [[t, la, d2] for t, la, d2 in self.samples],
            "min_d2": self.min_second_difference,
            "min_eig": self.min_form_eigenvalue,
            "verdict": self.verdict,
            "tolerances": {"conv_tol": self.conv_tol, "scale": self.scale,
                           "grid_size": self.grid_size},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _uniform_samples(path, grid_size):
    if isinstance(path, GeodesicPath):
        t, xs, vs = path.times, path.xs, path.vs
    else:
        t, xs = path[0], path[1]
        vs = path[2] if len(path) > 2 else None
    t = np.asarray(t, dtype=float)
    xs = np.asarray(xs, dtype=float)
    h = np.diff(t)
    uniform = np.allclose(h, h[0], rtol=1e-12, atol=0.0)
    if uniform and (grid_size is None or len(t) == grid_size):
        return t, xs
    grid = np.linspace(t[0], t[-1], grid_size)
    if vs is not None:
        spline = interpolate.CubicHermiteSpline(t, xs, np.asarray(vs))
    else:
        spline = interpolate.CubicSpline(t, xs)
    return grid, spline(grid)


def log_convexity_along_path(path, alpha=None, grid_size=GRID_SIZE,
                             conv_tol=CONV_TOL, speed_tol=None) -> ConvexityReport:
    """Check convexity of ``t -> log alpha(path(t))`` by centred second differences.

    ``path`` is a GeodesicPath or a ``(t, x[, v])`` triple.  Samples on the
    path's own uniform nodes are used directly; otherwise the path is
    interpolated onto ``grid_size`` uniform nodes.  Second differences are
    divided by ``h^2``.  The verdict is PASS iff every one is at least
    ``-conv_tol * scale`` with ``scale = max(1, range of log alpha)``.

    If ``speed_tol`` is given and ``path`` is a GeodesicPath, its metric
    speed drift must not exceed it (the path has to be a geodesic).
    """
    if alpha is None:
        alpha = path.metric.check
    if speed_tol is not None and isinstance(path, GeodesicPath):
        drift = path.speed_drift()
        if drift > speed_tol:
            raise ValueError(f"path is not a geodesic: metric speed drift {drift:.2e}")
    t, xs = _uniform_samples(path, grid_size)
    try:
        vals = np.array([float(alpha(x)) for x in xs])
    except DomainError:
        raise
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise DomainError("alpha is not positive along the path")
    f = np.log(vals)
    h = t[1] - t[0]
    d2 = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    scale = max(1.0, float(f.max() - f.min()))
    min_d2 = float(d2.min()) if d2.size else 0.0
    verdict = "PASS" if min_d2 >= -conv_tol * scale else "FAIL"
    samples = [(float(t[0]), float(f[0]), None)]
    samples += [(float(ti), float(fi), float(di)) for ti, fi, di in zip(t[1:-1], f[1:-1], d2)]
    samples.append((float(t[-1]), float(f[-1]), None))
    return ConvexityReport(samples, min_d2, verdict, conv_tol, scale, len(t))


@dataclass(frozen=True)
class CriticalPointReport:
    gradient_norm: float
    eigenvalues: tuple
    signature: tuple
    classification: str
    violation: bool
    inconclusive: bool


def critical_point_diagnostic(metric: ConformalMetric, x, crit_tol=1e-8,
                              zero_tol=1e-10) -> CriticalPointReport:
    """Classify a (near-)critical point of ``alpha`` by its Hessian signature.

    A self-convex ``alpha`` has a positive semidefinite Hessian at every
    critical point, so any negative eigenvalue is reported as a violation.
    """
    x = np.asarray(x, dtype=float)
    a = metric.check(x)
    gnorm = float(np.linalg.norm(metric.grad_alpha(x)))
    if gnorm > crit_tol * max(1.0, a):
        raise NotCritical(f"gradient norm {gnorm:.3e} exceeds crit_tol")
    H = metric.hessian(x)
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    thr = zero_tol * max(1.0, float(np.max(np.abs(ev))))
    pos = int(np.sum(ev > thr))
    neg = int(np.sum(ev < -thr))
    zero = ev.size - pos - neg
    if neg == 0 and zero == 0:
        kind = "minimum"
    elif neg == ev.size:
        kind = "maximum"
    elif neg and pos:
        kind = "saddle"
    elif neg:
        kind = "degenerate-negative"
    else:
        kind = "degenerate"
    return CriticalPointReport(gnorm, tuple(float(e) for e in ev), (pos, neg, zero),
                               kind, violation=neg > 0,
                               inconclusive=(neg == 0 and zero > 0))
