"""Geodesics of conformal metrics ``alpha(x) <., .>`` on flat space and on
implicitly defined submanifolds.

Points are flat 1-D arrays.  Matrix-valued spaces flatten row-major.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate

from .errors import (ConditionGeometryError, ConstraintDrift, ConvergenceError,
                     DomainError, RankError, SingularGapError, StepFailure)

log = logging.getLogger(__name__)

ALPHA_CAP = 1e12
RTOL = 1e-9
ATOL = 1e-10


@dataclass(frozen=True)
class ConformalMetric:
    """Conformal factor ``alpha`` over flat ``R^dim`` with its derivatives.

    ``hess_alpha(x, v)`` returns the quadratic form ``D^2 alpha(x)(v, v)``.
    ``hess_matrix`` is optional; when absent the matrix is recovered by
    polarisation.
    """

    dim: int
    alpha: Callable[[np.ndarray], float]
    grad_alpha: Callable[[np.ndarray], np.ndarray]
    hess_alpha: Callable[[np.ndarray, np.ndarray], float]
    hess_matrix: Optional[Callable[[np.ndarray], np.ndarray]] = None
    in_domain: Optional[Callable[[np.ndarray], bool]] = None
    name: str = "conformal"

    def check(self, x) -> float:
        """Return ``alpha(x)``, raising DomainError off the domain."""
        x = np.asarray(x, dtype=float)
        if self.in_domain is not None and not self.in_domain(x):
            raise DomainError(f"{self.name}: point outside the metric domain")
        a = float(self.alpha(x))
        if not a > 0 or not np.isfinite(a):
            raise DomainError(f"{self.name}: alpha = {a!r} is not positive")
        return a

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.hess_matrix is not None:
            return np.asarray(self.hess_matrix(x), dtype=float)
        return polarize(lambda v: self.hess_alpha(x, v), self.dim)

    def metric_speed(self, x, v) -> float:
        """Riemannian speed ``sqrt(alpha(x)) ||v||``."""
        return float(np.sqrt(self.alpha(x)) * np.linalg.norm(v))


def polarize(q, dim) -> np.ndarray:
    """Symmetric matrix of a quadratic form ``q`` via polarisation."""
    E = np.eye(dim)
    H = np.empty((dim, dim))
    diag = np.array([q(E[i]) for i in range(dim)])
    for i in range(dim):
        H[i, i] = diag[i]
        for j in range(i + 1, dim):
            H[i, j] = H[j, i] = 0.5 * (q(E[i] + E[j]) - diag[i] - diag[j])
    return H


def flat_metric(dim) -> ConformalMetric:
    """``alpha = 1``: the Euclidean metric."""
    return ConformalMetric(
        dim,
        alpha=lambda x: 1.0,
        grad_alpha=lambda x: np.zeros(dim),
        hess_alpha=lambda x, v: 0.0,
        hess_matrix=lambda x: np.zeros((dim, dim)),
        name="flat",
    )


@dataclass(frozen=True)
class ConstraintSet:
    """Submanifold ``{x : c(x) = 0}`` of ``R^dim`` with ``codim`` equations.

    ``hess_c(x, v)`` returns the vector of ``v^T D^2 c_i(x) v``.
    ``hess_matrices`` (optional) returns the stacked ``(codim, dim, dim)``
    Hessians.
    """

    dim: int
    codim: int
    c: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    hess_c: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_matrices: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "constraints"
    rank_tol: float = 1e-8

    def checked_jacobian(self, x) -> np.ndarray:
        J = np.atleast_2d(np.asarray(self.jacobian(x), dtype=float))
        s = np.linalg.svd(J, compute_uv=False)
        if s[-1] <= self.rank_tol:
            raise RankError(f"{self.name}: constraint Jacobian lost rank "
                            f"(smallest singular value {s[-1]:.3e})")
        return J

    def hessians(self, x) -> np.ndarray:
        if self.hess_matrices is not None:
            return np.asarray(self.hess_matrices(x), dtype=float)
        H = np.empty((self.codim, self.dim, self.dim))
        E = np.eye(self.dim)
        for i in range(self.dim):
            H[:, i, i] = self.hess_c(x, E[i])
            for j in range(i + 1, self.dim):
                val = 0.5 * (self.hess_c(x, E[i] + E[j])
                             - self.hess_c(x, E[i]) - self.hess_c(x, E[j]))
                H[:, i, j] = H[:, j, i] = val
        return H

    def tangent_basis(self, x) -> np.ndarray:
        """Orthonormal basis (columns) of ``ker J(x)``."""
        J = self.checked_jacobian(x)
        _, _, Vt = np.linalg.svd(J, full_matrices=True)
        return Vt[self.codim:].T

    def project_velocity(self, x, v) -> np.ndarray:
        J = self.checked_jacobian(x)
        return v - J.T @ np.linalg.solve(J @ J.T, J @ v)

    def project(self, x, tol=1e-14, max_iter=30) -> np.ndarray:
        """Gauss-Newton projection onto ``c = 0`` (minimum-norm corrections)."""
        x = np.array(x, dtype=float)
        scale = max(1.0, float(np.linalg.norm(x)))
        for _ in range(max_iter):
            r = np.atleast_1d(self.c(x))
            if np.linalg.norm(r) <= tol * scale:
                return x
            J = self.checked_jacobian(x)
            x = x - J.T @ np.linalg.solve(J @ J.T, r)
        r = np.atleast_1d(self.c(x))
        if np.linalg.norm(r) <= 1e3 * tol * scale:
            return x
        raise ConstraintDrift(
            f"{self.name}: projection did not converge (residual {np.linalg.norm(r):.3e})")

    def residuals(self, x, v):
        """``(||c(x)||, ||J(x) v||)``."""
        J = np.atleast_2d(self.jacobian(x))
        return float(np.linalg.norm(self.c(x))), float(np.linalg.norm(J @ v))


def geodesic_force(metric: ConformalMetric, x, v) -> np.ndarray:
    """Geodesic acceleration of ``alpha <., .>`` in flat coordinates.

    ``-(D alpha . v / alpha) v + (||v||^2 / (2 alpha)) grad alpha``
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a = metric.check(x)
    g = np.asarray(metric.grad_alpha(x), dtype=float)
    return -(g @ v / a) * v + (v @ v / (2.0 * a)) * g


def constrained_force(metric, constraints: ConstraintSet, x, v) -> np.ndarray:
    """Geodesic acceleration of the metric induced on ``{c = 0}``.

    Adds the multiplier term ``J^T lam`` that keeps ``J a + D^2 c(v, v) = 0``.
    """
    f = geodesic_force(metric, x, v)
    J = constraints.checked_jacobian(x)
    h = np.atleast_1d(constraints.hess_c(x, v))
    lam = -np.linalg.solve(J @ J.T, J @ f + h)
    return f + J.T @ lam


@dataclass
class GeodesicPath:
    """Uniformly sampled solution ``(t, x, v)`` of a geodesic equation.

    ``status`` is ``"complete"`` or ``"domain_exit"``; in the latter case
    the samples stop at the last node that stayed in the domain and
    ``exit_reason`` says why.
    """

    times: np.ndarray
    xs: np.ndarray
    vs: np.ndarray
    accs: np.ndarray
    metric: ConformalMetric
    constraints: Optional[ConstraintSet] = None
    status: str = "complete"
    exit_reason: Optional[str] = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def complete(self) -> bool:
        return self.status == "complete"

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def alphas(self) -> np.ndarray:
        return np.array([self.metric.alpha(x) for x in self.xs])

    def metric_speeds(self) -> np.ndarray:
        return np.sqrt(self.alphas()) * np.linalg.norm(self.vs, axis=1)

    def speed_drift(self) -> float:
        """Relative drift of the metric speed over the path."""
        s = self.metric_speeds()
        return float(np.max(np.abs(s - s[0])) / s[0])

    def constraint_residuals(self):
        if self.constraints is None:
            return 0.0, 0.0
        res = np.array([self.constraints.residuals(x, v)
                        for x, v in zip(self.xs, self.vs)])
        return float(res[:, 0].max()), float(res[:, 1].max())

    def __call__(self, t):
        """Cubic Hermite interpolation of position and velocity."""
        xs = interpolate.CubicHermiteSpline(self.times, self.xs, self.vs)
        vs = interpolate.CubicHermiteSpline(self.times, self.vs, self.accs)
        return xs(t), vs(t)

    def end(self):
        return self.xs[-1], self.vs[-1]

    def to_csv(self, dest=None) -> str:
        """Write ``t, x[0..d), v[0..d), alpha, metric_speed`` rows."""
        d = self.dim
        header = (["t"] + [f"x{i}" for i in range(d)]
                  + [f"v{i}" for i in range(d)] + ["alpha", "metric_speed"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        alphas = self.alphas()
        speeds = np.sqrt(alphas) * np.linalg.norm(self.vs, axis=1)
        for t, x, v, a, s in zip(self.times, self.xs, self.vs, alphas, speeds):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in x]
                       + [repr(float(c)) for c in v] + [repr(float(a)), repr(float(s))])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text


def read_path_csv(source):
    """Read ``(t, x, v)`` arrays from a path CSV (file name or text)."""
    if isinstance(source, str) and "\n" not in source:
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(io.StringIO(str(source))))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    d = sum(1 for h in header if h.startswith("x"))
    return body[:, 0], body[:, 1:1 + d], body[:, 1 + d:1 + 2 * d]


def _integrate(rhs, y0, T, n_out, rtol, atol, method, post=None, check=None,
               max_step=np.inf):
    # Step node to node so every output sample is an accepted solver state,
    # never an interpolated one.
    solver_cls = {"RK45": integrate.RK45, "DOP853": integrate.DOP853}[method]
    times = np.linspace(0.0, T, n_out)
    ys = [np.array(y0, dtype=float)]
    h = None
    nfev = 0
    reason = None
    for k in range(1, n_out):
        try:
            first = None if h is None else min(h, times[k] - times[k - 1])
            solver = solver_cls(rhs, times[k - 1], ys[-1], times[k], rtol=rtol,
                                atol=atol, first_step=first, max_step=max_step)
            while solver.status == "running":
                solver.step()
            nfev += solver.nfev
            if solver.status == "failed":
                raise StepFailure(f"step size control failed near t={solver.t:.6g}")
            y = solver.y
            if post is not None:
                y = post(y)
            if check is not None:
                check(y)
        except (DomainError, SingularGapError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.info("geodesic left the domain at t=%.6g (%s)", times[k], reason)
            break
        h = solver.step_size or None
        ys.append(y)
    return times[:len(ys)], np.array(ys), reason, nfev


def integrate_geodesic(metric: ConformalMetric, x0, v0, T, n_out=201,
                       rtol=RTOL, atol=ATOL, method="RK45",
                       alpha_cap=ALPHA_CAP) -> GeodesicPath:
    """Integrate ``x'' = geodesic_force(x, x')`` on ``[0, T]``.

    The result is sampled at ``n_out`` uniform nodes.  If the path leaves
    the metric domain or ``alpha`` exceeds ``alpha_cap`` the returned path
    is truncated and has ``status == "domain_exit"``.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    metric.check(x0)
    if not np.any(v0):
        raise ValueError("initial velocity must be nonzero")
    d = x0.size

    def rhs(t, y):
        return np.concatenate([y[d:], geodesic_force(metric, y[:d], y[d:])])

    def check(y):
        if metric.check(y[:d]) > alpha_cap:
            raise DomainError(f"alpha exceeded alpha_cap={alpha_cap:g}")

    times, ys, reason, nfev = _integrate(rhs, np.concatenate([x0, v0]), T,
                                         n_out, rtol, atol, method, check=check)
    xs, vs = ys[:, :d], ys[:, d:]
    accs = np.array([geodesic_force(metric, x, v) for x, v in zip(xs, vs)])
    return GeodesicPath(times, xs, vs, accs, metric,
                        status="complete" if reason is None else "domain_exit",
                        exit_reason=reason, stats={"nfev": nfev})


def integrate_constrained_geodesic(metric: ConformalMetric,
                                   constraints: ConstraintSet, x0, v0, T,
                                   n_out=201, rtol=RTOL, atol=ATOL,
                                   method="RK45", alpha_cap=ALPHA_CAP,
                                   start_tol=1e-10) -> GeodesicPath:
    """Geodesic of the metric induced by ``alpha <., .>`` on ``{c = 0}``.

    Multiplier acceleration inside each step; at every output node the
    state is projected back onto the constraint set and its tangent space.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    c0, jv0 = constraints.residuals(x0, v0)
    scale = max(1.0, float(np.linalg.norm(v0)))
    if c0 > start_tol or jv0 > start_tol * scale:
        raise ConstraintDrift(
            f"initial state not on the constraint set (|c|={c0:.2e}, |Jv|={jv0:.2e})")
    metric.check(x0)
    d = x0.size

    def rhs(t, y):
        return np.concatenate(
            [y[d:], constrained_force(metric, constraints, y[:d], y[d:])])

    def post(y):
        x = constraints.project(y[:d])
        v = constraints.project_velocity(x, y[d:])
        return np.concatenate([x, v])

    def check(y):
        if metric.check(y[:d]) > alpha_cap:
            raise DomainError(f"alpha exceeded alpha_cap={alpha_cap:g}")

    times, ys, reason, nfev = _integrate(rhs, np.concatenate([x0, v0]), T,
                                         n_out, rtol, atol, method,
                                         post=post, check=check)
    xs, vs = ys[:, :d], ys[:, d:]
    accs = np.array([constrained_force(metric, constraints, x, v)
                     for x, v in zip(xs, vs)])
    return GeodesicPath(times, xs, vs, accs, metric, constraints,
                        status="complete" if reason is None else "domain_exit",
                        exit_reason=reason, stats={"nfev": nfev})


def _endpoint(metric, constraints, x_a, v, T, rtol, atol, method):
    if constraints is None:
        path = integrate_geodesic(metric, x_a, v, T, n_out=2, rtol=rtol,
                                  atol=atol, method=method)
    else:
        path = integrate_constrained_geodesic(metric, constraints, x_a, v, T,
                                              n_out=2, rtol=rtol, atol=atol,
                                              method=method)
    if not path.complete:
        raise DomainError(path.exit_reason)
    return path.xs[-1]


def shoot_geodesic(metric: ConformalMetric, x_a, x_b, constraints=None, T=1.0,
                   restarts=8, seed=0, pos_tol=1e-10, max_iter=40, n_out=201,
                   rtol=1e-11, atol=1e-12, method="DOP853", return_all=False):
    """Find a geodesic from ``x_a`` to ``x_b`` by shooting on the initial velocity.

    Gauss-Newton with a finite-difference Jacobian, started from the chord
    velocity and ``restarts - 1`` random perturbations of it.  Returns the
    connector of smallest condition length (or all distinct connectors with
    ``return_all``).  Minimality is not certified.
    """
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    metric.check(x_a)
    metric.check(x_b)
    B = np.eye(x_a.size) if constraints is None else constraints.tangent_basis(x_a)
    chord = B.T @ (x_b - x_a) / T
    rng = np.random.default_rng(seed)
    starts = [chord] + [chord + 0.5 * np.linalg.norm(chord) * rng.standard_normal(chord.size)
                        for _ in range(restarts - 1)]

    def residual(w):
        return _endpoint(metric, constraints, x_a, B @ w, T, rtol, atol, method) - x_b

    found = []
    best = np.inf
    for w in starts:
        try:
            r = residual(w)
        except ConditionGeometryError:
            continue
        for _ in range(max_iter):
            nr = np.linalg.norm(r)
            best = min(best, nr)
            if nr <= pos_tol:
                break
            eps = 1e-7 * max(1.0, np.linalg.norm(w))
            Jac = np.empty((r.size, w.size))
            try:
                for i in range(w.size):
                    dw = np.zeros(w.size)
                    dw[i] = eps
                    Jac[:, i] = (residual(w + dw) - residual(w - dw)) / (2 * eps)
            except ConditionGeometryError:
                break
            step = np.linalg.lstsq(Jac, -r, rcond=None)[0]
            lam = 1.0
            while lam > 1e-4:
                try:
                    r_new = residual(w + lam * step)
                    if np.linalg.norm(r_new) < nr:
                        break
                except ConditionGeometryError:
                    pass
                lam *= 0.5
            else:
                break
            w, r = w + lam * step, r_new
        if np.linalg.norm(r) <= pos_tol:
            if not any(np.linalg.norm(w - w2) <= 1e-6 * max(1.0, np.linalg.norm(w2))
                       for w2 in found):
                found.append(w)
    if not found:
        raise ConvergenceError(
            f"shooting failed after {restarts} starts (best residual {best:.3e})", best)
    paths = []
    for w in found:
        if constraints is None:
            p = integrate_geodesic(metric, x_a, B @ w, T, n_out=n_out, rtol=rtol,
                                   atol=atol, method=method)
        else:
            p = integrate_constrained_geodesic(metric, constraints, x_a, B @ w, T,
                                               n_out=n_out, rtol=rtol, atol=atol,
                                               method=method)
        p.stats["endpoint_residual"] = float(np.linalg.norm(p.xs[-1] - x_b))
        p.stats["length"] = condition_length(metric, p)
        paths.append(p)
    paths.sort(key=lambda p: p.stats["length"])
    return paths if return_all else paths[0]


def condition_length(metric: ConformalMetric, path, interval=None,
                     epsabs=1e-13, epsrel=1e-12) -> float:
    """Length ``int sqrt(alpha(x)) ||x'|| dt`` of a curve.

    ``path`` is a GeodesicPath, a ``(t, x, v)`` sample triple, or a callable
    ``t -> (x, x')`` together with ``interval=(a, b)`` (adaptive quadrature).
    """
    if callable(path) and not isinstance(path, GeodesicPath):
        a, b = interval

        def integrand(t):
            x, xd = path(t)
            return np.sqrt(metric.check(x)) * np.linalg.norm(xd)

        val, _ = integrate.quad(integrand, a, b, epsabs=epsabs, epsrel=epsrel,
                                limit=500)
        return float(val)
    if isinstance(path, GeodesicPath):
        t, xs, vs = path.times, path.xs, path.vs
    else:
        t, xs, vs = path
    speeds = np.array([np.sqrt(metric.check(x)) * np.linalg.norm(v)
                       for x, v in zip(xs, vs)])
    if len(t) < 3:
        return float(np.trapezoid(speeds, t))
    return float(integrate.simpson(speeds, x=t))
