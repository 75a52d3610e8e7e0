"""Distance to a submanifold, the nearest-point map ``K`` and its derivative.

Global nearest points are found by multistart local solves, so uniqueness
(membership of the open set ``U`` where ``K`` is single valued) is only
detected heuristically: a result carries ``multiplicity_flag`` when two
distinct local minima tie within ``tie_tol``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .conformal import ConformalMetric, ConstraintSet
from .errors import (ConditionGeometryError, ConfigError, DomainError, MultiplicityError,
                     NoConvergence, SingularJacobianError)
from .selfconvexity import RhoBundle

N_SEEDS = 32
NEWTON_TOL = 1e-12
TIE_RTOL = 1e-6
FOCAL_COND = 1e10


@dataclass(frozen=True)
class Candidate:
    foot: np.ndarray
    rho: float
    data: object = None


@dataclass(frozen=True)
class NearestPointResult:
    foot: np.ndarray
    rho: float
    multiplicity_flag: bool
    newton_residual: float
    candidates: tuple = ()
    data: object = None

    @property
    def tied(self) -> tuple:
        """Candidates whose distance ties with the minimum."""
        return tuple(c for c in self.candidates
                     if abs(c.rho - self.rho) <= TIE_RTOL * (1.0 + self.rho))


class Submanifold:
    """Interface for descriptors of a submanifold ``N`` of ``R^j``."""

    ambient_dim: int
    dim: int
    name = "submanifold"

    def local_minima(self, x) -> list:
        raise NotImplementedError

    def tangent_basis(self, cand: Candidate) -> np.ndarray:
        raise NotImplementedError

    def dk(self, x, cand: Candidate, xdot) -> np.ndarray:
        """``DK(x) xdot`` at a unique nearest point."""
        raise NotImplementedError

    def nearest(self, x, tie_tol=TIE_RTOL) -> NearestPointResult:
        x = np.asarray(x, dtype=float)
        cands = self.local_minima(x)
        if not cands:
            raise NoConvergence(f"{self.name}: no start converged")
        cands = sorted(cands, key=lambda c: c.rho)
        best = cands[0]
        tol = tie_tol * (1.0 + best.rho)
        flag = any(abs(c.rho - best.rho) <= tol
                   and np.linalg.norm(c.foot - best.foot) > tol
                   for c in cands[1:])
        B = self.tangent_basis(best)
        resid = float(np.linalg.norm(B.T @ (x - best.foot))) if B.size else 0.0
        return NearestPointResult(best.foot, best.rho, flag, resid, tuple(cands), best.data)


def nearest_point(N: Submanifold, x) -> NearestPointResult:
    """Closest point of ``N`` to ``x`` (global best of a multistart)."""
    return N.nearest(x)


@dataclass(frozen=True)
class Chart:
    """Immersion ``f: R^k -> R^j`` with ``jac`` (j x k) and ``hess`` (j x k x k)."""

    f: Callable
    jac: Callable
    hess: Callable
    seeds: np.ndarray
    periodic: bool = False


def _newton_on_chart(chart: Chart, x, theta, max_iter=60):
    # Minimise 0.5 ||f(theta) - x||^2; Gauss-Newton steps until the full
    # Hessian is positive definite, then Newton.
    def obj(th):
        r = chart.f(th) - x
        return 0.5 * float(r @ r)

    scale = max(1.0, float(np.linalg.norm(x)))
    for _ in range(max_iter):
        r = chart.f(theta) - x
        Jc = chart.jac(theta)
        g = Jc.T @ r
        if np.linalg.norm(g) <= NEWTON_TOL * scale * max(1.0, np.linalg.norm(Jc)):
            break
        G = Jc.T @ Jc + np.einsum("l,lab->ab", r, chart.hess(theta))
        try:
            np.linalg.cholesky(G)
            step = -np.linalg.solve(G, g)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(Jc.T @ Jc, g, rcond=None)[0]
        f0 = obj(theta)
        lam = 1.0
        while lam > 1e-10:
            cand = theta + lam * step
            if obj(cand) <= f0 - 1e-4 * lam * abs(g @ step) or lam * np.linalg.norm(step) < 1e-15:
                break
            lam *= 0.5
        theta = theta + lam * step
        if lam * np.linalg.norm(step) <= 1e-16 * max(1.0, np.linalg.norm(theta)):
            break
    return theta


def _chart_gram(chart, x, theta):
    Jc = chart.jac(theta)
    r = chart.f(theta) - x
    return Jc, Jc.T @ Jc + np.einsum("l,lab->ab", r, chart.hess(theta))


class ParametricManifold(Submanifold):
    """Submanifold covered by one or more charts, each with its own seeds."""

    def __init__(self, charts: Sequence[Chart], ambient_dim, dim, name="parametric",
                 n_polish=8):
        self.charts = list(charts)
        self.ambient_dim = ambient_dim
        self.dim = dim
        self.name = name
        self.n_polish = n_polish

    def _starting_seeds(self, chart, x):
        seeds = np.atleast_2d(chart.seeds)
        d = np.array([np.sum((chart.f(s) - x) ** 2) for s in seeds])
        if seeds.shape[1] == 1:
            # discrete local minima along the (possibly cyclic) seed sequence
            if chart.periodic:
                left, right = np.roll(d, 1), np.roll(d, -1)
            else:
                left = np.r_[np.inf, d[:-1]]
                right = np.r_[d[1:], np.inf]
            idx = np.flatnonzero((d <= left) & (d <= right))
        else:
            idx = np.argsort(d)[:self.n_polish]
        return seeds[idx]

    def local_minima(self, x):
        out = []
        for ci, chart in enumerate(self.charts):
            for s in self._starting_seeds(chart, x):
                th = _newton_on_chart(chart, x, np.array(s, dtype=float))
                foot = chart.f(th)
                rho = float(np.linalg.norm(x - foot))
                _, G = _chart_gram(chart, x, th)
                if np.linalg.eigvalsh(0.5 * (G + G.T))[0] < -1e-9 * max(1.0, np.abs(G).max()):
                    continue  # saddle or maximum of the distance
                sep = TIE_RTOL * (1.0 + rho)
                if any(np.linalg.norm(c.foot - foot) <= sep for c in out):
                    continue
                out.append(Candidate(foot, rho, (ci, th)))
        return out

    def tangent_basis(self, cand):
        ci, th = cand.data
        return sla.orth(self.charts[ci].jac(th))

    def dk(self, x, cand, xdot):
        ci, th = cand.data
        Jc, G = _chart_gram(self.charts[ci], x, th)
        if np.linalg.cond(G) > FOCAL_COND:
            raise SingularJacobianError(f"{self.name}: focal point, cond(G) > {FOCAL_COND:g}")
        return Jc @ np.linalg.solve(G, Jc.T @ xdot)


def circle(center=(0.0, 0.0), radius=1.0, n_seeds=N_SEEDS) -> ParametricManifold:
    c = np.asarray(center, dtype=float)
    r = float(radius)
    chart = Chart(
        f=lambda t: c + r * np.array([np.cos(t[0]), np.sin(t[0])]),
        jac=lambda t: r * np.array([[-np.sin(t[0])], [np.cos(t[0])]]),
        hess=lambda t: -r * np.array([np.cos(t[0]), np.sin(t[0])]).reshape(2, 1, 1),
        seeds=(2 * np.pi * np.arange(n_seeds) / n_seeds).reshape(-1, 1),
        periodic=True,
    )
    return ParametricManifold([chart], 2, 1, name="circle")


def ellipse(a=2.0, b=1.0, center=(0.0, 0.0), n_seeds=N_SEEDS) -> ParametricManifold:
    c = np.asarray(center, dtype=float)
    chart = Chart(
        f=lambda t: c + np.array([a * np.cos(t[0]), b * np.sin(t[0])]),
        jac=lambda t: np.array([[-a * np.sin(t[0])], [b * np.cos(t[0])]]),
        hess=lambda t: -np.array([a * np.cos(t[0]), b * np.sin(t[0])]).reshape(2, 1, 1),
        seeds=(2 * np.pi * np.arange(n_seeds) / n_seeds).reshape(-1, 1),
        periodic=True,
    )
    return ParametricManifold([chart], 2, 1, name="ellipse")


class Hyperplane(Submanifold):
    """``{y : <normal, y> = offset}``."""

    name = "hyperplane"

    def __init__(self, normal, offset=0.0):
        n = np.asarray(normal, dtype=float)
        self.normal = n / np.linalg.norm(n)
        self.offset = float(offset) / np.linalg.norm(n)
        self.ambient_dim = n.size
        self.dim = n.size - 1
        self._basis = sla.null_space(self.normal[None, :])

    def local_minima(self, x):
        s = float(self.normal @ x) - self.offset
        return [Candidate(x - s * self.normal, abs(s))]

    def tangent_basis(self, cand):
        return self._basis

    def dk(self, x, cand, xdot):
        return xdot - (self.normal @ xdot) * self.normal


class PointSet(Submanifold):
    """A finite set of points (a zero-dimensional submanifold)."""

    name = "point-set"

    def __init__(self, points):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.ambient_dim = self.points.shape[1]
        self.dim = 0

    def local_minima(self, x):
        return [Candidate(p.copy(), float(np.linalg.norm(x - p)), i)
                for i, p in enumerate(self.points)]

    def tangent_basis(self, cand):
        return np.zeros((self.ambient_dim, 0))

    def dk(self, x, cand, xdot):
        return np.zeros(self.ambient_dim)


class ImplicitManifold(Submanifold):
    """``{y : c(y) = 0}``; nearest points by Newton on the KKT system."""

    def __init__(self, constraints: ConstraintSet, n_seeds=N_SEEDS, seed=0,
                 seed_scale=1.0, name=None):
        self.constraints = constraints
        self.ambient_dim = constraints.dim
        self.dim = constraints.dim - constraints.codim
        self.n_seeds = n_seeds
        self.seed = seed
        self.seed_scale = seed_scale
        self.name = name or constraints.name

    def _kkt(self, x, y, mu):
        cs = self.constraints
        for _ in range(60):
            J = cs.checked_jacobian(y)
            F = np.concatenate([y - x + J.T @ mu, np.atleast_1d(cs.c(y))])
            if np.linalg.norm(F) <= NEWTON_TOL * max(1.0, np.linalg.norm(x)):
                return y, mu, True
            K = self._kkt_matrix(y, mu, J)
            step = np.linalg.solve(K, -F)
            y = y + step[:y.size]
            mu = mu + step[y.size:]
        return y, mu, False

    def _kkt_matrix(self, y, mu, J=None):
        cs = self.constraints
        J = cs.checked_jacobian(y) if J is None else J
        d, k = cs.dim, cs.codim
        K = np.zeros((d + k, d + k))
        K[:d, :d] = np.eye(d) + np.einsum("i,ijk->jk", mu, cs.hessians(y))
        K[:d, d:] = J.T
        K[d:, :d] = J
        return K

    def local_minima(self, x):
        cs = self.constraints
        rng = np.random.default_rng(self.seed)
        starts = [x] + [x + self.seed_scale * rng.standard_normal(x.size)
                        for _ in range(self.n_seeds - 1)]
        out = []
        for s in starts:
            try:
                y = cs.project(s)
                J = cs.checked_jacobian(y)
                mu = -np.linalg.solve(J @ J.T, J @ (y - x))
                y, mu, ok = self._kkt(x, y, mu)
            except (np.linalg.LinAlgError, ConditionGeometryError):
                continue
            if not ok:
                continue
            B = cs.tangent_basis(y)
            Hred = B.T @ (np.eye(cs.dim) + np.einsum("i,ijk->jk", mu, cs.hessians(y))) @ B
            if Hred.size and np.linalg.eigvalsh(Hred)[0] < -1e-9:
                continue
            rho = float(np.linalg.norm(x - y))
            if any(np.linalg.norm(c.foot - y) <= TIE_RTOL * (1.0 + rho) for c in out):
                continue
            out.append(Candidate(y, rho, mu))
        return out

    def tangent_basis(self, cand):
        return self.constraints.tangent_basis(cand.foot)

    def dk(self, x, cand, xdot):
        K = self._kkt_matrix(cand.foot, cand.data)
        if np.linalg.cond(K) > FOCAL_COND:
            raise SingularJacobianError(f"{self.name}: focal point")
        rhs = np.concatenate([xdot, np.zeros(self.constraints.codim)])
        return np.linalg.solve(K, rhs)[:self.ambient_dim]


class RankDeficientSet(Submanifold):
    """Rank-deficient ``n x m`` matrices (flattened), reached by removing the
    component of ``A`` along a left vector ``u`` minimising ``||A^T u||``.

    The minimising ``u`` is found by inverse and Rayleigh-quotient iteration
    on ``A A^T`` from several starts; no SVD of ``A`` is taken.
    """

    name = "rank-deficient"

    def __init__(self, n, m, n_seeds=8, seed=0):
        self.n, self.m = n, m
        self.ambient_dim = n * m
        self.dim = n * m - (m - n + 1)
        self.n_seeds = n_seeds
        self.seed = seed

    def _min_vector(self, C, u):
        u = u / np.linalg.norm(u)
        try:
            for _ in range(30):
                u = np.linalg.solve(C, u)
                u /= np.linalg.norm(u)
        except np.linalg.LinAlgError:
            return u
        lam = float(u @ C @ u)
        for _ in range(5):
            if np.linalg.norm(C @ u - lam * u) <= 1e-15 * np.linalg.norm(C):
                break
            try:
                w = np.linalg.solve(C - lam * np.eye(self.n), u)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(w)):
                break
            u = w / np.linalg.norm(w)
            lam = float(u @ C @ u)
        return u

    def local_minima(self, x):
        A = np.asarray(x, dtype=float).reshape(self.n, self.m)
        C = A @ A.T
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.n_seeds):
            u = self._min_vector(C, rng.standard_normal(self.n))
            foot = (A - np.outer(u, u @ A)).ravel()
            rho = float(np.linalg.norm(A.T @ u))
            if any(abs(abs(float(u @ c.data)) - 1.0) <= 1e-8 for c in out):
                continue
            out.append(Candidate(foot, rho, u))
        return out

    def tangent_basis(self, cand):
        # normal space at S: {u w^T : w orthogonal to the row space of S}
        S = cand.foot.reshape(self.n, self.m)
        u = cand.data
        W = sla.null_space(S) if S.size else np.zeros((self.m, 0))
        normals = np.array([np.outer(u, w).ravel() for w in W.T])
        return sla.null_space(normals) if normals.size else np.eye(self.ambient_dim)

    def dk(self, x, cand, xdot):
        h = 1e-6
        f = lambda y: self.nearest(y).foot
        return (f(x + h * xdot) - f(x - h * xdot)) / (2 * h)


def _unique(N, x, guard=True):
    res = N.nearest(x)
    if res.multiplicity_flag and guard:
        raise MultiplicityError(f"{N.name}: nearest point is not unique")
    return res


def dK(N: Submanifold, x, xdot) -> np.ndarray:
    """Derivative of the nearest-point map, ``DK(x) xdot``."""
    x = np.asarray(x, dtype=float)
    res = _unique(N, x)
    return N.dk(x, Candidate(res.foot, res.rho, res.data), np.asarray(xdot, dtype=float))


def dK_matrix(N: Submanifold, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    res = _unique(N, x)
    cand = Candidate(res.foot, res.rho, res.data)
    E = np.eye(x.size)
    return np.column_stack([N.dk(x, cand, e) for e in E])


def rho_identities(N: Submanifold, x, xdot):
    """``(D rho^2(x) xdot, D^2 rho^2(x)(xdot, xdot), <DK(x) xdot, xdot>)``.

    Uses ``D rho^2 xdot = 2 <x - K(x), xdot>`` and
    ``D^2 rho^2(xdot, xdot) = 2 ||xdot||^2 - 2 <DK xdot, xdot>``.
    """
    x = np.asarray(x, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    res = _unique(N, x)
    if res.rho <= 0:
        raise DomainError("x lies on the submanifold")
    dkx = N.dk(x, Candidate(res.foot, res.rho, res.data), xdot)
    mono = float(dkx @ xdot)
    return 2.0 * float((x - res.foot) @ xdot), 2.0 * float(xdot @ xdot) - 2.0 * mono, mono


class _NearestCache:
    def __init__(self, N, guard):
        self.N = N
        self.guard = guard
        self.entry = (None, None)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        cached_key, val = self.entry
        if key != cached_key:
            res = _unique(self.N, x, self.guard)
            if res.multiplicity_flag:
                cands = res.tied
            else:
                cands = (Candidate(res.foot, res.rho, res.data),)
            normal = np.mean([x - c.foot for c in cands], axis=0)
            val = (res, cands, normal)
            self.entry = (key, val)
        return val


def distance_bundle(N: Submanifold, guard=True) -> RhoBundle:
    """``rho = d(., N)`` with derivatives from the nearest-point map.

    With ``guard`` (default) points with tied nearest points raise
    MultiplicityError.  Without it the derivatives at a tie are the averages
    over the tied candidates (the symmetric one-sided choice).
    """
    near = _NearestCache(N, guard)

    def rho(x):
        return near(x)[0].rho

    def grad_rho(x):
        res, _, normal = near(x)
        if res.rho <= 0:
            raise DomainError("x lies on the submanifold")
        return normal / res.rho

    def dk_mat(x):
        x = np.asarray(x, dtype=float)
        _, cands, _ = near(x)
        E = np.eye(x.size)
        mats = [np.column_stack([N.dk(x, c, e) for e in E]) for c in cands]
        D = np.mean(mats, axis=0)
        return 0.5 * (D + D.T)

    def hess_rho_sq(x, v):
        v = np.asarray(v, dtype=float)
        _, cands, _ = near(x)
        mono = np.mean([N.dk(np.asarray(x, dtype=float), c, v) @ v for c in cands])
        return 2.0 * float(v @ v) - 2.0 * float(mono)

    def hess_rho_sq_matrix(x):
        return 2.0 * np.eye(N.ambient_dim) - 2.0 * dk_mat(x)

    return RhoBundle(N.ambient_dim, rho, grad_rho, hess_rho_sq, hess_rho_sq_matrix)


def distance_metric(N: Submanifold, guard=True) -> ConformalMetric:
    """Conformal metric ``alpha = d(x, N)^-2`` on ``U \\ N``.

    Derivatives follow the chain ``D alpha = -rho^-4 D rho^2`` and
    ``D^2 alpha = 2 rho^-6 D rho^2 (x) D rho^2 - rho^-4 D^2 rho^2`` with
    ``D rho^2 = 2 (x - K)`` and ``D^2 rho^2 = 2 I - 2 DK``.  Without ``guard``
    the derivatives at a tie are averaged over the tied branches.
    """
    near = _NearestCache(N, guard)
    dim = N.ambient_dim

    def rho(x):
        res = near(x)[0]
        if res.rho <= 0:
            raise DomainError("x lies on the submanifold")
        return res.rho

    def branches(x):
        x = np.asarray(x, dtype=float)
        r = rho(x)
        return x, r, near(x)[1]

    def alpha(x):
        return rho(x) ** -2

    def grad(x):
        x, r, cands = branches(x)
        return np.mean([-2.0 * r**-4 * (x - c.foot) for c in cands], axis=0)

    def hess(x, v):
        x, r, cands = branches(x)
        v = np.asarray(v, dtype=float)
        vals = []
        for c in cands:
            d = 2.0 * float((x - c.foot) @ v)
            h2 = 2.0 * float(v @ v) - 2.0 * float(N.dk(x, c, v) @ v)
            vals.append(2.0 * r**-6 * d * d - r**-4 * h2)
        return float(np.mean(vals))

    def hess_matrix(x):
        x, r, cands = branches(x)
        E = np.eye(dim)
        mats = []
        for c in cands:
            g2 = 2.0 * (x - c.foot)
            D = np.column_stack([N.dk(x, c, e) for e in E])
            H2 = 2.0 * E - (D + D.T)
            mats.append(2.0 * r**-6 * np.outer(g2, g2) - r**-4 * H2)
        return np.mean(mats, axis=0)

    return ConformalMetric(dim, alpha, grad, hess, hess_matrix, name=f"distance[{N.name}]")


# -- projective distance --------------------------------------------------

class ProjectiveSubmanifold:
    """Submanifold of ``P(R^j)`` given by unit representatives.

    Either a finite set of lines (``points``) or a curve of unit vectors
    ``chart(theta)`` with derivative ``chart_jac`` and second derivative
    ``chart_hess`` (each a function of a scalar ``theta``).
    """

    def __init__(self, ambient_dim, points=None, chart=None, chart_jac=None,
                 chart_hess=None, n_seeds=N_SEEDS, period=2 * np.pi):
        self.ambient_dim = ambient_dim
        self.points = None if points is None else np.atleast_2d(np.asarray(points, float))
        if self.points is not None:
            self.points = self.points / np.linalg.norm(self.points, axis=1, keepdims=True)
        self.chart = chart
        self.chart_jac = chart_jac
        self.chart_hess = chart_hess
        self.seeds = period * np.arange(n_seeds) / n_seeds
        self.period = period

    def cone(self) -> ParametricManifold:
        """The cone ``p^-1(N)`` (all multiples of the representatives)."""
        s_seeds = np.linspace(-3.0, 3.0, 7)
        charts = []
        if self.points is not None:
            for y in self.points:
                charts.append(Chart(
                    f=lambda t, y=y: t[0] * y,
                    jac=lambda t, y=y: y.reshape(-1, 1),
                    hess=lambda t, y=y: np.zeros((y.size, 1, 1)),
                    seeds=s_seeds.reshape(-1, 1)))
            return ParametricManifold(charts, self.ambient_dim, 1, name="cone")

        def f(p):
            return p[1] * self.chart(p[0])

        def jac(p):
            return np.column_stack([p[1] * self.chart_jac(p[0]), self.chart(p[0])])

        def hess(p):
            H = np.zeros((self.ambient_dim, 2, 2))
            H[:, 0, 0] = p[1] * self.chart_hess(p[0])
            H[:, 0, 1] = H[:, 1, 0] = self.chart_jac(p[0])
            return H

        seeds = np.array([[t, s] for t in self.seeds for s in s_seeds])
        return ParametricManifold([Chart(f, jac, hess, seeds)], self.ambient_dim, 2,
                                  name="cone", n_polish=16)


def projective_distance(Np: ProjectiveSubmanifold, x) -> float:
    """``d_P(p(x), N) = min_y sin(angle(x, y))`` over representatives ``y`` of N."""
    x = np.asarray(x, dtype=float)
    xh = x / np.linalg.norm(x)

    def sin2(y):
        c = float(xh @ y) / float(np.linalg.norm(y))
        return max(0.0, 1.0 - c * c)

    if Np.points is not None:
        return float(np.sqrt(min(sin2(y) for y in Np.points)))
    vals = np.array([sin2(Np.chart(t)) for t in Np.seeds])
    # antipodal symmetry: sin^2 is even in the representative, so each
    # discrete minimum (cyclic) is refined on its own bracket
    left, right = np.roll(vals, 1), np.roll(vals, -1)
    best = np.inf
    h = Np.seeds[1] - Np.seeds[0]
    for i in np.flatnonzero((vals <= left) & (vals <= right)):
        t0 = Np.seeds[i]
        r = optimize.minimize_scalar(lambda t: sin2(Np.chart(t)),
                                     bracket=(t0 - h, t0, t0 + h),
                                     method="brent", options={"xtol": 1e-12})
        best = min(best, float(r.fun), vals[i])
    return float(np.sqrt(best))


# -- descriptors from configuration --------------------------------------

def polynomial_constraints(dim, polynomials, name="implicit") -> ConstraintSet:
    """ConstraintSet from polynomials given as lists of ``[coef, exponents]``."""
    polys = []
    for p in polynomials:
        terms = [(float(c), np.asarray(e, dtype=int)) for c, e in p]
        for _, e in terms:
            if e.size != dim or np.any(e < 0):
                raise ConfigError(f"bad exponent vector {e.tolist()} for dim={dim}")
        polys.append(terms)

    def mono(x, e):
        return float(np.prod(x ** e))

    def dmono(x, e, i):
        if e[i] == 0:
            return 0.0
        e2 = e.copy()
        e2[i] -= 1
        return e[i] * mono(x, e2)

    def ddmono(x, e, i, j):
        if e[i] == 0:
            return 0.0
        e2 = e.copy()
        e2[i] -= 1
        return e[i] * dmono(x, e2, j)

    def c(x):
        return np.array([sum(a * mono(x, e) for a, e in p) for p in polys])

    def jac(x):
        return np.array([[sum(a * dmono(x, e, i) for a, e in p) for i in range(dim)]
                         for p in polys])

    def hmats(x):
        return np.array([[[sum(a * ddmono(x, e, i, j) for a, e in p) for j in range(dim)]
                          for i in range(dim)] for p in polys])

    return ConstraintSet(dim, len(polys), c, jac,
                         lambda x, v: np.einsum("kij,i,j->k", hmats(x), v, v),
                         hmats, name=name)


def descriptor_from_config(cfg: dict) -> Submanifold:
    """Build a descriptor from a dict (see README for the format)."""
    try:
        kind = cfg["type"]
        if kind == "circle":
            return circle(cfg.get("center", (0.0, 0.0)), cfg.get("radius", 1.0))
        if kind == "ellipse":
            return ellipse(cfg["a"], cfg["b"], cfg.get("center", (0.0, 0.0)))
        if kind == "point-set":
            return PointSet(cfg["points"])
        if kind == "hyperplane":
            return Hyperplane(cfg["normal"], cfg.get("offset", 0.0))
        if kind == "implicit":
            cs = polynomial_constraints(int(cfg["dim"]), cfg["polynomials"])
            return ImplicitManifold(cs, seed=int(cfg.get("seed", 0)),
                                    seed_scale=float(cfg.get("seed_scale", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid descriptor config: {exc}") from exc
    raise ConfigError(f"unknown descriptor type {cfg.get('type')!r}")


def load_descriptor(path) -> Submanifold:
    with open(path) as fh:
        return descriptor_from_config(json.load(fh))
