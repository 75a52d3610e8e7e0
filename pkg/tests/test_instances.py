import numpy as np
import pytest

from condgeom import instances as inst
from condgeom import linalg_core as lc
from condgeom.conformal import flat_metric, integrate_constrained_geodesic, integrate_geodesic
from condgeom.errors import DimensionError, DomainError, SingularGapError


def check_derivatives(metric, x, rng, tol=1e-5, scale=None):
    # steps scaled by the distance to the singular set (alpha^-1/2 by default)
    scale = min(1.0, metric.alpha(x) ** -0.5 if scale is None else scale)
    v = rng.standard_normal(x.size)
    v /= np.linalg.norm(v)
    g = metric.grad_alpha(x)
    fd1 = lc.fd_oracle(metric.alpha, x, v, h=1e-4 * scale)
    assert g @ v == pytest.approx(fd1, rel=tol, abs=tol * np.linalg.norm(g))
    h = metric.hess_alpha(x, v)
    fd2 = lc.fd_oracle(metric.alpha, x, v, order=2, h=1e-3 * scale)
    assert h == pytest.approx(fd2, rel=tol, abs=tol * max(1.0, abs(h)))
    if metric.hess_matrix is not None:
        assert v @ metric.hess_matrix(x) @ v == pytest.approx(h, rel=1e-9, abs=1e-12)


def test_gl_metric_values():
    m = inst.gl_metric(2, 2)
    x = np.diag([2.0, 1.0]).ravel()
    assert m.alpha(x) == 1.0
    assert np.allclose(m.grad_alpha(x), (-2.0 * np.diag([0.0, 1.0])).ravel(), atol=1e-15)
    v = np.random.default_rng(0).standard_normal(4)
    assert m.grad_alpha(x) @ v == pytest.approx(lc.fd_oracle(m.alpha, x, v), abs=1e-6)
    with pytest.raises(DimensionError):
        inst.gl_metric(3, 2)


def test_gl_metric_fd_consistent(rng):
    for n, m in [(1, 2), (2, 3), (3, 3), (3, 5)]:
        metric = inst.gl_metric(n, m)
        for _ in range(25):
            A = lc.random_gl_point(rng, n, m)
            x = A.ravel()
            assert metric.alpha(x) * lc.smallest_singular(A) ** 2 == pytest.approx(1.0, abs=1e-12)
            check_derivatives(metric, x, rng)


def test_gl_metric_gap_guard():
    m = inst.gl_metric(2, 2)
    assert not m.in_domain(np.eye(2).ravel())
    with pytest.raises(SingularGapError):
        m.grad_alpha(np.eye(2).ravel())


def test_sphere_instance_great_circles():
    cons, metric = inst.sphere_instance(2.0, flat_metric(3))
    path = integrate_constrained_geodesic(metric, cons, [2.0, 0, 0], [0, 2.0, 0], 2.0)
    exact = 2 * np.column_stack([np.cos(path.times), np.sin(path.times), 0 * path.times])
    assert np.max(np.abs(path.xs - exact)) <= 1e-8
    with pytest.raises(ValueError):
        inst.sphere_instance(0.0, flat_metric(3))


def test_projective_alpha2(rng):
    A = np.diag([2.0, 1.0])
    assert inst.projective_alpha2(A) == pytest.approx(5.0, abs=1e-14)
    B = lc.random_gl_point(rng, 3, 4)
    assert inst.projective_alpha2(3 * B) == pytest.approx(inst.projective_alpha2(B), rel=1e-12)
    assert inst.projective_alpha2(-B) == pytest.approx(inst.projective_alpha2(B), rel=1e-12)
    # on the unit sphere alpha_2 is the GL factor
    z = B / np.linalg.norm(B)
    assert inst.projective_alpha2(z) == pytest.approx(inst.gl_metric(3, 4).alpha(z.ravel()), rel=1e-12)
    with pytest.raises(SingularGapError):
        inst.projective_alpha2(np.eye(2))


def test_projective_metric_fd(rng):
    metric = inst.projective_metric(2, 3)
    for _ in range(20):
        A = lc.random_gl_point(rng, 2, 3)
        p = lc.as_point(A)
        check_derivatives(metric, A.ravel(), rng, scale=min(p.smallest, p.gap))


def test_projective_point_frame(rng):
    p = inst.ProjectivePoint.from_vector(rng.standard_normal(6))
    H = p.horizontal
    assert np.linalg.norm(p.z) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(H.T @ H, np.eye(5), atol=1e-12)
    assert np.allclose(H.T @ p.z, 0.0, atol=1e-12)
    u = p.lift(rng.standard_normal(5)) * 1e-3
    y = p.chart(u)
    assert np.linalg.norm(y) == pytest.approx(1.0, abs=1e-15)


def test_solution_variety_base_point():
    n = 2
    cons, _ = inst.solution_variety_instance(n)
    Sigma = np.array([[2.0, 0, 0], [0, 1.0, 0]])
    w = inst.SolutionVarietyPoint(Sigma / np.linalg.norm(Sigma), np.array([0, 0, 1.0]))
    assert np.max(np.abs(cons.c(w.as_vector()))) <= 1e-12
    assert w.residual <= 1e-12


def test_solution_variety_jacobian_and_tangents(rng):
    n = 3
    cons, metric = inst.solution_variety_instance(n)
    w = inst.random_solution_variety_point(rng, n)
    x = w.as_vector()
    assert np.linalg.norm(w.M) == pytest.approx(1.0, abs=1e-10) and w.residual <= 1e-10
    v = rng.standard_normal(x.size)
    fd = lc.fd_oracle(cons.c, x, v)
    assert np.allclose(cons.jacobian(x) @ v, fd, atol=1e-8)
    assert np.allclose(cons.hess_c(x, v), lc.fd_oracle(cons.c, x, v, order=2), atol=1e-5)
    k = n * (n + 1)
    for _ in range(10):
        t = inst.random_tangent(rng, cons, x)
        Md, zd = t[:k].reshape(n, n + 1), t[k:]
        assert np.linalg.norm(Md @ w.zeta + w.M @ zd) <= 1e-10
    check_derivatives(metric, x, rng)


def test_lemma_sign_and_closed_form(rng):
    n = 3
    cons, _ = inst.solution_variety_instance(n)
    k = n * (n + 1)
    for _ in range(20):
        w = inst.random_solution_variety_point(rng, n)
        x = w.as_vector()
        t = inst.random_tangent(rng, cons, x)
        val = inst.lemma_value(n, x, t)
        Md = t[:k]
        expected = -(Md @ Md) * lc.smallest_singular(w.M) / (t @ t)
        assert val < 0
        assert val == pytest.approx(expected, rel=1e-8)


def test_unitary_equivariance_of_profiles(rng):
    n = 2
    cons, metric = inst.solution_variety_instance(n)
    k = n * (n + 1)
    w = inst.random_solution_variety_point(rng, n)
    x = w.as_vector()
    t = inst.random_tangent(rng, cons, x)
    P, Q = lc.random_orthogonal(rng, n), lc.random_orthogonal(rng, n + 1)

    def act(y):
        M, z = y[:k].reshape(n, n + 1), y[k:]
        return np.concatenate([(P @ M @ Q.T).ravel(), Q @ z])

    p1 = integrate_constrained_geodesic(metric, cons, x, t, 0.5, n_out=51)
    p2 = integrate_constrained_geodesic(metric, cons, act(x), act(t), 0.5, n_out=51)
    assert np.allclose(np.log(p1.alphas()), np.log(p2.alphas()), atol=1e-8)


def test_hyperbolic_instance():
    with pytest.raises(DimensionError):
        inst.hyperbolic_instance(1)
    hyp = inst.hyperbolic_instance(2)
    with pytest.raises(DomainError):
        hyp.alpha(np.array([0.0, 0.0]))
    path = integrate_geodesic(hyp, [0.0, 1.0], [0.0, 1.0], 2.0)
    assert np.allclose(np.log(path.alphas()), -2 * path.times, atol=1e-8)
    check_derivatives(hyp, np.array([0.3, 0.8]), np.random.default_rng(1))


def test_frobenius_alpha(rng):
    metric = inst.frobenius_alpha(3)
    assert metric.alpha(np.diag([1.0, 1.0, 2.0]).ravel()) == pytest.approx(9 / 4, abs=1e-15)
    for _ in range(10):
        A = rng.standard_normal((3, 3)) + 2 * np.eye(3)
        check_derivatives(metric, A.ravel(), rng)
    with pytest.raises(DomainError):
        metric.alpha(np.zeros(9))


def test_frobenius_example_literal():
    A = np.diag([1.0, 1.0, 2.0])
    Ad = np.zeros((3, 3))
    Ad[0, 1], Ad[1, 0] = 1.0, -1.0
    convex, selfconvex = inst.frobenius_example_form(A, Ad)
    # 2 (9/4)(2*2 + 4*(-2)) + 4*2*(129/64) - 8*0
    assert convex == pytest.approx(2 * 9 / 4 * (4 - 8) + 8 * 129 / 64, abs=1e-12)
    assert convex == pytest.approx(-15 / 8, abs=1e-12)
    assert selfconvex == pytest.approx(convex, abs=1e-12)  # D alpha . Adot = 0 here
