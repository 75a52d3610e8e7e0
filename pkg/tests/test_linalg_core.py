import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from condgeom import linalg_core as lc
from condgeom.errors import DimensionError, OrthogonalityError, SingularGapError
from conftest import E

D21 = np.diag([2.0, 1.0])


def sigma_n(A):
    return np.linalg.svd(A, compute_uv=False)[-1]


def test_smallest_singular_diagonal_and_zero():
    assert lc.smallest_singular(D21) == pytest.approx(1.0, abs=1e-15)
    assert lc.smallest_singular(np.zeros((2, 3))) == 0.0


def test_smallest_singular_is_distance_to_rank_deficient(rng):
    A = rng.standard_normal((4, 6))
    # oracle: best rank-3 approximation by truncating the SVD
    P, s, Vt = np.linalg.svd(A, full_matrices=False)
    trunc = (P[:, :3] * s[:3]) @ Vt[:3]
    assert lc.smallest_singular(A) == pytest.approx(np.linalg.norm(A - trunc), abs=1e-10)
    # random rank-3 matrices never get closer
    best = min(np.linalg.norm(A - rng.standard_normal((4, 3)) @ rng.standard_normal((3, 6)))
               for _ in range(2000))
    assert best >= lc.smallest_singular(A) - 1e-12


def test_dimension_error():
    with pytest.raises(DimensionError):
        lc.as_point(np.ones((3, 2)))
    with pytest.raises(DimensionError):
        lc.as_point(np.ones(3))


def test_matrix_point_reconstructs(rng):
    A = rng.standard_normal((3, 5))
    p = lc.as_point(A)
    assert np.linalg.norm(p.reconstruct() - A) <= 1e-12 * np.linalg.norm(A)
    assert np.all(np.diff(p.sigma) <= 0)
    assert p.gap >= 0 and p.in_gl_simple()
    U = rng.standard_normal((3, 5))
    assert p.align(U).frobenius_norm == pytest.approx(np.linalg.norm(U), rel=1e-12)


def test_sign_convention(rng):
    p = lc.as_point(rng.standard_normal((4, 5)))
    for k in range(4):
        col = p.P[:, k]
        assert col[np.argmax(np.abs(col))] > 0


def test_d_sigma_n_diagonal():
    assert lc.d_sigma_n(D21, E(2, 2, 1, 1)) == pytest.approx(1.0)
    assert lc.d_sigma_n(D21, E(2, 2, 0, 1)) == pytest.approx(0.0, abs=1e-15)


def test_d2_sigma_n_sq_diagonal():
    assert lc.d2_sigma_n_sq(D21, E(2, 2, 1, 1)) == pytest.approx(2.0)
    U = E(2, 2, 0, 1)
    val = lc.d2_sigma_n_sq(D21, U)
    assert val == pytest.approx(-2.0 / 3.0, abs=1e-14)
    fd = lc.fd_oracle(lambda t: sigma_n(D21 + t * U) ** 2, 0.0, 1.0, order=2)
    assert fd == pytest.approx(val, abs=1e-5)


def test_gap_guard():
    with pytest.raises(SingularGapError):
        lc.d_sigma_n(np.eye(2), E(2, 2, 0, 0))
    with pytest.raises(SingularGapError):
        lc.d2_sigma_n_sq(np.diag([1.0, 1.0 - 1e-12]), E(2, 2, 0, 0))


@pytest.mark.parametrize("n,m", [(1, 3), (2, 2), (3, 5), (5, 6)])
def test_derivatives_match_fd(rng, n, m):
    for _ in range(10):
        A = lc.random_gl_point(rng, n, m)
        U = rng.standard_normal((n, m))
        f = lambda t: sigma_n(A + t * U)
        d1 = lc.d_sigma_n(A, U)
        assert d1 == pytest.approx(lc.fd_oracle(f, 0.0, 1.0), abs=1e-6 * max(1, abs(d1)))
        d2 = lc.d2_sigma_n_sq(A, U)
        fd2 = lc.fd_oracle(lambda t: f(t) ** 2, 0.0, 1.0, order=2)
        assert d2 == pytest.approx(fd2, abs=1e-5 * max(1.0, abs(d2)))


def test_hessian_matrix_matches_quadratic_form(rng):
    A = lc.random_gl_point(rng, 3, 4)
    H = lc.hess_sigma_n_sq_matrix(A)
    assert np.allclose(H, H.T, atol=1e-12)
    for _ in range(5):
        U = rng.standard_normal((3, 4))
        V = rng.standard_normal((3, 4))
        assert U.ravel() @ H @ U.ravel() == pytest.approx(lc.d2_sigma_n_sq(A, U), rel=1e-10)
        assert U.ravel() @ H @ V.ravel() == pytest.approx(lc.d2_sigma_n_sq(A, U, V), rel=1e-9, abs=1e-12)


def test_singular_vector_derivative_examples():
    assert np.allclose(lc.singular_vector_derivative(D21, E(2, 2, 1, 1)), 0.0, atol=1e-15)
    U = E(2, 2, 1, 0) + E(2, 2, 0, 1)
    du = lc.singular_vector_derivative(D21, U)
    assert abs(du[1]) <= 1e-15 and abs(du[0]) > 0
    fd = lc.fd_oracle(lambda t: lc.as_point(D21 + t * U).u_n, 0.0, 1.0)
    assert np.allclose(du, fd, atol=1e-5)


def test_singular_vector_derivative_residual(rng):
    for _ in range(10):
        A = lc.random_gl_point(rng, 4, 5)
        U = rng.standard_normal((4, 5))
        p = lc.as_point(A)
        du = lc.singular_vector_derivative(A, U)
        u = p.u_n
        s2 = p.smallest ** 2
        ds2 = 2 * p.smallest * lc.d_sigma_n(A, U)
        rhs = (U @ A.T + A @ U.T) @ u - ds2 * u
        lhs = (s2 * np.eye(4) - A @ A.T) @ du
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1, np.linalg.norm(rhs))
        assert abs(u @ du) <= 1e-12
        fd = lc.fd_oracle(lambda t: lc.as_point(A + t * U).u_n, 0.0, 1.0)
        assert np.allclose(du, fd, atol=1e-5)


def _great_circle(A, U):
    w = np.linalg.norm(U) / np.linalg.norm(A)
    return lambda t: np.cos(w * t) * A + np.sin(w * t) * U / w


def _rho(X):
    return sigma_n(X) / np.linalg.norm(X)


def test_rho_sphere_derivatives_examples():
    U = E(2, 2, 0, 1)
    drho, d2 = lc.rho_sphere_derivatives(D21, U)
    assert drho == pytest.approx(0.0, abs=1e-15)
    assert d2 == pytest.approx(-32.0 / 150.0, abs=1e-14)
    g = _great_circle(D21, U)
    assert lc.fd_oracle(lambda t: _rho(g(t)) ** 2, 0.0, 1.0, order=2) == pytest.approx(d2, abs=1e-5)

    U = E(2, 2, 1, 1) - 0.2 * D21
    drho, d2 = lc.rho_sphere_derivatives(D21, U)
    g = _great_circle(D21, U)
    assert lc.fd_oracle(lambda t: _rho(g(t)), 0.0, 1.0) == pytest.approx(drho, abs=1e-8)
    assert lc.fd_oracle(lambda t: _rho(g(t)) ** 2, 0.0, 1.0, order=2) == pytest.approx(d2, abs=1e-5)


def test_rho_sphere_requires_tangency():
    with pytest.raises(OrthogonalityError):
        lc.rho_sphere_derivatives(D21, E(2, 2, 1, 1))


def test_fd_oracle_basics():
    assert lc.fd_oracle(lambda x: x * x, 3.0, 1.0, h=1e-5) == pytest.approx(6.0, abs=1e-8)
    for order in (1, 2):
        assert lc.fd_oracle(lambda x: 4.2, np.ones(3), np.ones(3), order=order) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError):
        lc.fd_oracle(lambda x: x, 0.0, 1.0, order=3)


def test_unitary_invariance(rng):
    for _ in range(10):
        A = lc.random_gl_point(rng, 3, 5)
        U = rng.standard_normal((3, 5))
        P, Q = lc.random_orthogonal(rng, 3), lc.random_orthogonal(rng, 5)
        assert lc.smallest_singular(P @ A @ Q.T) == pytest.approx(lc.smallest_singular(A), abs=1e-10)
        assert lc.d_sigma_n(P @ A @ Q.T, P @ U @ Q.T) == pytest.approx(lc.d_sigma_n(A, U), abs=1e-10)


gl_shapes = st.tuples(st.integers(1, 5), st.integers(0, 2)).map(lambda t: (t[0], t[0] + t[1]))


@settings(max_examples=60, deadline=None)
@given(shape=gl_shapes, seed=st.integers(0, 2**32 - 1))
def test_gradient_norm_and_upper_bound(shape, seed):
    rng = np.random.default_rng(seed)
    A = lc.random_gl_point(rng, *shape)
    assert np.linalg.norm(lc.grad_sigma_n(A)) == pytest.approx(1.0, abs=1e-10)
    U = rng.standard_normal(shape)
    assert lc.d2_sigma_n_sq(A, U) <= 2 * np.sum(U**2) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(shape=gl_shapes, seed=st.integers(0, 2**32 - 1))
def test_polarization_is_symmetric_bilinear(shape, seed):
    rng = np.random.default_rng(seed)
    A = lc.random_gl_point(rng, *shape)
    U, V = rng.standard_normal(shape), rng.standard_normal(shape)
    q = lambda X: lc.d2_sigma_n_sq(A, X)
    b_uv = 0.5 * (q(U + V) - q(U) - q(V))
    b_vu = 0.5 * (q(V + U) - q(V) - q(U))
    assert b_uv == pytest.approx(b_vu, abs=1e-9)
    assert b_uv == pytest.approx(lc.d2_sigma_n_sq(A, U, V), abs=1e-9 * max(1, abs(b_uv)))


def test_random_gl_point_rejection_rule(rng):
    for _ in range(20):
        A = lc.random_gl_point(rng, 3, 4)
        s = np.linalg.svd(A, compute_uv=False)
        assert s[-2] - s[-1] > 0.05 * s[0] and s[-1] > 1e-3
