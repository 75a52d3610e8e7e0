"""Acceptance suite: one pass/fail line per criterion.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import os
import sys
import tempfile
import time

import numpy as np
import pytest

from condgeom import cli
from condgeom import instances as inst
from condgeom import linalg_core as lc
from condgeom import nearest_point as npm
from condgeom.conformal import condition_length
from condgeom.errors import DomainError
from condgeom.selfconvexity import condition_min_eigenvalue, selfconvex_form

RESULTS = {}


def _summary(rep, key):
    vals = [t["margins"][key] for t in rep["trials"] if key in t["margins"]]
    return min(vals) if vals else float("nan"), max(vals) if vals else float("nan")


def crit_01_derivatives():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst1 = worst2 = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(n, 7))
        A = lc.random_gl_point(rng, n, m)
        U = rng.standard_normal((n, m))
        U /= np.linalg.norm(U)
        f = lambda t: lc.smallest_singular(A + t * U)
        d1 = lc.d_sigma_n(A, U)
        fd1 = lc.fd_oracle(f, 0.0, 1.0, h=lc.FD_STEP_FIRST * np.linalg.norm(A))
        d2 = lc.d2_sigma_n_sq(A, U)
        fd2 = lc.fd_oracle(lambda t: f(t) ** 2, 0.0, 1.0, order=2,
                           h=lc.FD_STEP_SECOND * np.linalg.norm(A))
        # relative to max(|value|, ||U||^k) with ||U|| = 1
        worst1 = max(worst1, abs(d1 - fd1) / max(abs(fd1), 1.0))
        worst2 = max(worst2, abs(d2 - fd2) / max(abs(fd2), 1.0))
    dt = time.perf_counter() - t0
    ok = worst1 <= 1e-5 and worst2 <= 1e-5 and dt < 30
    return ok, f"500 points, max rel err D={worst1:.2e} D2={worst2:.2e} (tol 1e-5), {dt:.1f}s (<30s)"


def crit_02_gl_geodesics():
    t0 = time.perf_counter()
    rep = cli.run("verify-gl", {"trials": 200, "seed": 2, "random_dims": True, "max_dim": 6,
                                "horizon": 2.0, "tol": 1e-6})
    dt = time.perf_counter() - t0
    d2 = _summary(rep, "min_second_difference")[0]
    drift = _summary(rep, "speed_drift")[1]
    ok = rep["summary"]["pass"] and drift <= 1e-6 and dt < 120
    return ok, (f"200 geodesics, min d2={d2:.3e} (>= -1e-6*scale), max speed drift={drift:.1e}, "
                f"errors={rep['summary']['n_errors']}, {dt:.1f}s (<120s)")


def crit_03_pointwise_form():
    rng = np.random.default_rng(303)
    worst_norm = np.inf
    raw_fail = 0
    worst_rel = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        m = int(rng.integers(n, 7))
        metric = inst.gl_metric(n, m)
        x = lc.random_gl_point(rng, n, m).ravel()
        _, e = selfconvex_form(metric, x)
        worst_norm = min(worst_norm, condition_min_eigenvalue(metric, x))
        if e < -1e-8:
            raw_fail += 1
            # size of the terms that cancel inside Q
            a, g = metric.alpha(x), metric.grad_alpha(x)
            terms = 2 * a * np.abs(metric.hessian(x)).max() + 4 * g @ g
            worst_rel = max(worst_rel, -e / terms)
    ok = worst_norm >= -1e-8
    return ok, (f"1000 points, min eig(Q)/(2 alpha^3)={worst_norm:.2e} (>= -1e-8); "
                f"raw eig below -1e-8 at {raw_fail} points, worst |eig|/term size={worst_rel:.1e}")


def crit_04_sphere_projective():
    parts = []
    ok = True
    for exp in ("verify-sphere", "verify-projective"):
        rep = cli.run(exp, {"trials": 100, "seed": 4, "tol": 1e-6, "drift_tol": 1e-8})
        d2 = _summary(rep, "min_second_difference")[0]
        drift = _summary(rep, "constraint_drift")[1]
        ok = ok and rep["summary"]["pass"] and drift <= 1e-8
        parts.append(f"{exp.split('-')[1]}: min d2={d2:.2e} drift={drift:.1e}")
    return ok, "100 paths each; " + "; ".join(parts)


def crit_05_radial_projection():
    rng = np.random.default_rng(505)
    metric = inst.gl_metric(3, 4)
    worst = np.inf
    count = 0
    while count < 50:
        P0, P1, P2 = (lc.random_gl_point(rng, 3, 4).ravel() for _ in range(3))

        def X(t):
            return P0 + t * P1 + t * t * P2, P1 + 2 * t * P2

        def Y(t):
            x, xd = X(t)
            r = np.linalg.norm(x)
            return x / r, xd / r - x * (x @ xd) / r**3

        try:
            L = condition_length(metric, X, interval=(0.0, 1.0))
            Lp = condition_length(metric, Y, interval=(0.0, 1.0))
        except DomainError:
            continue
        worst = min(worst, L - Lp)
        count += 1
    return worst >= -1e-9, f"50 paths, min L(X) - L(X/||X||) = {worst:.3e} (>= -1e-9)"


def crit_06_solution_variety():
    rep = cli.run("verify-solution-variety", {"trials": 200, "seed": 6, "n": 3})
    lemma_max = _summary(rep, "lemma_value")[1]
    d2 = _summary(rep, "min_second_difference")[0]
    ok = rep["summary"]["pass"] and lemma_max <= -1e-10
    return ok, (f"200 starts, max lemma value={lemma_max:.3e} (<= -1e-10), min d2={d2:.3e}, "
                f"errors={rep['summary']['n_errors']}")


def crit_07_frobenius():
    rep = cli.run("counterexample-frobenius", {})
    v = rep["trials"][0]["margins"]["form_value"]
    ok = abs(v + 15 / 8) <= 1e-9 and v < 0 and rep["summary"]["pass"]
    return ok, f"form value={v!r} (expected -15/8 within 1e-9, negative)"


def crit_08_hyperbolic():
    rep = cli.run("example-hyperbolic", {"trials": 101, "seed": 8})
    err = rep["trials"][0]["margins"]["max_error"]
    eigs = [t["margins"]["min_eigenvalue"] for t in rep["trials"][1:]]
    worst = max(abs(e) for e in eigs)
    ok = err <= 1e-8 and worst <= 1e-9 and rep["summary"]["pass"]
    return ok, f"geodesic max err={err:.1e} (<=1e-8), max |min eig| over 100 points={worst:.1e} (<=1e-9)"


def crit_09_distance():
    ok = True
    parts = []
    configs = [({"type": "circle"}, 167), ({"type": "ellipse", "a": 2.0, "b": 1.0}, 167),
               ({"type": "hyperplane", "normal": [0.3, -1.0, 0.5], "offset": 0.2}, 166)]
    for desc, k in configs:
        rep = cli.run("verify-distance", {"descriptor": desc, "trials": k, "seed": 9,
                                          "geodesics": False, "fd_tol": 1e-5})
        orth = _summary(rep, "orthogonality_residual")[1]
        mono = _summary(rep, "monotonicity")[0]
        ident = _summary(rep, "identity_error")[1]
        lip = _summary(rep, "lipschitz")[0]
        ok = ok and rep["summary"]["pass"]
        parts.append(f"{desc['type']}: orth={orth:.0e} mono>={mono:.1e} fd={ident:.0e} lip>={lip:.0e}")
    return ok, "500 samples; " + "; ".join(parts)


def crit_10_examples():
    circ = cli.run("example-circle", {})
    two = cli.run("example-two-points", {})
    err = circ["trials"][0]["margins"]["max_abs_error"]
    d2 = two["trials"][0]["margins"]["min_second_difference"]
    ok = err <= 1e-6 and two["trials"][0]["margins"]["convexity_verdict"] == "FAIL" and d2 < -1e-3
    return ok, f"circle max |log alpha - 2|t||={err:.1e} (<=1e-6); two-points verdict FAIL, min d2={d2:.3f} (< -1e-3)"


def crit_11_cross_identity():
    rng = np.random.default_rng(1111)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(n, 7))
        A = rng.standard_normal((n, m))
        rho = npm.RankDeficientSet(n, m).nearest(A.ravel()).rho
        worst = max(worst, abs(rho - lc.smallest_singular(A)))
    return worst <= 1e-8, f"100 matrices, max |d(A, rank-deficient) - sigma_n(A)|={worst:.1e} (<=1e-8)"


def crit_12_determinism():
    with tempfile.TemporaryDirectory() as d:
        outs = []
        for k, workers in enumerate((1, 1, 4)):
            out = os.path.join(d, str(k))
            cli.main(["verify-gl", "--trials", "6", "--seed", "12", "--out", out,
                      "--workers", str(workers)])
            with open(os.path.join(out, "report.json"), "rb") as fh:
                outs.append(fh.read())
    ok = outs[0] == outs[1] == outs[2]
    return ok, "verify-gl seed 12 run 3x (1, 1, 4 workers): reports byte-identical" if ok \
        else "reports differ between runs"


CRITERIA = [
    (1, "derivative exactness", crit_01_derivatives),
    (2, "log-convexity along GL geodesics", crit_02_gl_geodesics),
    (3, "pointwise self-convexity form on GL", crit_03_pointwise_form),
    (4, "sphere and projective geodesics", crit_04_sphere_projective),
    (5, "radial projection shortens condition length", crit_05_radial_projection),
    (6, "solution variety", crit_06_solution_variety),
    (7, "Frobenius counterexample", crit_07_frobenius),
    (8, "hyperbolic model", crit_08_hyperbolic),
    (9, "distance function and nearest-point map", crit_09_distance),
    (10, "circle and two-point examples", crit_10_examples),
    (11, "sigma_n equals distance to rank-deficient set", crit_11_cross_identity),
    (12, "determinism", crit_12_determinism),
]


def run_criterion(num, title, fn):
    try:
        ok, detail = fn()
    except Exception as exc:  # report, then let pytest show the failure
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} ({title}): {detail}"
    RESULTS[num] = line
    print(line, flush=True)
    return ok, line


@pytest.mark.acceptance
@pytest.mark.parametrize("num,title,fn", CRITERIA, ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(num, title, fn):
    ok, line = run_criterion(num, title, fn)
    assert ok, line


if __name__ == "__main__":
    results = [run_criterion(*c)[0] for c in CRITERIA]
    sys.exit(0 if all(results) else 1)
