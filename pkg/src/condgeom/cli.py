"""Command-line experiment runner.

Each subcommand runs a batch of trials, writes ``report.json`` (and path CSVs)
into ``--out`` and exits 0 iff every trial agrees with the expected direction
of its claim.  Reports are byte-identical for identical configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import instances as inst
from . import linalg_core as lc
from . import nearest_point as npm
from .conformal import (GeodesicPath, condition_length, integrate_constrained_geodesic,
                        integrate_geodesic, read_path_csv, shoot_geodesic)
from .errors import ConditionGeometryError, ConfigError, DomainError
from .selfconvexity import (convex_form, form_value, log_convexity_along_path, rho_form_min,
                            selfconvex_form)

SCHEMA_VERSION = "1"
log = logging.getLogger("condgeom")


def report_schema_version() -> str:
    return SCHEMA_VERSION


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=float)).tobytes())
    return h.hexdigest()[:16]


def _rng(cfg, index):
    return np.random.default_rng([int(cfg["seed"]), int(index)])


def _unit_metric_speed(metric, x, v):
    return v / (np.sqrt(metric.check(x)) * np.linalg.norm(v))


def _save_path(cfg, index, path: GeodesicPath):
    if cfg.get("out") and cfg.get("write_paths", True):
        d = os.path.join(cfg["out"], "paths")
        os.makedirs(d, exist_ok=True)
        path.to_csv(os.path.join(d, f"{cfg['experiment']}_{index:04d}.csv"))


def _convexity(cfg, path):
    if len(path) < 3:
        raise DomainError(f"path left the domain immediately ({path.exit_reason})")
    rep = log_convexity_along_path(path, conv_tol=cfg["tol"])
    return rep, rep.min_second_difference + cfg["tol"] * rep.scale


# -- experiments ----------------------------------------------------------
# Each trial function returns (inputs, margins, verdict_ok).  The primary
# margin is nonnegative exactly when the trial agrees with the claim.

def _trial_gl(cfg, i):
    rng = _rng(cfg, i)
    n, m = cfg["n"], cfg["m"]
    if cfg.get("random_dims"):
        n = int(rng.integers(1, cfg["max_dim"] + 1))
        m = int(rng.integers(n, cfg["max_dim"] + 1))
    metric = inst.gl_metric(n, m)
    A = lc.random_gl_point(rng, n, m)
    x0 = A.ravel()
    v0 = _unit_metric_speed(metric, x0, rng.standard_normal(n * m))
    T = float(rng.uniform(0.5, cfg["horizon"]))
    path = integrate_geodesic(metric, x0, v0, T)
    _save_path(cfg, i, path)
    rep, margin = _convexity(cfg, path)
    return (x0, v0, [T]), {
        "primary": margin,
        "min_second_difference": rep.min_second_difference,
        "speed_drift": path.speed_drift(),
        "horizon": path.times[-1],
    }, rep.passed


def _sphere_trial(cfg, i, projective):
    rng = _rng(cfg, i)
    n, m = cfg["n"], cfg["m"]
    base = inst.projective_metric(n, m) if projective else inst.gl_metric(n, m)
    cons, metric = inst.sphere_instance(1.0, base)
    A = lc.random_gl_point(rng, n, m)
    x0 = A.ravel() / np.linalg.norm(A)
    v0 = _unit_metric_speed(metric, x0, inst.random_tangent(rng, cons, x0))
    T = float(rng.uniform(0.5, cfg["horizon"]))
    path = integrate_constrained_geodesic(metric, cons, x0, v0, T)
    _save_path(cfg, i, path)
    rep, margin = _convexity(cfg, path)
    drift_x, drift_v = path.constraint_residuals()
    drift = max(drift_x, drift_v)
    return (x0, v0, [T]), {
        "primary": min(margin, cfg["drift_tol"] - drift),
        "min_second_difference": rep.min_second_difference,
        "constraint_drift": drift,
        "speed_drift": path.speed_drift(),
        "horizon": path.times[-1],
    }, rep.passed and drift <= cfg["drift_tol"]


def _trial_sphere(cfg, i):
    return _sphere_trial(cfg, i, projective=False)


def _trial_projective(cfg, i):
    return _sphere_trial(cfg, i, projective=True)


def _trial_solution_variety(cfg, i):
    rng = _rng(cfg, i)
    n = cfg["n"]
    cons, metric = inst.solution_variety_instance(n)
    x0 = inst.random_solution_variety_point(rng, n).as_vector()
    v0 = _unit_metric_speed(metric, x0, inst.random_tangent(rng, cons, x0))
    lemma = inst.lemma_value(n, x0, v0)
    T = float(rng.uniform(0.5, cfg["horizon"]))
    path = integrate_constrained_geodesic(metric, cons, x0, v0, T)
    _save_path(cfg, i, path)
    rep, margin = _convexity(cfg, path)
    lemma_ok = lemma <= -cfg["lemma_tol"]
    return (x0, v0, [T]), {
        "primary": min(margin, -lemma - cfg["lemma_tol"]),
        "lemma_value": lemma,
        "min_second_difference": rep.min_second_difference,
        "constraint_drift": max(path.constraint_residuals()),
    }, rep.passed and lemma_ok


def _trial_frobenius(cfg, i):
    A = np.diag([1.0, 1.0, 2.0])
    Ad = np.zeros((3, 3))
    Ad[0, 1], Ad[1, 0] = 1.0, -1.0
    metric = inst.frobenius_alpha(3)
    value = form_value(metric, A.ravel(), Ad.ravel(), coeff=2.0)
    selfconvex = form_value(metric, A.ravel(), Ad.ravel(), coeff=4.0)
    literal, _ = inst.frobenius_example_form(A, Ad)
    err = abs(value + 15.0 / 8.0)
    ok = value < 0 and err <= cfg["tol"]
    return (A, Ad), {
        "primary": min(-value, cfg["tol"] - err),
        "form_value": value,
        "literal_value": literal,
        "selfconvex_value": selfconvex,
        "abs_error": err,
        "min_eig_convex_form": convex_form(metric, A.ravel())[1],
    }, ok


def _trial_hyperbolic(cfg, i):
    metric = inst.hyperbolic_instance(2)
    if i == 0:
        T = 3.0
        path = integrate_geodesic(metric, [0.0, 1.0], [1.0, 0.0], T, n_out=301)
        _save_path(cfg, i, path)
        exact = np.column_stack([np.tanh(path.times), 1.0 / np.cosh(path.times)])
        err = float(np.max(np.abs(path.xs - exact)))
        return ([0.0, 1.0], [1.0, 0.0], [T]), {
            "primary": cfg["geodesic_tol"] - err, "max_error": err}, err <= cfg["geodesic_tol"]
    rng = _rng(cfg, i)
    x = np.array([rng.uniform(-2.0, 2.0), rng.uniform(0.5, 2.0)])
    e = selfconvex_form(metric, x)[1]
    return (x,), {"primary": cfg["tol"] - abs(e), "min_eigenvalue": e}, abs(e) <= cfg["tol"]


def _circle_branch(metric, delta, T, u, sign):
    # geodesic ray x(t) = sign * (1 - exp(-|t|)) u, started off the singular centre
    r0 = 1.0 - np.exp(-delta)
    x0 = sign * r0 * u
    v0 = sign * np.exp(-delta) * u
    return integrate_geodesic(metric, x0, v0, T - delta, n_out=201)


def _trial_circle(cfg, i):
    metric = npm.distance_metric(npm.circle())
    theta = float(cfg.get("angle", 0.0))
    u = np.array([np.cos(theta), np.sin(theta)])
    delta, T = cfg["delta"], cfg["horizon"]
    err = 0.0
    for k, sign in enumerate((1.0, -1.0)):
        path = _circle_branch(metric, delta, T, u, sign)
        _save_path(cfg, k, path)
        t = path.times + delta
        la = np.log(path.alphas())
        err = max(err, float(np.max(np.abs(la - 2.0 * t))))
        if not path.complete:
            raise DomainError(path.exit_reason)
    return (u, [delta, T]), {"primary": cfg["tol"] - err, "max_abs_error": err}, err <= cfg["tol"]


def _trial_two_points(cfg, i):
    N = npm.PointSet([[1.0, 0.0], [-1.0, 0.0]])
    metric = npm.distance_metric(N, guard=False)
    xa, xb = np.array([0.0, -0.1]), np.array([0.0, 0.1])
    path = shoot_geodesic(metric, xa, xb, restarts=1)
    _save_path(cfg, i, path)
    rep = log_convexity_along_path(path, conv_tol=1e-6)
    off_axis = float(np.max(np.abs(path.xs[:, 0])))
    # the claim is that this path is NOT log-convex
    ok = rep.verdict == "FAIL" and rep.min_second_difference < -cfg["fail_margin"]
    return (xa, xb), {
        "primary": -cfg["fail_margin"] - rep.min_second_difference,
        "min_second_difference": rep.min_second_difference,
        "convexity_verdict": rep.verdict,
        "max_off_axis": off_axis,
    }, ok


def _descriptor(cfg):
    d = cfg.get("descriptor") or {"type": "ellipse", "a": 2.0, "b": 1.0}
    return npm.descriptor_from_config(d)


def _sample_in_u(N, rng, box, max_tries=200):
    for _ in range(max_tries):
        x = rng.uniform(-1.0, 1.0, N.ambient_dim) * box
        v = rng.standard_normal(N.ambient_dim)
        try:
            res = N.nearest(x)
            if res.multiplicity_flag or res.rho <= 1e-6:
                continue
            npm.dK(N, x, v)
        except DomainError:
            continue
        return x, v, res
    raise DomainError("no sample found inside U \\ N")


def _trial_distance(cfg, i):
    rng = _rng(cfg, i)
    N = _descriptor(cfg)
    box = np.broadcast_to(np.asarray(cfg.get("box", 2.5), dtype=float), (N.ambient_dim,))
    x, v, res = _sample_in_u(N, rng, box)
    y, _, _ = _sample_in_u(N, rng, box)
    lip = abs(res.rho - N.nearest(y).rho) - np.linalg.norm(x - y)
    d1, d2, mono = npm.rho_identities(N, x, v)
    f = lambda z: N.nearest(z).rho ** 2
    fd1 = lc.fd_oracle(f, x, v)
    fd2 = lc.fd_oracle(f, x, v, order=2)
    fdk = lc.fd_oracle(lambda z: N.nearest(z).foot, x, v)
    dkv = npm.dK(N, x, v)
    scale = max(1.0, float(v @ v))
    id_err = max(abs(d1 - fd1), abs(d2 - fd2), float(np.linalg.norm(dkv - fdk))) / scale
    bundle = npm.distance_bundle(N)
    rform = rho_form_min(bundle, x)
    margins = {
        "lipschitz": -lip,
        "orthogonality_residual": res.newton_residual,
        "monotonicity": mono / scale,
        "identity_error": id_err,
        "rho_form_min": rform,
    }
    ok = (lip <= 1e-12 and res.newton_residual <= 1e-9 and mono / scale >= -1e-9
          and id_err <= cfg["fd_tol"] and rform >= -1e-8)
    primary = min(-lip, 1e-9 - res.newton_residual, mono / scale + 1e-9,
                  cfg["fd_tol"] - id_err, rform + 1e-8)
    if cfg.get("geodesics", True):
        metric = bundle.to_metric(name="distance")
        v0 = _unit_metric_speed(metric, x, v)
        path = integrate_geodesic(metric, x, v0, cfg["horizon"], n_out=101)
        _save_path(cfg, i, path)
        if len(path) >= 3:
            rep, margin = _convexity(cfg, path)
            margins["min_second_difference"] = rep.min_second_difference
            primary = min(primary, margin)
            ok = ok and rep.passed
    margins["primary"] = primary
    return (x, v), margins, ok


def _metric_from_config(cfg):
    kind = cfg.get("metric", "gl")
    if kind == "gl":
        return inst.gl_metric(cfg["n"], cfg["m"]), None
    if kind == "hyperbolic":
        return inst.hyperbolic_instance(int(cfg.get("dim", 2))), None
    if kind == "sphere":
        cons, metric = inst.sphere_instance(1.0, inst.gl_metric(cfg["n"], cfg["m"]))
        return metric, cons
    if kind == "distance":
        return npm.distance_metric(_descriptor(cfg)), None
    raise ConfigError(f"unknown metric {kind!r}")


def _trial_geodesic(cfg, i):
    metric, cons = _metric_from_config(cfg)
    T = float(cfg.get("T", 1.0))
    if "x_a" in cfg and "x_b" in cfg:
        path = shoot_geodesic(metric, cfg["x_a"], cfg["x_b"], constraints=cons, T=T,
                              seed=int(cfg["seed"]))
        inputs = (cfg["x_a"], cfg["x_b"], [T])
    else:
        rng = _rng(cfg, i)
        if "x0" in cfg:
            x0 = np.asarray(cfg["x0"], dtype=float)
        elif cfg.get("metric", "gl") in ("gl", "sphere"):
            x0 = lc.random_gl_point(rng, cfg["n"], cfg["m"]).ravel()
            if cons is not None:
                x0 = x0 / np.linalg.norm(x0)
        else:
            raise ConfigError("geodesic needs x0 (or x_a and x_b) for this metric")
        if "v0" in cfg:
            v0 = np.asarray(cfg["v0"], dtype=float)
        else:
            v0 = rng.standard_normal(x0.size)
            if cons is not None:
                v0 = cons.project_velocity(x0, v0)
            v0 = _unit_metric_speed(metric, x0, v0)
        if cons is None:
            path = integrate_geodesic(metric, x0, v0, T)
        else:
            path = integrate_constrained_geodesic(metric, cons, x0, v0, T)
        inputs = (x0, v0, [T])
    _save_path(cfg, i, path)
    rep, margin = _convexity(cfg, path)
    return inputs, {
        "primary": margin,
        "min_second_difference": rep.min_second_difference,
        "length": condition_length(metric, path),
        "speed_drift": path.speed_drift(),
        "complete": path.complete,
    }, rep.passed


def _trial_length(cfg, i):
    if not cfg.get("path"):
        raise ConfigError("length needs a path CSV (--path or config 'path')")
    metric, _ = _metric_from_config(cfg)
    t, xs, vs = read_path_csv(cfg["path"])
    L = condition_length(metric, (t, xs, vs))
    return (t, xs, vs), {"primary": 0.0, "length": L}, bool(np.isfinite(L))


EXPERIMENTS = {
    "verify-gl": (_trial_gl, "log sigma_n^-2 is convex along every condition geodesic in GL^>",
                  {"n": 3, "m": 4, "trials": 200, "tol": 1e-6, "horizon": 2.0,
                   "random_dims": False, "max_dim": 6}),
    "verify-sphere": (_trial_sphere,
                      "the condition metric restricted to the unit sphere is self-convex",
                      {"n": 3, "m": 4, "trials": 100, "tol": 1e-6, "horizon": 2.0,
                       "drift_tol": 1e-8}),
    "verify-projective": (_trial_projective,
                          "||A||^2 sigma_n(A)^-2 is self-convex on real projective space "
                          "(checked on horizontal lifts)",
                          {"n": 3, "m": 4, "trials": 100, "tol": 1e-6, "horizon": 2.0,
                           "drift_tol": 1e-8}),
    "verify-solution-variety": (_trial_solution_variety,
                                "the condition metric on the linear solution variety is "
                                "self-convex; D sigma_n(M) M'' < 0 along its flat geodesics",
                                {"n": 3, "trials": 200, "tol": 1e-6, "horizon": 1.0,
                                 "lemma_tol": 1e-10}),
    "counterexample-frobenius": (_trial_frobenius,
                                 "||A^-1||_F^2 is not log-convex: the convexity form is "
                                 "negative at diag(1,1,2) in direction E12 - E21",
                                 {"trials": 1, "tol": 1e-9}),
    "example-hyperbolic": (_trial_hyperbolic,
                           "x_n^-2 on the half space is self-convex with equality in "
                           "vertical directions",
                           {"trials": 101, "tol": 1e-9, "geodesic_tol": 1e-8}),
    "example-circle": (_trial_circle,
                       "inside the unit circle, log alpha = 2|t| along the geodesic "
                       "through the centre",
                       {"trials": 1, "tol": 1e-6, "delta": 0.05, "horizon": 3.0}),
    "example-two-points": (_trial_two_points,
                           "for two points the inverse squared distance is not log-convex "
                           "on the midline segment",
                           {"trials": 1, "fail_margin": 1e-3}),
    "verify-distance": (_trial_distance,
                        "rho^-2 is self-convex on U minus N for the distance rho to a "
                        "submanifold N",
                        {"trials": 100, "tol": 1e-6, "fd_tol": 1e-5, "horizon": 0.5,
                         "box": 2.5}),
    "geodesic": (_trial_geodesic, "ad-hoc geodesic: convexity of log alpha along it",
                 {"trials": 1, "n": 3, "m": 4, "tol": 1e-6, "metric": "gl", "T": 1.0}),
    "length": (_trial_length, "condition length of a supplied path",
               {"trials": 1, "n": 3, "m": 4, "metric": "gl"}),
}

EXPECTED = {"counterexample-frobenius": "NEGATIVE-AS-EXPECTED",
            "example-two-points": "FAIL-AS-EXPECTED"}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _run_trial(fn, cfg, i, expected):
    try:
        inputs, margins, ok = fn(cfg, i)
    except (ConditionGeometryError, np.linalg.LinAlgError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        return {"index": i, "inputs_digest": None, "margins": {}, "verdict": "ERROR",
                "error": f"{type(exc).__name__}: {exc}"}
    verdict = (expected if ok else "UNEXPECTED") if expected else ("PASS" if ok else "FAIL")
    return {"index": i, "inputs_digest": _digest(*inputs), "margins": margins,
            "verdict": verdict}


def validate_config(cfg):
    for k, v in cfg.items():
        if (k == "tol" or k.endswith("_tol")) and not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"{k} must be a positive number, got {v!r}")
    if int(cfg.get("trials", 1)) < 1:
        raise ConfigError("trials must be >= 1")
    for k in ("n", "m"):
        if k in cfg and int(cfg[k]) < 1:
            raise ConfigError(f"{k} must be >= 1")
    if "n" in cfg and "m" in cfg and cfg["n"] > cfg["m"]:
        raise ConfigError("need n <= m")


def run(experiment, config=None) -> dict:
    """Run an experiment and return its report as a dict (nothing is written
    unless ``config['out']`` is set)."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    fn, claim, defaults = EXPERIMENTS[experiment]
    cfg = dict(defaults)
    cfg.update({"seed": 0, "workers": 1})
    cfg.update({k: v for k, v in (config or {}).items() if v is not None})
    cfg["experiment"] = experiment
    validate_config(cfg)
    trials = int(cfg["trials"])
    expected = EXPECTED.get(experiment)
    workers = max(1, int(cfg["workers"]))
    if workers == 1:
        results = [_run_trial(fn, cfg, i, expected) for i in range(trials)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda i: _run_trial(fn, cfg, i, expected), range(trials)))
    results.sort(key=lambda r: r["index"])
    prim = [r["margins"]["primary"] for r in results if "primary" in r["margins"]]
    ok_verdicts = {"PASS", expected}
    passed = all(r["verdict"] in ok_verdicts for r in results)
    public_cfg = {k: v for k, v in cfg.items()
                  if k not in ("workers", "out", "experiment", "write_paths")}
    report = {
        "version": SCHEMA_VERSION,
        "experiment": experiment,
        "claim": claim,
        "config": public_cfg,
        "trials": results,
        "summary": {"min_margin": min(prim) if prim else None, "pass": passed,
                    "n_trials": trials,
                    "n_errors": sum(r["verdict"] == "ERROR" for r in results)},
    }
    report = _jsonable(report)
    if cfg.get("out"):
        os.makedirs(cfg["out"], exist_ok=True)
        with open(os.path.join(cfg["out"], "report.json"), "w") as fh:
            fh.write(dumps_report(report))
    return report


def dumps_report(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="condgeom", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="experiment", required=True)
    for name, (_, claim, _) in EXPERIMENTS.items():
        s = sub.add_parser(name, help=claim)
        s.add_argument("--n", type=int)
        s.add_argument("--m", type=int)
        s.add_argument("--trials", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--tol", type=float)
        s.add_argument("--out", default="condgeom-out", help="output directory")
        s.add_argument("--config", help="JSON file; its keys override the flags")
        s.add_argument("--workers", type=int, help="threads for the trial batch")
        s.add_argument("--no-paths", action="store_true", help="do not write path CSVs")
        if name in ("geodesic", "length"):
            s.add_argument("--metric", choices=("gl", "sphere", "hyperbolic", "distance"))
        if name == "length":
            s.add_argument("--path", help="path CSV to measure")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    cfg = {k: getattr(args, k, None) for k in ("n", "m", "trials", "seed", "tol", "out",
                                                "workers", "path", "metric")}
    if args.no_paths:
        cfg["write_paths"] = False
    try:
        if args.config:
            with open(args.config) as fh:
                cfg.update(json.load(fh))
        report = run(args.experiment, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    s = report["summary"]
    print(f"{args.experiment}: {'PASS' if s['pass'] else 'FAIL'} "
          f"(trials={s['n_trials']}, errors={s['n_errors']}, min_margin={s['min_margin']})")
    return 0 if s["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
