"""Command-line entry point: simulate, estimate, regress, reproduce.

Exit codes: 0 success (including non-converged solves, which are flagged
in the output), 2 bad input or spec, 3 focal-point degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import extrinsic_mean, extrinsic_median
from .experiments import (
    SpecError,
    builtin_specs,
    cell_key,
    cells,
    outlier_contamination,
    run_experiment,
    shape_regression_spec,
    validate_spec,
)
from .geometry import FocalPointError
from .relr import KernelSpec, RegressionDataset, cv_bandwidth, fit_curve
from .shape import PlanarShape, read_landmarks, to_preshape, write_landmarks_csv
from .simgen import (
    GENERATOR_VERSION,
    RNG_NAME,
    ContaminationSpec,
    WrappedStableSpec,
    contaminate_angles,
    contaminate_configurations,
    contaminate_shapes,
    derive_seed,
    generate_shape_regression,
    generate_shape_sample,
    make_rng,
    sample_von_mises,
    sample_wrapped_stable,
)
from .spd import SPD, read_spd_json
from .sphere import Sphere, angle_to_point, point_to_angle
from .weiszfeld import WeiszfeldConfig

EXIT_INPUT = 2
EXIT_FOCAL = 3


class InputError(Exception):
    pass


def log(msg):
    print(msg, file=sys.stderr)


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


# --- spec loading ---------------------------------------------------------------------


def _line_of(text, path):
    """Best-effort line number of the JSON member addressed by ``path``."""
    pos = 0
    for part in path:
        if isinstance(part, str):
            m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
            if m:
                pos = m.start()
    return text.count("\n", 0, pos) + 1


def load_spec_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise InputError(f"{path}:1: experiment spec must be a JSON object")
    try:
        return validate_spec(raw), text
    except SpecError as exc:
        where = str(exc).split(":", 1)[0]
        parts = [p for p in where.split("/") if p and p != "<root>"]
        raise InputError(f"{path}:{_line_of(text, parts)}: {exc}") from None


def _spec_hash(spec):
    return hashlib.sha256(json.dumps(spec, sort_keys=True).encode()).hexdigest()


def _slug(key):
    return re.sub(r"[^A-Za-z0-9.=-]+", "_", key).strip("_")


def _solver_cfg(args):
    variant = {"plain": "plain", "fast": "smoothed-accelerated"}[args.variant]
    try:
        return WeiszfeldConfig(epsilon=args.epsilon, max_iters=args.max_iters, variant=variant)
    except ValueError as exc:
        raise InputError(str(exc)) from None


# --- simulate ---------------------------------------------------------------------------


def _write_angles(path, theta):
    lines = ["theta"] + [repr(float(t)) for t in theta]
    atomic_write(path, "\n".join(lines) + "\n")


def _write_covariates(path, X, ids):
    rows = ["id," + ",".join(f"x{j + 1}" for j in range(X.shape[1]))]
    rows += [f"{i}," + ",".join(repr(float(v)) for v in x) for i, x in zip(ids, X)]
    atomic_write(path, "\n".join(rows) + "\n")


def _landmarks_text(configs, ids):
    buf = io.StringIO()
    write_landmarks_csv(buf, configs, ids)
    return buf.getvalue()


def simulate_cell(spec, cell, rep, outdir):
    scen, p = spec["scenario"], spec["params"]
    stem = f"{_slug(cell_key(scen, cell))}_rep{rep}"
    rng = make_rng(derive_seed(spec["seed"], cell_key(scen, cell), rep))
    n = cell["n"]
    written = []
    if scen in ("circle-vm", "circle-stable"):
        if scen == "circle-vm":
            theta = sample_von_mises(p["mu"], p["kappa"], n, rng)
            cont = ContaminationSpec(cell["r"], "replace-angles",
                                     {"mu_out": p["mu_out"], "sigma": p["sigma_out"]})
            theta = contaminate_angles(theta, cont, rng)
        else:
            theta = sample_wrapped_stable(
                WrappedStableSpec(cell["alpha"], cell["tau"], p["beta"], p["mu"]), n, rng)
        _write_angles(outdir / f"{stem}.csv", theta)
        written.append(f"{stem}.csv")
    elif scen == "shape-location":
        configs = generate_shape_sample(n, k=p["k"], noise=p["noise"], seed=rng)
        cont = ContaminationSpec(cell["r"], "corrupt-landmarks",
                                 {"indices": p["landmarks"], "mu": p["corrupt_mu"],
                                  "sigma": p["corrupt_sigma"]})
        configs, _ = contaminate_configurations(configs, cont, rng)
        atomic_write(outdir / f"{stem}.csv", _landmarks_text(configs, range(1, n + 1)))
        written.append(f"{stem}.csv")
    else:
        data, truth = generate_shape_regression(shape_regression_spec(p), n, rng)
        data = contaminate_shapes(data, outlier_contamination(p, cell["r"]), rng)
        ids = list(range(1, n + 1))
        atomic_write(outdir / f"{stem}_landmarks.csv", _landmarks_text(data.configurations, ids))
        _write_covariates(outdir / f"{stem}_covariates.csv", data.covariates, ids)
        atomic_write(outdir / f"{stem}_truth.csv", _landmarks_text(truth, ids))
        written += [f"{stem}_landmarks.csv", f"{stem}_covariates.csv", f"{stem}_truth.csv"]
    return written


def _simulate_task(task):
    return simulate_cell(*task)


def cmd_simulate(args):
    spec, _ = load_spec_file(args.spec)
    if args.seed is not None:
        spec["seed"] = args.seed
    outdir = Path(args.out or spec.get("output") or ".")
    tasks = [(spec, cell, rep, outdir) for cell in cells(spec) for rep in range(spec["reps"])]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            written = list(pool.map(_simulate_task, tasks))
    else:
        written = [_simulate_task(t) for t in tasks]
    files = [f for chunk in written for f in chunk]
    manifest = {
        "command": "simulate",
        "seed": spec["seed"],
        "spec_sha256": _spec_hash(spec),
        "spec": spec,
        "generator_version": GENERATOR_VERSION,
        "rng": RNG_NAME,
        "package_version": __version__,
        "files": files,
    }
    atomic_write(outdir / "manifest.json", dump_json(manifest))
    log(f"simulate: wrote {len(files)} data files to {outdir}")
    return 0


# --- estimate ---------------------------------------------------------------------------


def _read_numeric_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    if not rows:
        raise InputError(f"{path}: empty file")
    header, body = [h.strip() for h in rows[0]], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            body.append([float(c) for c in row])
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value") from None
        if len(body[-1]) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} columns")
    if not body:
        raise InputError(f"{path}: no data rows")
    return header, np.array(body)


def load_manifold_data(path, manifold):
    """Native points and the manifold object for ``estimate`` / ``regress``."""
    try:
        if manifold == "circle":
            header, arr = _read_numeric_csv(path)
            if header == ["theta"]:
                return angle_to_point(arr[:, 0]), Sphere(1), None
            if len(header) == 2:
                return Sphere(1).validate(arr), Sphere(1), None
            raise InputError(f"{path}:1: circle data needs a 'theta' column or two coordinates")
        if manifold == "sphere":
            _, arr = _read_numeric_csv(path)
            return Sphere(arr.shape[1] - 1).validate(arr), Sphere(arr.shape[1] - 1), None
        if manifold == "shape":
            ids, configs = read_landmarks(path)
            return to_preshape(configs), PlanarShape(configs.shape[1]), ids
        if manifold == "spd":
            X = read_spd_json(path)
            return X, SPD(X.shape[1]), None
    except FocalPointError:
        raise
    except (ValueError, OSError) as exc:
        raise InputError(str(exc)) from None
    raise InputError(f"unknown manifold {manifold!r}")


def native_to_json(point, m):
    if isinstance(m, Sphere):
        out = {"point": np.asarray(point).tolist()}
        if m.d == 1:
            out["theta"] = float(point_to_angle(point))
        return out
    if isinstance(m, PlanarShape):
        u = np.asarray(point)
        return {"preshape": np.stack([u.real, u.imag], axis=1).tolist()}
    return {"matrix": np.asarray(point).tolist()}


def _report_json(rep):
    return {"iterations": int(rep.iterations), "objective": rep.objective,
            "termination": rep.termination, "converged": bool(rep.converged),
            "variant": rep.variant}


def cmd_estimate(args):
    pts, m, _ = load_manifold_data(args.data, args.manifold)
    result = {"manifold": m.describe(), "estimator": args.estimator, "n": int(len(pts))}
    if args.estimator == "mean":
        result["estimate"] = native_to_json(extrinsic_mean(pts, m), m)
        result["report"] = None
    else:
        est = extrinsic_median(pts, m, _solver_cfg(args), full_output=True)
        result["estimate"] = native_to_json(est.point, m)
        result["report"] = _report_json(est.report)
    text = dump_json(result)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    rep = result["report"]
    log(f"estimate: {args.estimator} of {len(pts)} points on {m.kind}"
        + (f", {rep['iterations']} iterations, {rep['termination']}" if rep else ""))
    if rep and not rep["converged"]:
        log("warning: solver hit max-iters before converging")
    return 0


# --- regress ----------------------------------------------------------------------------


def _read_covariates(path, ids=None):
    header, arr = _read_numeric_csv(path)
    if header and header[0] == "id":
        cov_ids = [str(int(v)) if float(v).is_integer() else str(v) for v in arr[:, 0]]
        X = arr[:, 1:]
        if ids is not None:
            lookup = dict(zip(cov_ids, range(len(cov_ids))))
            missing = [i for i in ids if i not in lookup]
            if missing:
                raise InputError(f"{path}: no covariates for id {missing[0]}")
            X = X[[lookup[i] for i in ids]]
        return X
    return arr


def _parse_grid(text):
    try:
        grid = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InputError(f"--cv: could not parse bandwidth list {text!r}") from None
    if not grid or any(h <= 0 for h in grid):
        raise InputError("--cv: bandwidths must be positive")
    return grid


def cmd_regress(args):
    pts, m, ids = load_manifold_data(args.data, args.manifold)
    X = _read_covariates(args.covariates, ids)
    if len(X) != len(pts):
        raise InputError("covariates and responses differ in length")
    E = _read_covariates(args.eval) if args.eval else X
    if E.shape[1] != X.shape[1]:
        raise InputError("evaluation points have the wrong number of covariates")
    try:
        data = RegressionDataset(X, pts, m)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg = _solver_cfg(args)
    out = {"method": args.method, "kernel": args.kernel, "variant": args.variant}
    if args.cv:
        cv = cv_bandwidth(data, args.kernel, _parse_grid(args.cv), folds=args.folds,
                          seed=args.seed or 0, method=args.method,
                          squared=args.method == "elr" and args.squared_cv, cfg=cfg)
        h = cv.bandwidth
        out["cv"] = cv.table()
    elif args.bandwidth:
        h = args.bandwidth
    else:
        raise InputError("regress needs --bandwidth or --cv")
    out["bandwidth"] = h
    fit = fit_curve(data, E, KernelSpec.isotropic(args.kernel, h), args.method, cfg)
    fits = []
    for x, point, rep, err in zip(E, fit.points, fit.reports, fit.errors):
        rec = {"x": x.tolist(), "error": err}
        if point is not None:
            rec.update(native_to_json(point, m))
        if rep is not None:
            rec["report"] = _report_json(rep)
        fits.append(rec)
    out["fits"] = fits
    text = dump_json(out)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    failed = sum(e is not None for e in fit.errors)
    log(f"regress: {len(fits)} evaluation points, h={h:g}, {failed} failed")
    return 0


# --- reproduce --------------------------------------------------------------------------


def cmd_reproduce(args):
    outdir = Path(args.out or ".")
    seed = 0 if args.seed is None else args.seed
    for spec in builtin_specs(args.table, seed=seed, reps=args.reps):
        result = run_experiment(spec, jobs=args.jobs)
        name = spec["name"]
        atomic_write(outdir / f"{name}.csv", result.table.to_csv())
        atomic_write(outdir / f"{name}.json", result.table.to_json())
        manifest = {"command": "reproduce", "table": args.table, "seed": seed, "reps": args.reps,
                    "spec_sha256": _spec_hash(result.spec), "spec": result.spec,
                    "generator_version": GENERATOR_VERSION, "rng": RNG_NAME,
                    "package_version": __version__,
                    "failures": [{"cell": c, "rep": r, "error": e} for c, r, e in result.failures]}
        atomic_write(outdir / f"{name}.manifest.json", dump_json(manifest))
        log(f"reproduce: {name}: {len(result.table)} rows, {len(result.failures)} failed replications")
    return 0


# --- parser -----------------------------------------------------------------------------


def _solver_flags(p):
    p.add_argument("--variant", choices=["plain", "fast"], default="plain")
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=10_000)


def build_parser():
    parser = argparse.ArgumentParser(prog="robext", description="Robust extrinsic estimation on manifolds")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate datasets from an experiment spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="extrinsic mean or median of a data file")
    p.add_argument("data")
    p.add_argument("--manifold", choices=["circle", "sphere", "shape", "spd"], required=True)
    p.add_argument("--estimator", choices=["mean", "median"], default="median")
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("regress", help="kernel regression of manifold responses")
    p.add_argument("data")
    p.add_argument("--covariates", required=True)
    p.add_argument("--eval", help="CSV of evaluation points (defaults to the observed covariates)")
    p.add_argument("--manifold", choices=["circle", "sphere", "shape", "spd"], default="shape")
    p.add_argument("--method", choices=["relr", "elr"], default="relr")
    p.add_argument("--kernel", choices=["gaussian", "epanechnikov"], default="gaussian")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--bandwidth", type=float)
    g.add_argument("--cv", help="comma-separated bandwidth grid for cross-validation")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--squared-cv", action="store_true", help="squared loss in CV (elr only)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("reproduce", help="rerun a built-in experiment grid")
    p.add_argument("table", choices=["table1", "table2", "fig4-curves"])
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FocalPointError as exc:
        log(f"error: focal point: {exc}")
        return EXIT_FOCAL
    except InputError as exc:
        log(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
