"""Experiment grids: specification, per-cell simulation and aggregation.

An experiment is a JSON document naming a scenario, the grid to sweep and
the scenario parameters.  Every (cell, replication) pair gets its own seed
from :func:`robext.simgen.derive_seed`, so any cell can be rerun alone.
"""

from __future__ import annotations

import copy
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .estimators import extrinsic_mean, extrinsic_median
from .metrics import ResultTable, chord_error, md_obs, rmse_true
from .relr import KernelSpec, cv_bandwidth, fit_curve
from .shape import PlanarShape, full_procrustes_distance, to_preshape
from .simgen import (
    ContaminationSpec,
    ShapeGenSpec,
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
from .sphere import Sphere, angle_to_point
from .weiszfeld import WeiszfeldConfig

SCENARIOS = ("circle-vm", "circle-stable", "shape-location", "shape-regression")
GRID_AXES = ("n", "r", "alpha", "tau")

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_PARAMS = {
    "circle-vm": {
        "mu": {"type": "number"},
        "kappa": {"type": "number", "minimum": 0},
        "mu_out": {"type": "number"},
        "sigma_out": {"type": "number", "minimum": 0},
    },
    "circle-stable": {
        "mu": {"type": "number"},
        "beta": {"type": "number", "minimum": -1, "maximum": 1},
    },
    "shape-location": {
        "k": {"type": "integer", "minimum": 16},
        "noise": {"type": "number", "minimum": 0},
        "landmarks": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "corrupt_mu": {"type": "number"},
        "corrupt_sigma": {"type": "number", "minimum": 0},
    },
    "shape-regression": {
        "k": {"type": "integer", "minimum": 3},
        "p": {"type": "integer", "minimum": 1},
        "a": {"type": "number"},
        "b": {"type": "number"},
        "sigma_phi": {"type": "number", "minimum": 0},
        "sigma_gamma": {"type": "number", "minimum": 0},
        "outlier_mean": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "outlier_var": {"type": "number", "minimum": 0},
        "elr_cv_loss": {"enum": ["squared", "unsquared"]},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "grid"],
    "properties": {
        "scenario": {"enum": list(SCENARIOS)},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "reps": {"type": "integer", "minimum": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n"],
            "properties": {
                "n": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "r": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 0.5},
                      "minItems": 1},
                "alpha": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                                     "maximum": 2}, "minItems": 1},
                "tau": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
        },
        "estimators": {"type": "array", "items": {"enum": ["mean", "median", "elr", "relr"]},
                       "minItems": 1, "uniqueItems": True},
        "params": {"type": "object"},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "variant": {"enum": ["plain", "smoothed-accelerated"]},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["gaussian", "epanechnikov"]},
                "bandwidths": {**_NUM_LIST, "items": {"type": "number", "exclusiveMinimum": 0}},
                "folds": {"type": "integer", "minimum": 2},
            },
        },
        "output": {"type": "string"},
    },
    "allOf": [
        {
            "if": {"properties": {"scenario": {"const": s}}},
            "then": {"properties": {"params": {"type": "object", "additionalProperties": False,
                                               "properties": props}}},
        }
        for s, props in _PARAMS.items()
    ],
}

DEFAULT_PARAMS = {
    "circle-vm": {"mu": 0.0, "kappa": 600.0, "mu_out": float(np.pi / 2), "sigma_out": 1.5},
    "circle-stable": {"mu": 0.0, "beta": 0.0},
    "shape-location": {"k": 50, "noise": 2.0, "landmarks": [10, 11, 12, 13, 14, 15],
                       "corrupt_mu": 1000.0, "corrupt_sigma": 5.0},
    "shape-regression": {"k": 10, "p": 3, "a": 0.0, "b": 3.0, "sigma_phi": 0.035,
                         "sigma_gamma": 0.005, "outlier_mean": [[2.0, 0.0]], "outlier_var": 0.01,
                         "elr_cv_loss": "squared"},
}
DEFAULT_ESTIMATORS = {"circle-vm": ["mean", "median"], "circle-stable": ["mean", "median"],
                      "shape-location": ["mean", "median"], "shape-regression": ["elr", "relr"]}
DEFAULT_KERNEL = {"family": "gaussian", "bandwidths": [0.15, 0.2, 0.3, 0.45, 0.7, 1.0, 1.5, 2.2, 3.3],
                  "folds": 5}


class SpecError(ValueError):
    """Experiment specification failed validation."""


def validate_spec(spec):
    """Schema-check ``spec`` and fill defaults; returns a new dict."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(spec), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = [str(p) for p in err.absolute_path]
        if err.validator == "additionalProperties" and isinstance(err.instance, dict):
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            path += extra[:1]
        raise SpecError(f"{'/'.join(path) or '<root>'}: {err.message}")
    out = copy.deepcopy(spec)
    scen = out["scenario"]
    out["params"] = {**DEFAULT_PARAMS[scen], **out.get("params", {})}
    out.setdefault("estimators", list(DEFAULT_ESTIMATORS[scen]))
    out.setdefault("seed", 0)
    out.setdefault("reps", 20)
    out["solver"] = {"epsilon": 1e-8, "max_iters": 10_000, "variant": "plain", **out.get("solver", {})}
    out["kernel"] = {**DEFAULT_KERNEL, **out.get("kernel", {})}
    bad = set(out["estimators"]) - set(DEFAULT_ESTIMATORS[scen])
    if bad:
        raise SpecError(f"estimators: {sorted(bad)} not available for {scen}")
    need = {"circle-stable": ("alpha", "tau")}.get(scen, ("r",))
    for axis in need:
        if axis not in out["grid"]:
            raise SpecError(f"grid: {scen} needs a {axis!r} axis")
    return out


def cells(spec):
    axes = [a for a in GRID_AXES if a in spec["grid"]]
    for combo in itertools.product(*(spec["grid"][a] for a in axes)):
        yield dict(zip(axes, combo))


def cell_key(scenario, cell):
    return scenario + "|" + "|".join(f"{a}={cell[a]!r}" for a in GRID_AXES if a in cell)


def _solver(spec):
    s = spec["solver"]
    return WeiszfeldConfig(epsilon=s["epsilon"], max_iters=s["max_iters"], variant=s["variant"])


# --- one replication of one cell ---------------------------------------------------


def _circle_errors(theta, mu, estimators, cfg):
    X = angle_to_point(theta)
    truth = angle_to_point(mu)
    out = {}
    S1 = Sphere(1)
    for est in estimators:
        fit = extrinsic_mean(X, S1) if est == "mean" else extrinsic_median(X, S1, cfg)
        out[(est, "error")] = chord_error(fit, truth)
    return out


def _rep_circle_vm(spec, cell, rng):
    p = spec["params"]
    theta = sample_von_mises(p["mu"], p["kappa"], cell["n"], rng)
    cont = ContaminationSpec(cell["r"], "replace-angles", {"mu_out": p["mu_out"], "sigma": p["sigma_out"]})
    theta = contaminate_angles(theta, cont, rng)
    return _circle_errors(theta, p["mu"], spec["estimators"], _solver(spec))


def _rep_circle_stable(spec, cell, rng):
    p = spec["params"]
    ws = WrappedStableSpec(alpha=cell["alpha"], tau=cell["tau"], beta=p["beta"], mu=p["mu"])
    theta = sample_wrapped_stable(ws, cell["n"], rng)
    return _circle_errors(theta, p["mu"], spec["estimators"], _solver(spec))


def _rep_shape_location(spec, cell, rng):
    p = spec["params"]
    m = PlanarShape(p["k"])
    configs = generate_shape_sample(cell["n"], k=p["k"], noise=p["noise"], seed=rng)
    cont = ContaminationSpec(cell["r"], "corrupt-landmarks",
                             {"indices": p["landmarks"], "mu": p["corrupt_mu"], "sigma": p["corrupt_sigma"]})
    dirty, _ = contaminate_configurations(configs, cont, rng)
    clean_u, dirty_u = to_preshape(configs), to_preshape(dirty)
    cfg = _solver(spec)
    out = {}
    for est in spec["estimators"]:
        fn = extrinsic_mean if est == "mean" else (lambda d, mm: extrinsic_median(d, mm, cfg))
        out[(est, "rho_fp")] = full_procrustes_distance(fn(dirty_u, m), fn(clean_u, m))
    return out


def shape_regression_spec(params):
    return ShapeGenSpec(k=params["k"], p=params["p"], a=params["a"], b=params["b"],
                        sigma_phi=params["sigma_phi"], sigma_gamma=params["sigma_gamma"])


def outlier_contamination(params, rate):
    k = params["k"]
    mean = np.zeros(k, dtype=complex)
    for j, (re, im) in enumerate(params["outlier_mean"][:k]):
        mean[j] = complex(re, im)
    return ContaminationSpec(rate, "add-complex-normal", {"mean": mean, "cov": params["outlier_var"]})


def _rep_shape_regression(spec, cell, rng):
    p = spec["params"]
    data, truth = generate_shape_regression(shape_regression_spec(p), cell["n"], rng)
    data = contaminate_shapes(data, outlier_contamination(p, cell["r"]), rng)
    cfg = _solver(spec)
    ker = spec["kernel"]
    cv_seed = int(rng.integers(2**63))
    out = {}
    for est in spec["estimators"]:
        squared = est == "elr" and p["elr_cv_loss"] == "squared"
        cv = cv_bandwidth(data, ker["family"], ker["bandwidths"], folds=ker["folds"], seed=cv_seed,
                          method=est, squared=squared, cfg=cfg)
        fit = fit_curve(data, data.covariates, KernelSpec.isotropic(ker["family"], cv.bandwidth), est, cfg)
        if not all(fit.ok):
            bad = next(e for e in fit.errors if e is not None)
            raise RuntimeError(f"{est} fit failed at an observed covariate: {bad}")
        fitted = np.array(fit.points)
        out[(est, "md_obs")] = md_obs(fitted, data.responses, data.manifold)
        out[(est, "rmse_true")] = rmse_true(fitted, truth, data.manifold)
        out[(est, "bandwidth")] = cv.bandwidth
    return out


_RUNNERS = {
    "circle-vm": _rep_circle_vm,
    "circle-stable": _rep_circle_stable,
    "shape-location": _rep_shape_location,
    "shape-regression": _rep_shape_regression,
}


def run_replication(spec, cell, rep):
    """Run one replication; returns ``(metrics dict, error message or None)``."""
    seed = derive_seed(spec["seed"], cell_key(spec["scenario"], cell), rep)
    try:
        return _RUNNERS[spec["scenario"]](spec, cell, make_rng(seed)), None
    except Exception as exc:  # recorded per cell, the run carries on
        return {}, f"{type(exc).__name__}: {exc}"


def _task(args):
    return run_replication(*args)


@dataclass
class ExperimentResult:
    table: ResultTable
    failures: list = field(default_factory=list)  # (cell key, rep, message)
    spec: dict = field(default_factory=dict)


def run_experiment(spec, jobs=1):
    """Run every (cell, replication) of a validated or raw spec."""
    spec = validate_spec(spec)
    grid = list(cells(spec))
    tasks = [(spec, cell, rep) for cell in grid for rep in range(spec["reps"])]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        outcomes = [_task(t) for t in tasks]

    result = ExperimentResult(ResultTable(), [], spec)
    reps = spec["reps"]
    for ci, cell in enumerate(grid):
        key = cell_key(spec["scenario"], cell)
        collected: dict = {}
        for rep in range(reps):
            values, err = outcomes[ci * reps + rep]
            if err is not None:
                result.failures.append((key, rep, err))
            for name, v in values.items():
                collected.setdefault(name, []).append(v)
        for (est, metric), vals in sorted(collected.items()):
            result.table.add(spec["scenario"], est, metric, vals, n=cell.get("n"), r=cell.get("r"),
                             alpha=cell.get("alpha"), tau=cell.get("tau"))
    return result


# --- built-in grids ----------------------------------------------------------------


def builtin_specs(name, seed=0, reps=20):
    """Experiment specs behind ``reproduce``: table1 (two panels), table2, fig4-curves."""
    if name == "table1":
        return [
            {"scenario": "circle-vm", "name": "table1-scenario1", "seed": seed, "reps": reps,
             "grid": {"n": [10, 50, 100, 200], "r": [0.0, 0.1, 0.2, 0.4]}},
            {"scenario": "circle-stable", "name": "table1-scenario2", "seed": seed, "reps": reps,
             "grid": {"n": [10, 50, 100, 200], "alpha": [0.1, 0.5, 1.0, 2.0], "tau": [0.2, 2.0]}},
        ]
    if name == "table2":
        return [{"scenario": "shape-regression", "name": "table2", "seed": seed, "reps": reps,
                 "grid": {"n": [50, 100, 200], "r": [0.0, 0.05, 0.1, 0.2, 0.3]}}]
    if name == "fig4-curves":
        return [{"scenario": "shape-location", "name": "fig4-curves", "seed": seed, "reps": reps,
                 "grid": {"n": [100], "r": [0.0, 0.1, 0.2, 0.3, 0.4]}}]
    raise ValueError(f"unknown table {name!r}")


def load_spec(path):
    with open(path) as fh:
        return json.load(fh)
