"""Extrinsic mean and median on any embedded manifold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, ambient_mean
from .metrics import ResultTable
from .weiszfeld import FermatWeberProblem, WeiszfeldConfig, WeiszfeldReport, fermat_weber_solve


@dataclass(frozen=True)
class MedianEstimate:
    point: np.ndarray
    report: WeiszfeldReport

    @property
    def converged(self):
        return self.report.converged


def _embedded(data, m: Manifold):
    pts = m.validate(data)
    if len(pts) == 0:
        raise ValueError("need at least one data point")
    return m.embed(pts)


def extrinsic_mean(data, m: Manifold, weights=None):
    """Project the ambient average of the embedded data back onto ``m``."""
    return m.project_unembed(ambient_mean(_embedded(data, m), weights))


def extrinsic_median(data, m: Manifold, cfg: WeiszfeldConfig | None = None, full_output=False):
    """Project the ambient geometric median of the embedded data back onto ``m``.

    With ``full_output`` a :class:`MedianEstimate` carrying the solver report
    is returned; otherwise just the point (a non-converged solve is not an
    error, check the report if it matters).
    """
    J = _embedded(data, m)
    report = fermat_weber_solve(FermatWeberProblem(J), cfg or WeiszfeldConfig())
    point = m.project_unembed(report.solution)
    return MedianEstimate(point, report) if full_output else point


ESTIMATORS = {"mean": extrinsic_mean, "median": extrinsic_median}


def estimate(name, data, m: Manifold, cfg=None):
    if name == "mean":
        return extrinsic_mean(data, m)
    if name == "median":
        return extrinsic_median(data, m, cfg)
    raise ValueError(f"unknown estimator {name!r}")


def breakdown_curve(data, m: Manifold, contaminator, levels, estimator="median", reps=10,
                    seed=0, cfg=None, scenario="breakdown"):
    """Distance from the clean-data estimate after contaminating a fraction of the data.

    ``contaminator(data, rate, rng)`` returns a contaminated copy of the
    native data; :func:`robext.simgen.contaminate_configurations` style
    callables can be adapted with :func:`shape_contaminator`.
    """
    from .simgen import derive_seed, make_rng

    levels = [float(r) for r in levels]
    if any(not 0 <= r <= 0.5 for r in levels):
        raise ValueError("contamination levels must lie in [0, 0.5]")
    clean = estimate(estimator, data, m, cfg)
    table = ResultTable()
    for r in levels:
        dists = []
        for rep in range(reps):
            if r == 0:
                dists.append(0.0)  # nothing replaced, estimator is deterministic
                continue
            rng = make_rng(derive_seed(seed, f"{scenario}|{estimator}|r={r!r}", rep))
            dirty = contaminator(data, r, rng)
            dists.append(m.robust_distance(estimate(estimator, dirty, m, cfg), clean))
        table.add(scenario, estimator, "distance", dists, n=len(data), r=r)
    return table


def shape_contaminator(spec, configurations=None):
    """Adapt a shape :class:`~robext.simgen.ContaminationSpec` to ``breakdown_curve``.

    Contamination acts on raw ``configurations`` when given (matched to the
    preshape data by row), then the result is re-preshaped.
    """
    from .shape import to_preshape
    from .simgen import contaminate_configurations

    def apply(data, rate, rng):
        base = data if configurations is None else configurations
        dirty, _ = contaminate_configurations(base, spec.with_rate(rate), rng)
        return to_preshape(dirty)

    return apply


def angle_contaminator(spec):
    """Adapt a ``replace-angles`` spec to ``breakdown_curve`` on S^1 points."""
    from .simgen import contaminate_angles
    from .sphere import angle_to_point, point_to_angle

    def apply(data, rate, rng):
        return angle_to_point(contaminate_angles(point_to_angle(data), spec.with_rate(rate), rng))

    return apply
