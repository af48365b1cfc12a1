"""Kernel-localised extrinsic regression (robust median and mean versions).

The robust fit at ``x`` is the projected weighted geometric median of the
embedded responses, with Nadaraya-Watson weights ``K_H(x_i - x)``.  The mean
version replaces the geometric median by the weighted ambient average.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FocalPointError, Manifold
from .simgen import make_rng
from .weiszfeld import (
    ConvergenceCertificate,
    FermatWeberProblem,
    WeiszfeldConfig,
    WeiszfeldReport,
    check_accelerated_bound,
    fermat_weber_solve,
    solve_many,
)

KERNELS = ("gaussian", "epanechnikov")


class EmptyNeighborhood(ValueError):
    """No covariate receives positive kernel mass at the evaluation point."""


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidths: tuple = (1.0,)  # diagonal of H; a single value is broadcast

    def __post_init__(self):
        if self.family not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        h = tuple(float(v) for v in np.atleast_1d(self.bandwidths))
        if not h or any(not v > 0 for v in h):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "bandwidths", h)

    @classmethod
    def isotropic(cls, family, h):
        return cls(family, (float(h),))

    def diag(self, p):
        h = np.asarray(self.bandwidths)
        if h.size == 1:
            return np.full(p, h[0])
        if h.size != p:
            raise ValueError(f"kernel has {h.size} bandwidths for {p} covariates")
        return h


def _log_kernel(family, u):
    """Log of the product kernel evaluated at scaled offsets ``u`` (..., p)."""
    if family == "gaussian":
        return -0.5 * np.sum(u * u, axis=-1) - 0.5 * u.shape[-1] * np.log(2 * np.pi)
    inside = np.all(np.abs(u) < 1.0, axis=-1)
    with np.errstate(divide="ignore"):
        vals = np.sum(np.log(np.clip(0.75 * (1.0 - u * u), 0.0, None)), axis=-1)
    return np.where(inside, vals, -np.inf)


def kernel_weights(x_eval, covariates, kernel: KernelSpec):
    """Normalised weights ``K_H(x_i - x) / sum_j K_H(x_j - x)``.

    Computed from log-kernel values shifted by their maximum, so Gaussian
    weights stay well defined even when every raw kernel value underflows.
    """
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    x = np.atleast_1d(np.asarray(x_eval, dtype=float))
    h = kernel.diag(X.shape[1])
    logk = _log_kernel(kernel.family, (X - x) / h)
    top = logk.max()
    if not np.isfinite(top):
        raise EmptyNeighborhood(f"no covariate within the kernel support at x={x.tolist()}")
    w = np.exp(logk - top)
    return w / w.sum()


def kernel_weight_matrix(x_evals, covariates, kernel: KernelSpec):
    """Rows of :func:`kernel_weights`; empty neighbourhoods give NaN rows."""
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    E = np.asarray(x_evals, dtype=float).reshape(-1, X.shape[1])
    h = kernel.diag(X.shape[1])
    logk = _log_kernel(kernel.family, (X[None, :, :] - E[:, None, :]) / h)
    top = logk.max(axis=1, keepdims=True)
    empty = ~np.isfinite(top[:, 0])
    W = np.exp(logk - np.where(empty[:, None], 0.0, top))
    W = W / np.where(empty, 1.0, W.sum(axis=1))[:, None]
    W[empty] = np.nan
    return W


@dataclass(eq=False)
class RegressionDataset:
    covariates: np.ndarray
    responses: np.ndarray
    manifold: Manifold
    configurations: np.ndarray | None = None  # raw landmarks, shapes only
    _embedded: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("need an (n, p) covariate matrix with n >= 2")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        self.covariates = X
        self.responses = self.manifold.validate(self.responses)
        if len(self.responses) != X.shape[0]:
            raise ValueError("covariates and responses differ in length")
        self._embedded = None

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def embedded(self):
        if self._embedded is None:
            self._embedded = self.manifold.embed(self.responses)
        return self._embedded

    def subset(self, idx):
        cfg = None if self.configurations is None else self.configurations[idx]
        return RegressionDataset(self.covariates[idx], self.responses[idx], self.manifold, cfg)


def _support_problem(J, w):
    keep = w > 0
    return FermatWeberProblem(J[keep], w[keep] / w[keep].sum())


def relr_fit(data: RegressionDataset, x_eval, kernel: KernelSpec, cfg: WeiszfeldConfig | None = None):
    """Robust local fit at ``x_eval``; returns ``(point, report)``.

    Points with zero kernel weight are dropped before solving.
    """
    cfg = cfg or WeiszfeldConfig()
    w = kernel_weights(x_eval, data.covariates, kernel)
    report = fermat_weber_solve(_support_problem(data.embedded, w), cfg)
    return data.manifold.project_unembed(report.solution), report


def relr_fit_fast(data: RegressionDataset, x_eval, kernel: KernelSpec,
                  cfg: WeiszfeldConfig | None = None, certify=True):
    """Accelerated robust fit; returns ``(point, report, certificate)``.

    The certificate needs a high-precision reference solve; pass
    ``certify=False`` to skip it (the certificate is then ``None``).
    """
    cfg = (cfg or WeiszfeldConfig()).replace(variant="smoothed-accelerated")
    w = kernel_weights(x_eval, data.covariates, kernel)
    problem = _support_problem(data.embedded, w)
    report = fermat_weber_solve(problem, cfg)
    cert = None
    if certify and report.termination != "colinear":
        cert = check_accelerated_bound(report, problem)
    return data.manifold.project_unembed(report.solution), report, cert


def elr_fit(data: RegressionDataset, x_eval, kernel: KernelSpec):
    """Kernel-weighted extrinsic mean at ``x_eval``."""
    w = kernel_weights(x_eval, data.covariates, kernel)
    return data.manifold.project_unembed(w @ data.embedded)


# --- many evaluation points --------------------------------------------------------


@dataclass
class CurveFit:
    points: list  # native points, None where the fit failed
    reports: list  # WeiszfeldReport per point (None for ELR or failures)
    errors: list  # None or an error message per point

    @property
    def ok(self):
        return [e is None for e in self.errors]


def _ambient_fits(J, W, method, cfg):
    """Ambient solutions for each weight row (rows may contain NaN = empty)."""
    m = W.shape[0]
    sols = np.full((m, J.shape[1]), np.nan)
    reports: list[WeiszfeldReport | None] = [None] * m
    good = ~np.isnan(W[:, 0])
    if method == "elr":
        sols[good] = W[good] @ J
        return sols, reports
    idx = np.nonzero(good)[0]
    if len(idx) == 0:
        return sols, reports
    if cfg.variant == "plain" and isinstance(cfg.init, str) and cfg.init == "vardi-zhang":
        reps = solve_many(J, W[idx], cfg)
    else:
        reps = [fermat_weber_solve(_support_problem(J, W[j]), cfg) for j in idx]
    for j, rep in zip(idx, reps):
        sols[j] = rep.solution
        reports[j] = rep
    return sols, reports


def fit_curve(data: RegressionDataset, x_evals, kernel: KernelSpec, method="relr",
              cfg: WeiszfeldConfig | None = None):
    """Fit at many evaluation points, recording failures per point."""
    if method not in ("relr", "elr"):
        raise ValueError("method must be 'relr' or 'elr'")
    cfg = cfg or WeiszfeldConfig()
    W = kernel_weight_matrix(x_evals, data.covariates, kernel)
    sols, reports = _ambient_fits(data.embedded, W, method, cfg)
    points, errors = [], []
    for j, y in enumerate(sols):
        if np.isnan(W[j, 0]):
            points.append(None)
            errors.append("empty-neighborhood")
            continue
        try:
            points.append(data.manifold.project_unembed(y))
            errors.append(None)
        except FocalPointError as exc:
            points.append(None)
            errors.append(f"focal-point: {exc}")
    return CurveFit(points, reports, errors)


# --- bandwidth selection --------------------------------------------------------------


@dataclass(frozen=True)
class CVResult:
    bandwidth: float
    scores: dict  # h -> mean held-out loss
    penalized: dict  # h -> number of held-out points scored by penalty

    def table(self):
        return [{"h": h, "score": self.scores[h], "penalized": self.penalized[h]} for h in self.scores]


def cv_bandwidth(data: RegressionDataset, family, grid, folds=5, seed=0, method="relr",
                 squared=False, cfg: WeiszfeldConfig | None = None):
    """K-fold cross-validated isotropic bandwidth.

    Held-out points are scored by the extrinsic distance between the
    embedded prediction and the embedded response (squared when
    ``squared``).  Points left without kernel mass, or whose prediction is
    focal, get the largest loss observed in that fold.  Ties go to the
    smaller bandwidth.
    """
    grid = sorted(float(h) for h in grid)
    if not grid or any(not h > 0 for h in grid):
        raise ValueError("bandwidth grid must be nonempty and positive")
    if not 2 <= folds <= data.n:
        raise ValueError("need 2 <= folds <= n")
    cfg = cfg or WeiszfeldConfig()
    J = data.embedded
    order = make_rng(seed).permutation(data.n)
    losses = {h: [] for h in grid}
    penalized = {h: 0 for h in grid}
    for test in np.array_split(order, folds):
        train = np.setdiff1d(order, test)
        Xtr, Jtr = data.covariates[train], J[train]
        rows = []
        for h in grid:
            rows.append(kernel_weight_matrix(data.covariates[test], Xtr, KernelSpec.isotropic(family, h)))
        W = np.vstack(rows)
        sols, _ = _ambient_fits(Jtr, W, method, cfg)
        fold_loss = np.full(W.shape[0], np.nan)
        for j, y in enumerate(sols):
            if np.isnan(y[0]):
                continue
            try:
                proj = data.manifold.project(y).point
            except FocalPointError:
                continue
            fold_loss[j] = np.linalg.norm(proj - J[test[j % len(test)]])
        if squared:
            fold_loss = fold_loss**2
        finite = fold_loss[np.isfinite(fold_loss)]
        penalty = finite.max() if finite.size else np.inf
        for g, h in enumerate(grid):
            block = fold_loss[g * len(test):(g + 1) * len(test)]
            bad = ~np.isfinite(block)
            penalized[h] += int(bad.sum())
            losses[h].extend(np.where(bad, penalty, block).tolist())
    scores = {h: float(np.mean(losses[h])) for h in grid}
    best = min(scores.values())
    chosen = next(h for h in grid if scores[h] <= best + 1e-12 * max(1.0, abs(best)))
    return CVResult(chosen, scores, penalized)
