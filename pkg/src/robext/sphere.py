"""Unit sphere S^d embedded in R^{d+1} by inclusion."""

from __future__ import annotations

import numpy as np

from .geometry import MEMBERSHIP_TOL, FocalPointError, Manifold, ProjectionResult

TWO_PI = 2.0 * np.pi
SPHERE_FOCAL_TOL = 1e-12


def wrap_angle(theta):
    """Map angles into [0, 2*pi), including negative inputs."""
    wrapped = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


def angle_to_point(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def point_to_angle(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 2:
        raise ValueError("point_to_angle is only defined on S^1")
    return wrap_angle(np.arctan2(p[..., 1], p[..., 0]))


class Sphere(Manifold):
    """S^d with the inclusion embedding and normalisation projection."""

    kind = "sphere"

    def __init__(self, d: int = 1):
        if d < 1:
            raise ValueError("sphere dimension must be >= 1")
        self.d = int(d)

    @property
    def ambient_dim(self):
        return self.d + 1

    def native_shape(self):
        return (self.d + 1,)

    def describe(self):
        return {"kind": self.kind, "d": self.d, "ambient_dim": self.ambient_dim}

    def validate(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.d + 1:
            raise ValueError(f"expected an (n, {self.d + 1}) array of unit vectors")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sphere points must be finite")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(np.abs(norms - 1.0) > MEMBERSHIP_TOL):
            raise ValueError("sphere points must have unit norm")
        return pts

    def embed(self, points):
        return np.asarray(points, dtype=float).copy()

    def project(self, y):
        return sphere_project(y)

    def unembed(self, y):
        y = np.asarray(y, dtype=float)
        return y / np.linalg.norm(y)

    def contains(self, y, tol=MEMBERSHIP_TOL):
        y = np.asarray(y, dtype=float)
        return y.shape == (self.d + 1,) and abs(np.linalg.norm(y) - 1.0) <= tol


def sphere_project(mu) -> ProjectionResult:
    mu = np.asarray(mu, dtype=float)
    norm = float(np.linalg.norm(mu))
    if not norm >= SPHERE_FOCAL_TOL:
        raise FocalPointError(f"ambient point has norm {norm:.3e}; projection is not unique", gap=norm)
    return ProjectionResult(point=mu / norm, gap=norm)


def sphere_exp(base, v):
    """Great-circle exponential map at ``base``."""
    base = np.asarray(base, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(float(base @ v)) > 1e-10 * max(1.0, float(np.linalg.norm(v))):
        raise ValueError("tangent vector is not orthogonal to the base point")
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return base.copy()
    out = np.cos(nv) * base + np.sin(nv) * (v / nv)
    return out / np.linalg.norm(out)


def sphere_log(base, q):
    """Great-circle logarithm; undefined for antipodal ``q``."""
    base = np.asarray(base, dtype=float)
    q = np.asarray(q, dtype=float)
    c = float(base @ q)
    perp = q - c * base
    s = float(np.linalg.norm(perp))
    if s < 1e-15:
        if c < 0:
            raise ValueError("logarithm of an antipodal point is not defined")
        return np.zeros_like(base)
    theta = np.arctan2(s, c)
    return theta * perp / s


def _log_many(base, points):
    c = points @ base
    perp = points - c[:, None] * base
    s = np.linalg.norm(perp, axis=1)
    theta = np.arctan2(s, c)
    logs = np.zeros_like(points)
    nz = s > 1e-15
    logs[nz] = (theta[nz] / s[nz])[:, None] * perp[nz]
    return logs, theta


def intrinsic_median_sphere(data, alpha=1.0, cfg=None, weights=None):
    """Geodesic (intrinsic) geometric median on S^d.

    Iterates ``m <- Exp_m(alpha * v)`` where ``v`` is the inverse-distance
    weighted average of the logarithms of the data.  ``alpha`` is halved
    whenever a step would increase the objective.  When the iterate lands
    on a data point, the same optimality test used by the extrinsic solver
    is applied in the tangent space.
    """
    from .weiszfeld import WeiszfeldConfig

    cfg = cfg or WeiszfeldConfig()
    pts = Sphere(np.asarray(data).shape[1] - 1).validate(data)
    n = pts.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")

    def objective(m):
        return float(w @ np.arctan2(np.linalg.norm(pts - np.outer(pts @ m, m), axis=1), pts @ m))

    mean = w @ pts
    if np.linalg.norm(mean) > SPHERE_FOCAL_TOL:
        m = mean / np.linalg.norm(mean)
    else:
        m = pts[0].copy()
    f = objective(m)
    step = float(alpha)
    for _ in range(cfg.max_iters):
        logs, rho = _log_many(m, pts)
        coincide = rho < 1e-12
        if np.any(coincide):
            w_here = w[coincide].sum()
            rest = ~coincide
            if not np.any(rest):
                break
            resultant = (w[rest] / rho[rest]) @ logs[rest]
            rnorm = float(np.linalg.norm(resultant))
            if rnorm <= w_here:
                break
            lip = float(np.sum(w[rest] / rho[rest]))
            move = (rnorm - w_here) / lip * resultant / rnorm
        else:
            inv = w / rho
            v = (inv @ logs) / inv.sum()
            move = step * v
        cand = sphere_exp(m, move - (move @ m) * m)
        fc = objective(cand)
        while fc > f + 1e-15 * max(1.0, abs(f)) and step > 1e-12 and not np.any(coincide):
            step *= 0.5
            move = step * v
            cand = sphere_exp(m, move - (move @ m) * m)
            fc = objective(cand)
        if fc > f + 1e-15 * max(1.0, abs(f)):
            break
        m, f = cand, fc
        if np.linalg.norm(move) < cfg.epsilon:
            break
    return m
