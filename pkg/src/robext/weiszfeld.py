"""Weighted Fermat-Weber solvers.

``f(y) = sum_i w_i ||y - p_i||`` is minimised over flat ambient vectors.
Two schemes are provided:

* ``plain``: Weiszfeld's iteration written as a gradient step,
  ``y <- y - s(y) grad f(y)`` with ``s(y) = 1 / sum_i w_i / ||y - p_i||``.
* ``smoothed-accelerated``: Nesterov/FISTA steps of size ``1 / L_s`` on a
  Huber-type smoothing of ``f`` that shares its minimiser.

Both start from the Vardi-Zhang point by default, which makes the
``O(1/t)`` and ``O(1/t^2)`` bounds checkable on every run
(see :func:`check_sublinear_bound` and :func:`check_accelerated_bound`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COLLISION_TOL = 1e-300
COLINEAR_TOL = 1e-10
TIE_TOL = 1e-12

VARIANTS = ("plain", "smoothed-accelerated")


@dataclass(frozen=True)
class WeiszfeldConfig:
    epsilon: float = 1e-8
    max_iters: int = 10_000
    variant: str = "plain"
    init: object = "vardi-zhang"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if isinstance(self.init, str):
            if self.init not in ("vardi-zhang", "centroid"):
                raise ValueError("init must be 'vardi-zhang', 'centroid' or an explicit point")
        else:
            object.__setattr__(self, "init", np.asarray(self.init, dtype=float))

    def replace(self, **changes):
        values = {"epsilon": self.epsilon, "max_iters": self.max_iters,
                  "variant": self.variant, "init": self.init}
        values.update(changes)
        return WeiszfeldConfig(**values)


@dataclass(frozen=True)
class VardiZhangInit:
    """Anchor-based starting point ``y0 = p_anchor + step * direction``."""

    point: np.ndarray
    anchor: int
    anchor_objectives: np.ndarray  # f(p_i) for every data point
    resultant_norm: float  # ||R_p||
    anchor_weight: float  # total weight sitting exactly on p_anchor
    anchor_lipschitz: float  # L(p_anchor)
    step: float
    direction: np.ndarray
    optimal: bool

    @property
    def margin(self):
        """``||R_p|| - w_p``; positive unless the anchor itself is optimal."""
        return self.resultant_norm - self.anchor_weight


@dataclass(frozen=True)
class WeiszfeldReport:
    solution: np.ndarray
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    termination: str
    variant: str = "plain"
    init: VardiZhangInit | None = None
    iterates: np.ndarray | None = None
    smoothed_trace: np.ndarray | None = None

    @property
    def objective(self):
        return float(self.objective_trace[-1])


class FermatWeberProblem:
    """Points (n, D) with positive weights summing to one."""

    def __init__(self, points, weights=None, pairwise=None):
        P = np.asarray(points, dtype=float)
        if P.ndim != 2 or P.shape[0] == 0:
            raise ValueError("points must be a non-empty (n, D) array")
        if not np.all(np.isfinite(P)):
            raise ValueError("points must be finite")
        n = P.shape[0]
        if weights is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (n,):
                raise ValueError("one weight per point is required")
            if np.any(~(w > 0)):
                raise ValueError("weights must be strictly positive")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"weights must sum to 1 (got {w.sum():.12g})")
        self.points = P
        self.weights = w
        self._pairwise = None if pairwise is None else np.asarray(pairwise, dtype=float)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def pairwise(self):
        if self._pairwise is None:
            self._pairwise = pairwise_distances(self.points)
        return self._pairwise

    def distances(self, y):
        return np.linalg.norm(np.asarray(y, dtype=float) - self.points, axis=1)

    def objective(self, y):
        return float(self.weights @ self.distances(y))

    def gradient(self, y):
        diff = np.asarray(y, dtype=float) - self.points
        dist = np.linalg.norm(diff, axis=1)
        if np.any(dist <= COLLISION_TOL):
            raise ValueError("gradient is undefined at a data point")
        return (self.weights / dist) @ diff

    def lipschitz_operator(self, y):
        """``L(y) = sum_i w_i / ||y - p_i||`` (data-point branch excludes the anchor)."""
        dist = self.distances(y)
        off = dist > COLLISION_TOL
        return float(np.sum(self.weights[off] / dist[off]))

    def anchor_objectives(self):
        return self.pairwise @ self.weights


def pairwise_distances(P):
    P = np.asarray(P, dtype=float)
    sq = np.einsum("ij,ij->i", P, P)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (P @ P.T)
    np.maximum(d2, 0.0, out=d2)
    D = np.sqrt(d2)
    # the expansion loses accuracy for close pairs; recompute those directly
    scale = max(float(sq.max()), 1.0)
    close = d2 < 1e-6 * scale
    if np.any(close):
        ii, jj = np.nonzero(close)
        D[ii, jj] = np.linalg.norm(P[ii] - P[jj], axis=1)
    np.fill_diagonal(D, 0.0)
    return 0.5 * (D + D.T)


# --- degenerate (colinear) instances -------------------------------------------


def colinear_direction(P, tol=COLINEAR_TOL):
    """Unit direction of the line containing all points, ``None`` if not colinear.

    Identical points return a zero vector.
    """
    centred = P - P.mean(axis=0)
    scale = float(np.max(np.abs(centred))) if centred.size else 0.0
    if scale == 0.0:
        return np.zeros(P.shape[1])
    if P.shape[0] == 2:
        v = P[1] - P[0]
    else:
        _, s, vt = np.linalg.svd(centred, full_matrices=False)
        if len(s) > 1 and s[1] > tol * s[0]:
            return None
        v = vt[0]
    v = v / np.linalg.norm(v)
    first = int(np.argmax(np.abs(v) > 1e-12))
    return v if v[first] > 0 else -v


def weighted_median_on_line(P, w, direction):
    """Exact minimiser for colinear points: the 1-D weighted median.

    Ties (an interval of minimisers) resolve to the lowest coordinate along
    ``direction``, itself oriented so its first nonzero entry is positive.
    """
    if not np.any(direction):
        return P[0].copy(), 0
    coord = (P - P[0]) @ direction
    order = np.argsort(coord, kind="stable")
    cum = np.cumsum(w[order])
    pos = int(np.argmax(cum >= 0.5 - 1e-12))
    idx = int(order[pos])
    return P[idx].copy(), idx


# --- Vardi-Zhang initialisation ------------------------------------------------


def _first_argmin(values):
    best = float(np.min(values))
    return int(np.argmax(values <= best + TIE_TOL * max(1.0, abs(best))))


def _anchor_quantities(P, w, anchor, dist_from_anchor):
    coincide = dist_from_anchor <= COLLISION_TOL
    others = ~coincide
    w_here = float(w[coincide].sum())
    coef = np.zeros_like(w)
    coef[others] = w[others] / dist_from_anchor[others]
    resultant = coef.sum() * P[anchor] - coef @ P
    lip = float(coef.sum())
    return resultant, w_here, lip


def vardi_zhang_init(problem: FermatWeberProblem) -> VardiZhangInit:
    """Start at the best data point, then step off it along the descent direction.

    With ``p`` the data point of least objective, ``R_p`` the resultant of
    unit vectors pulling away from the other points and ``L`` the
    inverse-distance sum, the start is ``p + t_p d_p`` with
    ``d_p = -R_p / ||R_p||`` and ``t_p = (||R_p|| - w_p) / L(p)``.  When
    ``||R_p|| <= w_p`` the anchor already minimises ``f`` and is returned.
    Points coinciding with the anchor contribute their weight to ``w_p``.
    """
    P, w = problem.points, problem.weights
    fvals = problem.anchor_objectives()
    p = _first_argmin(fvals)
    resultant, w_here, lip = _anchor_quantities(P, w, p, problem.pairwise[p])
    rnorm = float(np.linalg.norm(resultant))
    if rnorm <= w_here or lip == 0.0:
        return VardiZhangInit(P[p].copy(), p, fvals, rnorm, w_here, lip, 0.0,
                              np.zeros(P.shape[1]), True)
    direction = -resultant / rnorm
    step = (rnorm - w_here) / lip
    return VardiZhangInit(P[p] + step * direction, p, fvals, rnorm, w_here, lip, step,
                          direction, False)


def _collision_step(P, w, dist):
    """Resolve an iterate sitting on a data point: stop if optimal, else step off."""
    anchor = int(np.argmin(dist))
    resultant, w_here, lip = _anchor_quantities(P, w, anchor, dist)
    rnorm = float(np.linalg.norm(resultant))
    if rnorm <= w_here or lip == 0.0:
        return None
    return P[anchor] - (rnorm - w_here) / lip * resultant / rnorm


# --- solvers -----------------------------------------------------------------------


def _initial_point(problem, cfg):
    if isinstance(cfg.init, np.ndarray):
        y0 = np.asarray(cfg.init, dtype=float)
        if y0.shape != (problem.points.shape[1],):
            raise ValueError("explicit init has the wrong dimension")
        return y0.copy(), None
    if cfg.init == "centroid":
        return problem.weights @ problem.points, None
    vz = vardi_zhang_init(problem)
    return vz.point.copy(), vz


def _freeze(arr):
    arr = np.asarray(arr)
    arr.setflags(write=False)
    return arr


def _plain_loop(problem, y, cfg, keep_iterates, start_iter=0):
    P, w = problem.points, problem.weights
    trace, iterates = [], []
    termination, converged = "max-iters", False
    it = start_iter
    while True:
        diff = y - P
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        trace.append(float(w @ dist))
        if keep_iterates:
            iterates.append(y.copy())
        if it >= cfg.max_iters:
            break
        hit = dist <= COLLISION_TOL
        if np.any(hit):
            y_next = _collision_step(P, w, dist)
            if y_next is None:
                termination, converged = "data-point-optimal", True
                break
        else:
            inv = w / dist
            grad = inv @ diff
            step = 1.0 / inv.sum()
            y_next = y - step * grad
        it += 1
        moved = float(np.linalg.norm(y_next - y))
        y = y_next
        if moved < cfg.epsilon:
            diff = y - P
            trace.append(float(w @ np.sqrt(np.einsum("ij,ij->i", diff, diff))))
            if keep_iterates:
                iterates.append(y.copy())
            termination, converged = "displacement", True
            break
    return y, trace, iterates, it, converged, termination


def _colinear_report(problem, direction, cfg, keep_iterates):
    sol, _ = weighted_median_on_line(problem.points, problem.weights, direction)
    return WeiszfeldReport(
        solution=_freeze(sol),
        objective_trace=_freeze(np.array([problem.objective(sol)])),
        iterations=0,
        converged=True,
        termination="colinear",
        variant=cfg.variant,
        iterates=_freeze(sol[None]) if keep_iterates else None,
    )


def fermat_weber_solve(problem, cfg=None, keep_iterates=False, weights=None):
    """Minimise the weighted sum of distances.

    ``problem`` is a :class:`FermatWeberProblem` or an ``(n, D)`` array (in
    which case ``weights`` may be given).  Exhausting ``max_iters`` is not an
    error: the report comes back with ``converged=False``.
    """
    if not isinstance(problem, FermatWeberProblem):
        problem = FermatWeberProblem(problem, weights)
    cfg = cfg or WeiszfeldConfig()
    direction = colinear_direction(problem.points)
    if direction is not None:
        return _colinear_report(problem, direction, cfg, keep_iterates)
    if cfg.variant == "smoothed-accelerated":
        return _accelerated(problem, cfg, keep_iterates)

    y0, vz = _initial_point(problem, cfg)
    if vz is not None and vz.optimal:
        return WeiszfeldReport(
            solution=_freeze(y0), objective_trace=_freeze(np.array([problem.objective(y0)])),
            iterations=0, converged=True, termination="data-point-optimal", variant="plain",
            init=vz, iterates=_freeze(y0[None]) if keep_iterates else None,
        )
    y, trace, iterates, it, converged, termination = _plain_loop(problem, y0, cfg, keep_iterates)
    return WeiszfeldReport(
        solution=_freeze(y),
        objective_trace=_freeze(np.array(trace)),
        iterations=it,
        converged=converged,
        termination=termination,
        variant="plain",
        init=vz,
        iterates=_freeze(np.array(iterates)) if keep_iterates else None,
    )


# --- smoothed objective and the accelerated scheme ---------------------------------


@dataclass(frozen=True)
class SmoothedProblem:
    """Huber-type upper approximation ``sum_i w_i g_{b_i}(y - p_i)`` of ``f``.

    ``g_b(r) = ||r||`` outside the ball of radius ``b`` and
    ``||r||^2 / (2b) + b / 2`` inside it.  Radii ``b_i = f(p_i) - f(y0)``
    come from the Vardi-Zhang start; zero radii keep the plain norm.
    """

    base: FermatWeberProblem
    radii: np.ndarray
    lipschitz: float
    init: VardiZhangInit = field(repr=False, default=None)

    def value(self, y):
        dist = self.base.distances(y)
        b = self.radii
        inside = dist < b
        g = dist.copy()
        g[inside] = dist[inside] ** 2 / (2.0 * b[inside]) + b[inside] / 2.0
        return float(self.base.weights @ g)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        diff = y - self.base.points
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        return self._coefficients(dist) @ diff

    def _coefficients(self, dist):
        b = self.radii
        w = self.base.weights
        inside = dist < b
        coef = np.zeros_like(dist)
        coef[inside] = w[inside] / b[inside]
        outside = ~inside & (dist > COLLISION_TOL)
        coef[outside] = w[outside] / dist[outside]
        return coef


def smoothed_problem(problem: FermatWeberProblem, init: VardiZhangInit | None = None):
    init = init or vardi_zhang_init(problem)
    f0 = problem.objective(init.point)
    radii = np.maximum(init.anchor_objectives - f0, 0.0)
    pos = radii > 0
    lipschitz = float(np.sum(problem.weights[pos] / radii[pos]))
    return SmoothedProblem(base=problem, radii=radii, lipschitz=lipschitz, init=init)


def _accelerated(problem, cfg, keep_iterates):
    if isinstance(cfg.init, np.ndarray) or cfg.init != "vardi-zhang":
        raise ValueError("the smoothed-accelerated variant requires the vardi-zhang init")
    vz = vardi_zhang_init(problem)
    y0 = vz.point.copy()
    if vz.optimal:
        f0 = problem.objective(y0)
        return WeiszfeldReport(
            solution=_freeze(y0), objective_trace=_freeze(np.array([f0])), iterations=0,
            converged=True, termination="data-point-optimal", variant=cfg.variant, init=vz,
            iterates=_freeze(y0[None]) if keep_iterates else None,
            smoothed_trace=_freeze(np.array([f0])),
        )
    sp = smoothed_problem(problem, vz)
    P, w = problem.points, problem.weights
    inv_l = 1.0 / sp.lipschitz

    def evaluate(y):
        diff = y - P
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        f = float(w @ dist)
        inside = dist < sp.radii
        g = dist.copy()
        g[inside] = dist[inside] ** 2 / (2.0 * sp.radii[inside]) + sp.radii[inside] / 2.0
        return f, float(w @ g)

    f_val, fs_val = evaluate(y0)
    trace, strace, iterates = [f_val], [fs_val], [y0.copy()] if keep_iterates else []
    y_prev, u, s = y0, y0.copy(), 1.0
    termination, converged, t = "max-iters", False, 0
    while t < cfg.max_iters:
        t += 1
        diff = u - P
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        y = u - inv_l * (sp._coefficients(dist) @ diff)
        s_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * s * s))
        u_next = y + ((s - 1.0) / s_next) * (y - y_prev)
        moved = float(np.linalg.norm(y - y_prev))
        grad_step = float(np.linalg.norm(y - u))
        f_val, fs_val = evaluate(y)
        trace.append(f_val)
        strace.append(fs_val)
        if keep_iterates:
            iterates.append(y.copy())
        y_prev, u, s = y, u_next, s_next
        # displacement alone can stall under momentum; also require a small gradient step
        if moved <= cfg.epsilon and grad_step <= cfg.epsilon:
            termination, converged = "displacement", True
            break
    return WeiszfeldReport(
        solution=_freeze(y_prev),
        objective_trace=_freeze(np.array(trace)),
        iterations=t,
        converged=converged,
        termination=termination,
        variant=cfg.variant,
        init=vz,
        iterates=_freeze(np.array(iterates)) if keep_iterates else None,
        smoothed_trace=_freeze(np.array(strace)),
    )


# --- convergence certificates --------------------------------------------------------

REFERENCE_CFG = WeiszfeldConfig(epsilon=1e-14, max_iters=1_000_000)
CERTIFICATE_SLACK = 1e-12


@dataclass(frozen=True)
class ConvergenceCertificate:
    bound_trace: np.ndarray
    objective_gap_trace: np.ndarray
    holds: bool
    derived_bound_trace: np.ndarray | None = None
    derived_gap_trace: np.ndarray | None = None


def reference_solution(problem):
    """High-precision plain solve used as ``y*`` / ``f*`` by the certificates."""
    rep = fermat_weber_solve(problem, REFERENCE_CFG)
    return rep.solution, problem.objective(rep.solution)


def _reference(problem, reference):
    if reference is None:
        return reference_solution(problem)
    y_star = np.asarray(reference, dtype=float)
    return y_star, problem.objective(y_star)


def check_sublinear_bound(report: WeiszfeldReport, problem, reference=None,
                          slack=CERTIFICATE_SLACK) -> ConvergenceCertificate:
    """Certify ``f(y^t) - f* <= L(p) ||y0 - y*||^2 / (t (||R_p|| - w_p)^2)`` for t >= 1."""
    if report.variant != "plain" or report.init is None:
        raise ValueError("the sublinear certificate needs a plain run from the vardi-zhang init")
    vz = report.init
    y_star, f_star = _reference(problem, reference)
    gaps = np.asarray(report.objective_trace[1:]) - f_star
    if vz.optimal or len(gaps) == 0:
        return ConvergenceCertificate(np.zeros(len(gaps)), gaps, bool(np.all(gaps <= slack)))
    radius2 = float(np.sum((vz.point - y_star) ** 2))
    t = np.arange(1, len(gaps) + 1, dtype=float)
    bounds = vz.anchor_lipschitz * radius2 / (t * vz.margin**2)
    return ConvergenceCertificate(bounds, gaps, bool(np.all(gaps <= bounds + slack)))


def check_accelerated_bound(report: WeiszfeldReport, problem, reference=None,
                            slack=CERTIFICATE_SLACK) -> ConvergenceCertificate:
    """Certify the smoothed ``2 L_s ||y0 - y*||^2 / (t+1)^2`` bound and the derived one on ``f``."""
    if report.variant != "smoothed-accelerated" or report.init is None:
        raise ValueError("the accelerated certificate needs a smoothed-accelerated run")
    vz = report.init
    y_star, f_star = _reference(problem, reference)
    sgaps = np.asarray(report.smoothed_trace) - f_star
    fgaps = np.asarray(report.objective_trace) - f_star
    if vz.optimal:
        ok = bool(np.all(sgaps <= slack))
        zeros = np.zeros(len(sgaps))
        return ConvergenceCertificate(zeros, sgaps, ok, zeros, fgaps)
    sp = smoothed_problem(problem, vz)
    radius2 = float(np.sum((vz.point - y_star) ** 2))
    t = np.arange(len(sgaps), dtype=float)
    bounds = 2.0 * sp.lipschitz * radius2 / (t + 1.0) ** 2
    derived = 4.0 * radius2 * vz.anchor_lipschitz / ((t + 1.0) * vz.margin) ** 2
    ok = bool(np.all(sgaps <= bounds + slack) and np.all(fgaps <= derived + slack))
    return ConvergenceCertificate(bounds, sgaps, ok, derived, fgaps)


# --- many problems sharing one point set ------------------------------------------


def solve_many(points, weight_matrix, cfg=None, pairwise=None):
    """Plain solves for several weight vectors over the same points.

    Equivalent to calling :func:`fermat_weber_solve` once per row of
    ``weight_matrix`` (zero weights drop the point), but iterates all
    instances together.  Distances use the Gram expansion with direct
    recomputation for near-coincident pairs.
    """
    cfg = cfg or WeiszfeldConfig()
    if cfg.variant != "plain" or isinstance(cfg.init, np.ndarray) or cfg.init != "vardi-zhang":
        raise ValueError("solve_many supports the plain variant with vardi-zhang init")
    P = np.asarray(points, dtype=float)
    W = np.atleast_2d(np.asarray(weight_matrix, dtype=float))
    m, n = W.shape
    if n != P.shape[0]:
        raise ValueError("weight rows must match the number of points")
    if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("weight rows must be nonnegative and sum to 1")
    Dm = pairwise_distances(P) if pairwise is None else np.asarray(pairwise, dtype=float)
    reports: list[WeiszfeldReport | None] = [None] * m
    support = W > 0
    full = support.all(axis=1)

    # rows needing the exact single-instance path
    global_colinear = colinear_direction(P) is not None
    individual = np.zeros(m, dtype=bool)
    for j in range(m):
        if (full[j] and global_colinear) or (
            not full[j] and colinear_direction(P[support[j]]) is not None
        ):
            individual[j] = True

    # Vardi-Zhang starts for all rows at once
    F = np.where(support, W @ Dm, np.inf)
    best = F.min(axis=1, keepdims=True)
    anchors = np.argmax(F <= best + TIE_TOL * np.maximum(1.0, np.abs(best)), axis=1)
    Dp = Dm[anchors]
    coincide = (Dp <= COLLISION_TOL) & support
    others = support & ~coincide
    coef = np.where(others, W / np.where(others, Dp, 1.0), 0.0)
    lip = coef.sum(axis=1)
    resultant = lip[:, None] * P[anchors] - coef @ P
    rnorm = np.linalg.norm(resultant, axis=1)
    w_here = np.where(coincide, W, 0.0).sum(axis=1)
    optimal = (rnorm <= w_here) | (lip == 0.0)
    safe_r = np.where(rnorm > 0, rnorm, 1.0)
    safe_l = np.where(lip > 0, lip, 1.0)
    steps = np.where(optimal, 0.0, (rnorm - w_here) / safe_l)
    directions = np.where(optimal[:, None], 0.0, -resultant / safe_r[:, None])
    Y = P[anchors] + steps[:, None] * directions

    inits = []
    for j in range(m):
        inits.append(VardiZhangInit(Y[j].copy(), int(anchors[j]), F[j].copy(), float(rnorm[j]),
                                    float(w_here[j]), float(lip[j]), float(steps[j]),
                                    directions[j].copy(), bool(optimal[j])))

    sq = np.einsum("ij,ij->i", P, P)
    scale = max(float(sq.max()), 1.0)
    traces = [[] for _ in range(m)]
    active = ~individual & ~optimal
    for j in np.nonzero(~individual & optimal)[0]:
        f0 = float(W[j] @ np.linalg.norm(Y[j] - P, axis=1))
        reports[j] = WeiszfeldReport(_freeze(Y[j].copy()), _freeze(np.array([f0])), 0, True,
                                     "data-point-optimal", "plain", inits[j])
    its = np.zeros(m, dtype=int)
    while np.any(active):
        idx = np.nonzero(active)[0]
        Ya = Y[idx]
        d2 = np.einsum("ij,ij->i", Ya, Ya)[:, None] + sq[None, :] - 2.0 * (Ya @ P.T)
        np.maximum(d2, 0.0, out=d2)
        close = d2 < 1e-6 * scale
        dist = np.sqrt(d2)
        if np.any(close):
            ii, jj = np.nonzero(close)
            dist[ii, jj] = np.linalg.norm(Ya[ii] - P[jj], axis=1)
        Wa = W[idx]
        fvals = np.einsum("ij,ij->i", Wa, dist)
        for row, j in enumerate(idx):
            traces[j].append(float(fvals[row]))
        hits = np.any((dist <= COLLISION_TOL) & support[idx], axis=1)
        capped = its[idx] >= cfg.max_iters
        for row in np.nonzero(hits | capped)[0]:
            j = idx[row]
            active[j] = False
            if capped[row]:
                reports[j] = WeiszfeldReport(_freeze(Y[j].copy()), _freeze(np.array(traces[j])),
                                             int(its[j]), False, "max-iters", "plain", inits[j])
                continue
            prob = FermatWeberProblem(P[support[j]], W[j, support[j]])
            y, tr, _, it, conv, term = _plain_loop(prob, Y[j].copy(), cfg, False, int(its[j]))
            reports[j] = WeiszfeldReport(_freeze(y), _freeze(np.array(traces[j][:-1] + tr)),
                                         it, conv, term, "plain", inits[j])
        keep = ~(hits | capped)
        if not np.any(keep):
            continue
        idx, dist, Wa = idx[keep], dist[keep], Wa[keep]
        inv = np.where(Wa > 0, Wa / np.where(dist > 0, dist, 1.0), 0.0)
        Y_new = (inv @ P) / inv.sum(axis=1)[:, None]
        moved = np.linalg.norm(Y_new - Y[idx], axis=1)
        Y[idx] = Y_new
        its[idx] += 1
        for row in np.nonzero(moved < cfg.epsilon)[0]:
            j = idx[row]
            active[j] = False
            f_end = float(W[j] @ np.linalg.norm(Y[j] - P, axis=1))
            reports[j] = WeiszfeldReport(_freeze(Y[j].copy()),
                                         _freeze(np.array(traces[j] + [f_end])), int(its[j]),
                                         True, "displacement", "plain", inits[j])

    for j in np.nonzero(individual)[0]:
        prob = FermatWeberProblem(P[support[j]], W[j, support[j]])
        reports[j] = fermat_weber_solve(prob, cfg)
    return reports
