import numpy as np
import pytest

from robext import weiszfeld as wz
from robext.weiszfeld import (
    FermatWeberProblem,
    SmoothedProblem,
    WeiszfeldConfig,
    check_accelerated_bound,
    check_sublinear_bound,
    fermat_weber_solve,
    pairwise_distances,
    reference_solution,
    smoothed_problem,
    solve_many,
    vardi_zhang_init,
)

from oracles import finite_difference_gradient, grid_oracle_2d, random_instance

SEEDS = [0, 1, 2]
TIGHT = WeiszfeldConfig(epsilon=1e-12, max_iters=100_000)
FAST = WeiszfeldConfig(epsilon=1e-10, variant="smoothed-accelerated", max_iters=100_000)


def _instances(seed, count, max_dim=20, max_n=200):
    rng = np.random.default_rng(seed)
    return [FermatWeberProblem(*random_instance(rng, max_dim, max_n)) for _ in range(count)]


# --- examples -----------------------------------------------------------------------


def test_two_points_colinear_fallback():
    rep = fermat_weber_solve(np.array([[0.0, 0.0], [1.0, 0.0]]), weights=[0.5, 0.5])
    assert rep.termination == "colinear"
    assert np.array_equal(rep.solution, [0.0, 0.0])


def test_colinear_weighted_median():
    P = np.array([[0.0, 0.0], [2.0, 2.0], [1.0, 1.0], [5.0, 5.0]])
    rep = fermat_weber_solve(P, weights=[0.1, 0.2, 0.3, 0.4])
    # sorted along the line: 0 (0.1), 1 (0.3), 2 (0.2), 5 (0.4) -> cumulative hits 0.5 at (2, 2)
    assert np.array_equal(rep.solution, [2.0, 2.0])
    assert rep.converged


def test_square():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    rep = fermat_weber_solve(P, TIGHT)
    assert np.allclose(rep.solution, [0.5, 0.5], atol=1e-6)
    assert np.allclose(grid_oracle_2d(P), [0.5, 0.5], atol=1e-6)


def test_equilateral_triangle():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    rep = fermat_weber_solve(P, TIGHT)
    centroid = P.mean(axis=0)
    assert np.allclose(rep.solution, centroid, atol=1e-6)
    assert np.allclose(grid_oracle_2d(P), centroid, atol=1e-6)


def test_identical_points():
    P = np.tile([[0.3, -1.2, 2.0]], (4, 1))
    rep = fermat_weber_solve(P)
    assert np.array_equal(rep.solution, P[0])
    assert rep.iterations == 0


@pytest.mark.parametrize("seed", SEEDS)
def test_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    for _ in range(5):
        P, w = random_instance(rng, max_dim=2, max_n=30)
        rep = fermat_weber_solve(FermatWeberProblem(P[:, :2], w), TIGHT)
        assert np.linalg.norm(rep.solution - grid_oracle_2d(P[:, :2], w)) < 1e-3


# --- invariants -------------------------------------------------------------------------


@pytest.mark.parametrize("seed", SEEDS)
def test_objective_trace_monotone(seed):
    for pr in _instances(seed, 10):
        trace = fermat_weber_solve(pr, TIGHT).objective_trace
        assert np.all(trace[1:] <= trace[:-1] * (1 + 1e-12))


@pytest.mark.parametrize("seed", SEEDS)
def test_fejer_monotone(seed):
    for pr in _instances(seed, 10):
        y_star, _ = reference_solution(pr)
        its = fermat_weber_solve(pr, TIGHT, keep_iterates=True).iterates
        d = np.linalg.norm(its - y_star, axis=1)
        assert np.all(d[1:] <= d[:-1] + 1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_translation_equivariance(seed):
    rng = np.random.default_rng(seed)
    for pr in _instances(seed, 5):
        c = rng.normal(size=pr.points.shape[1]) * 3
        a = fermat_weber_solve(pr, TIGHT).solution
        b = fermat_weber_solve(FermatWeberProblem(pr.points + c, pr.weights), TIGHT).solution
        assert np.linalg.norm(b - (a + c)) < 1e-9


def test_uniform_weights_bit_identical():
    for pr in _instances(4, 5):
        n = pr.n
        a = fermat_weber_solve(pr.points, keep_iterates=True)
        b = fermat_weber_solve(pr.points, keep_iterates=True, weights=np.full(n, 1.0 / n))
        assert np.array_equal(a.iterates, b.iterates)


# --- Vardi-Zhang start --------------------------------------------------------------------


def test_vz_hand_computed_triangle():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    vz = vardi_zhang_init(FermatWeberProblem(P))
    assert vz.anchor == 0  # all anchors tie
    # unit vectors towards the other two vertices are 60 degrees apart
    assert vz.resultant_norm == pytest.approx(np.sqrt(3) / 3, abs=1e-14)
    assert vz.anchor_lipschitz == pytest.approx(2 / 3, abs=1e-14)
    step = (np.sqrt(3) / 3 - 1 / 3) / (2 / 3)
    towards = (P.mean(axis=0) - P[0]) / np.linalg.norm(P.mean(axis=0) - P[0])
    assert np.allclose(vz.point, P[0] + step * towards, atol=1e-14)
    assert not vz.optimal


def test_vz_two_points():
    # both endpoints tie; the segment is optimal so the step is zero
    vz = vardi_zhang_init(FermatWeberProblem(np.array([[0.0, 0.0], [2.0, 0.0]])))
    assert vz.anchor == 0
    assert vz.resultant_norm == pytest.approx(0.5)
    assert vz.step == 0.0 and vz.optimal


def test_vz_heavy_point_is_optimal():
    P = np.array([[0.1, 0.2], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])
    w = np.array([0.9, 0.025, 0.025, 0.025, 0.025])
    pr = FermatWeberProblem(P, w)
    vz = vardi_zhang_init(pr)
    assert vz.optimal and vz.anchor == 0
    assert np.array_equal(vz.point, P[0])
    assert np.linalg.norm(grid_oracle_2d(P, w) - P[0]) < 1e-6
    rep = fermat_weber_solve(pr)
    assert rep.termination == "data-point-optimal" and rep.iterations == 0


def test_vz_square_tie_is_deterministic():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    inits = [vardi_zhang_init(FermatWeberProblem(P)) for _ in range(3)]
    assert all(v.anchor == 0 for v in inits)
    assert all(np.array_equal(v.point, inits[0].point) for v in inits)


def test_vz_start_improves_on_anchor():
    for pr in _instances(9, 20):
        vz = vardi_zhang_init(pr)
        assert pr.objective(vz.point) < vz.anchor_objectives[vz.anchor]
        assert vz.anchor == int(np.argmin(vz.anchor_objectives))


# --- degenerate paths ------------------------------------------------------------------------


def test_iterate_hitting_data_point_steps_off():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(12, 3))
    pr = FermatWeberProblem(P)
    rep = fermat_weber_solve(pr, TIGHT.replace(init=P[3]), keep_iterates=True)
    y_star, _ = reference_solution(pr)
    assert np.linalg.norm(rep.solution - y_star) < 1e-8
    assert np.linalg.norm(rep.iterates[1] - P[3]) > 0


def test_iterate_hitting_optimal_data_point_stops():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, -0.2]])
    w = np.array([0.7, 0.1, 0.1, 0.1])
    rep = fermat_weber_solve(FermatWeberProblem(P, w), WeiszfeldConfig(init=P[0]))
    assert rep.termination == "data-point-optimal"
    assert np.array_equal(rep.solution, P[0])


def test_max_iters_is_not_an_error():
    pr = _instances(1, 1)[0]
    rep = fermat_weber_solve(pr, WeiszfeldConfig(epsilon=1e-15, max_iters=2))
    assert not rep.converged and rep.termination == "max-iters" and rep.iterations == 2


def test_centroid_init_and_explicit_init():
    pr = _instances(2, 1)[0]
    y_star, _ = reference_solution(pr)
    for init in ("centroid", pr.points[0] + 1.0):
        rep = fermat_weber_solve(pr, TIGHT.replace(init=init))
        assert rep.init is None
        assert np.linalg.norm(rep.solution - y_star) < 1e-8


def test_bad_inputs():
    with pytest.raises(ValueError):
        FermatWeberProblem(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        FermatWeberProblem([[0.0, 1.0], [1.0, 0.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        FermatWeberProblem([[0.0, 1.0], [1.0, 0.0]], [1.0, 0.0])
    with pytest.raises(ValueError):
        FermatWeberProblem([[0.0, np.inf], [1.0, 0.0]])
    with pytest.raises(ValueError):
        WeiszfeldConfig(epsilon=0)
    with pytest.raises(ValueError):
        WeiszfeldConfig(variant="newton")
    with pytest.raises(ValueError):
        WeiszfeldConfig(init="random")
    pr = _instances(0, 1)[0]
    with pytest.raises(ValueError):
        fermat_weber_solve(pr, FAST.replace(init="centroid"))
    with pytest.raises(ValueError):
        fermat_weber_solve(pr, TIGHT.replace(init=np.zeros(pr.points.shape[1] + 1)))


def test_reports_are_immutable():
    rep = fermat_weber_solve(_instances(0, 1)[0], keep_iterates=True)
    with pytest.raises(ValueError):
        rep.solution[0] = 1.0
    with pytest.raises(ValueError):
        rep.iterates[0, 0] = 1.0


def test_pairwise_distances_close_pairs():
    rng = np.random.default_rng(0)
    P = rng.normal(size=(6, 4)) * 1e4
    P[1] = P[0] + 1e-7
    D = pairwise_distances(P)
    direct = np.linalg.norm(P[:, None] - P[None], axis=2)
    assert np.allclose(D, direct, rtol=1e-9, atol=0)


# --- batched solver -------------------------------------------------------------------------


def test_solve_many_matches_single_solves():
    rng = np.random.default_rng(3)
    P = rng.normal(size=(40, 5))
    W = rng.uniform(size=(6, 40))
    W[2, :30] = 0.0  # support of 10 points
    W[4, [0, 5]] = 0.0
    W /= W.sum(axis=1, keepdims=True)
    batch = solve_many(P, W, TIGHT)
    for row, rep in zip(W, batch):
        keep = row > 0
        single = fermat_weber_solve(FermatWeberProblem(P[keep], row[keep]), TIGHT)
        assert np.linalg.norm(rep.solution - single.solution) < 1e-9
        assert rep.converged


def test_solve_many_colinear_support():
    P = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 3.0]])
    W = np.array([[0.2, 0.5, 0.3, 0.0], [0.25, 0.25, 0.25, 0.25]])
    reps = solve_many(P, W)
    assert reps[0].termination == "colinear"
    assert np.array_equal(reps[0].solution, [1.0, 1.0])
    assert reps[1].termination != "colinear"


def test_solve_many_rejects_bad_rows():
    with pytest.raises(ValueError):
        solve_many(np.eye(3), [[0.5, 0.5, 0.5]])
    with pytest.raises(ValueError):
        solve_many(np.eye(3), [[1 / 3] * 3], FAST)


# --- certificates ------------------------------------------------------------------------------


@pytest.mark.parametrize("seed", SEEDS)
def test_sublinear_certificate(seed):
    for pr in _instances(seed, 8):
        rep = fermat_weber_solve(pr, WeiszfeldConfig(epsilon=1e-10))
        cert = check_sublinear_bound(rep, pr)
        assert cert.holds
        assert np.isfinite(cert.bound_trace[0]) and cert.bound_trace[0] > 0
        assert len(cert.bound_trace) == len(rep.objective_trace) - 1


def test_sublinear_certificate_refuses_centroid_init():
    pr = _instances(0, 1)[0]
    rep = fermat_weber_solve(pr, WeiszfeldConfig(init="centroid"))
    with pytest.raises(ValueError):
        check_sublinear_bound(rep, pr)
    with pytest.raises(ValueError):
        check_accelerated_bound(rep, pr)


@pytest.mark.parametrize("seed", SEEDS)
def test_accelerated_certificate(seed):
    for pr in _instances(seed, 8):
        rep = fermat_weber_solve(pr, FAST)
        y_star, f_star = reference_solution(pr)
        cert = check_accelerated_bound(rep, pr, reference=y_star)
        assert cert.holds
        # the smoothed objective sits above f along the run
        assert np.all(rep.smoothed_trace >= rep.objective_trace - 1e-12)
        sp = smoothed_problem(pr)
        assert sp.value(y_star) == pytest.approx(f_star, abs=1e-9)


# --- smoothed objective ------------------------------------------------------------------------


def _probe_points(sp, rng, count):
    """Random points, about half inside some smoothing ball."""
    P, b = sp.base.points, sp.radii
    out = []
    while len(out) < count:
        if rng.random() < 0.5:
            i = int(rng.integers(len(P)))
            if b[i] == 0:
                continue
            v = rng.normal(size=P.shape[1])
            y = P[i] + rng.uniform(0.05, 0.95) * b[i] * v / np.linalg.norm(v)
        else:
            y = sp.init.point + rng.normal(size=P.shape[1]) * np.linalg.norm(P.std(axis=0))
        if np.min(np.abs(sp.base.distances(y) - b)) > 1e-4 * max(1.0, b.max()):
            out.append(y)
    return out


@pytest.mark.parametrize("seed", SEEDS)
def test_smoothed_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pts = 0
    for pr in _instances(seed, 10, max_n=60):
        sp = smoothed_problem(pr)
        for y in _probe_points(sp, rng, 10):
            g = sp.gradient(y)
            fd = finite_difference_gradient(sp.value, y)
            assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-3)
            pts += 1
    assert pts == 100


@pytest.mark.parametrize("seed", SEEDS)
def test_smoothed_lipschitz_certificate(seed):
    rng = np.random.default_rng(seed)
    for pr in _instances(seed, 5):
        sp = smoothed_problem(pr)
        if np.any(sp.radii == 0):
            continue
        scale = np.linalg.norm(pr.points.std(axis=0))
        for _ in range(2000):
            y = sp.init.point + rng.normal(size=pr.points.shape[1]) * scale
            z = y + rng.normal(size=len(y)) * scale * 10.0 ** rng.uniform(-4, 0)
            lhs = np.linalg.norm(sp.gradient(y) - sp.gradient(z))
            assert lhs <= sp.lipschitz * np.linalg.norm(y - z) * (1 + 1e-10) + 1e-14


@pytest.mark.parametrize("seed", SEEDS)
def test_smoothed_upper_bound(seed):
    rng = np.random.default_rng(seed)
    for pr in _instances(seed, 5):
        sp = smoothed_problem(pr)
        assert np.all(sp.radii >= 0)
        pos = sp.radii > 0
        assert sp.lipschitz == pytest.approx(np.sum(pr.weights[pos] / sp.radii[pos]))
        for y in _probe_points(sp, rng, 20):
            assert sp.value(y) >= pr.objective(y) - 1e-12


def test_zero_radius_uses_plain_norm(monkeypatch):
    pr = _instances(5, 1, max_n=40)[0]
    base = smoothed_problem(pr)
    j = int(np.argmax(base.radii))  # farthest point, so its branch matters only far out

    def patched(problem, init=None):
        sp = base
        radii = sp.radii.copy()
        radii[j] = 0.0
        pos = radii > 0
        return SmoothedProblem(problem, radii, float(np.sum(problem.weights[pos] / radii[pos])), sp.init)

    monkeypatch.setattr(wz, "smoothed_problem", patched)
    sp = patched(pr)
    y = pr.points[j] + 0.3
    d, b = pr.distances(y), sp.radii
    g = d.copy()
    inside = d < b
    g[inside] = d[inside] ** 2 / (2 * b[inside]) + b[inside] / 2
    assert sp.value(y) == pytest.approx(pr.weights @ g, rel=1e-14)
    assert not inside[j] and b[j] == 0.0
    rep = fermat_weber_solve(pr, FAST)
    y_star, _ = reference_solution(pr)
    assert rep.converged
    assert np.linalg.norm(rep.solution - y_star) < 1e-7
