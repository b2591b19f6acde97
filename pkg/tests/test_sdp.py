import numpy as np
import pytest
import scipy.linalg

from peakgain.sdp import (INFEASIBLE, MAX_ITERATIONS, OPTIMAL, UNBOUNDED, LmiBlock, SdpProblem,
                          check_feasibility, solve)
from peakgain.starnorm import build_sdp_d1
from peakgain.model import LtiSystem
from support import cvxpy_solve, system


def scalar_problem(lower):
    return SdpProblem(1, [1.0], [LmiBlock(np.array([[-lower]]), [(0, np.array([[1.0]]))])])


def schur_problem(a, b):
    """minimize t subject to [[a, b], [b, t]] >= 0; optimum b^2 / a."""
    return SdpProblem(1, [1.0], [LmiBlock(np.array([[a, b], [b, 0.0]]), [(0, np.array([[0, 0], [0, 1.0]]))])])


def random_bounded_problem(rng, m=4, sizes=(3, 2)):
    """Strictly feasible at a random ``y0`` and bounded through a positive definite dual point."""
    y0 = rng.normal(size=m)
    blocks, c = [], np.zeros(m)
    for s in sizes:
        fs = [(lambda q: q + q.T)(rng.normal(size=(s, s))) for _ in range(m)]
        g = rng.normal(size=(s, s))
        slack = g @ g.T + np.eye(s)
        f0 = slack - sum(y0[i] * fs[i] for i in range(m))
        h = rng.normal(size=(s, s))
        z0 = h @ h.T + np.eye(s)
        c += np.array([np.sum(f * z0) for f in fs])
        blocks.append(LmiBlock(f0, list(enumerate(fs))))
    return SdpProblem(m, c, blocks)


def test_scalar_lower_bound():
    sol = solve(scalar_problem(3.0))
    assert sol.status == OPTIMAL
    assert sol.y[0] == pytest.approx(3.0, abs=1e-6)


def test_trace_over_identity_floor():
    # P = [[p0, p1], [p1, p2]] >= I, minimize trace(P) -> P = I.
    e = [np.array([[1.0, 0], [0, 0]]), np.array([[0, 1.0], [1.0, 0]]), np.array([[0, 0], [0, 1.0]])]
    prob = SdpProblem(3, [1.0, 0.0, 1.0], [LmiBlock(-np.eye(2), list(enumerate(e)))])
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert np.allclose(sol.y, [1, 0, 1], atol=1e-6)
    assert sol.objective_value == pytest.approx(2.0, abs=1e-6)


def test_schur_example_and_feasibility_check():
    prob = schur_problem(1.0, 2.0)
    sol = solve(prob)
    assert sol.status == OPTIMAL
    assert sol.y[0] == pytest.approx(4.0, abs=1e-6)
    assert check_feasibility(prob, sol.y).ok()
    bad = check_feasibility(prob, [0.0])
    assert bad.min_eigenvalues[0] < 0 and not bad.ok()


def test_schur_family_matches_closed_form():
    rng = np.random.default_rng(3)
    for _ in range(25):
        a, b = rng.uniform(0.1, 5.0), rng.normal(scale=3.0)
        sol = solve(schur_problem(a, b))
        assert sol.status == OPTIMAL
        assert sol.y[0] == pytest.approx(b * b / a, abs=1e-6)


def test_vector_schur_family():
    # minimize t subject to [[S, c], [c', t]] >= 0 -> c' S^-1 c
    rng = np.random.default_rng(4)
    for _ in range(10):
        g = rng.normal(size=(3, 3))
        s = g @ g.T + 0.5 * np.eye(3)
        c = rng.normal(size=3)
        f0 = np.zeros((4, 4))
        f0[:3, :3], f0[:3, 3], f0[3, :3] = s, c, c
        f1 = np.zeros((4, 4))
        f1[3, 3] = 1.0
        sol = solve(SdpProblem(1, [1.0], [LmiBlock(f0, [(0, f1)])]))
        assert sol.status == OPTIMAL
        assert sol.y[0] == pytest.approx(c @ np.linalg.solve(s, c), rel=1e-6, abs=1e-6)


def test_infeasible_detected():
    prob = SdpProblem(1, [1.0], [LmiBlock(np.array([[-3.0]]), [(0, np.array([[1.0]]))]),
                                 LmiBlock(np.array([[1.0]]), [(0, np.array([[-1.0]]))])])
    sol = solve(prob)
    assert sol.status == INFEASIBLE
    assert sol.certificate is not None


def test_unbounded_detected():
    prob = SdpProblem(1, [-1.0], [LmiBlock(np.array([[0.0]]), [(0, np.array([[1.0]]))])])
    sol = solve(prob)
    assert sol.status == UNBOUNDED
    assert sol.certificate is not None


def test_iteration_cap():
    sol = solve(random_bounded_problem(np.random.default_rng(0)), max_iterations=2)
    assert sol.status == MAX_ITERATIONS


def test_random_problems_against_external_solver():
    rng = np.random.default_rng(5)
    for _ in range(8):
        prob = random_bounded_problem(rng)
        sol = solve(prob)
        assert sol.status == OPTIMAL
        ref, _ = cvxpy_solve(prob)
        assert sol.objective_value == pytest.approx(ref, rel=1e-5, abs=1e-6)
        feas = check_feasibility(prob, sol.y)
        assert feas.ok()
        assert sol.duality_gap <= 1e-8
        # weak duality on every recorded iterate
        for row in sol.history:
            if "primal" in row and "dual" in row:
                assert row["primal"] >= row["dual"] - 1e-8 * (1 + abs(row["primal"]))


def test_deterministic():
    prob = random_bounded_problem(np.random.default_rng(6))
    a, b = solve(prob), solve(prob)
    assert np.array_equal(a.y, b.y) and a.iterations == b.iterations
    assert a.history == b.history


def test_problem_validation():
    with pytest.raises(ValueError):
        SdpProblem(2, [1.0], [])
    with pytest.raises(ValueError):
        SdpProblem(1, [1.0], [LmiBlock(np.eye(2), [(0, np.array([[0, 1.0], [0, 0]]))])])
    with pytest.raises(ValueError):
        SdpProblem(1, [1.0], [LmiBlock(np.eye(2), [(3, np.eye(2))])])
    with pytest.raises(ValueError):
        solve(scalar_problem(1.0), tolerance=0)
    with pytest.raises(ValueError):
        check_feasibility(scalar_problem(1.0), [1.0, 2.0])


def lyapunov_bound(sys, alpha):
    """Smallest ``C Q C'`` with ``(A + a/2) Q + Q (A + a/2)' + B B' / a = 0``: the degree-1 optimum in closed form."""
    shifted = sys.a + 0.5 * alpha * np.eye(sys.n)
    q = scipy.linalg.solve_continuous_lyapunov(shifted, -sys.b @ sys.b.T / alpha)
    return float((sys.c @ q @ sys.c.T)[0, 0])


def test_degree_one_scalar_example():
    sys = LtiSystem([[-1.0]], [[1.0]], [[1.0]])
    sdp = build_sdp_d1(sys, 1.0)
    sol = solve(sdp.problem)
    assert sol.status == OPTIMAL
    assert sdp.reduced_p(sol.y)[0, 0] == pytest.approx(1.0, abs=1e-6)
    assert np.sqrt(sdp.output_gain(sol.y)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("frac", [0.1, 0.3, 0.5, 0.8])
def test_degree_one_sdp_matches_lyapunov_route(frac):
    sys = system("high_damping")
    alpha = frac * sys.kappa
    sdp = build_sdp_d1(sys, alpha)
    sol = solve(sdp.problem)
    assert sol.status == OPTIMAL
    assert sdp.output_gain(sol.y) == pytest.approx(lyapunov_bound(sys, alpha), rel=1e-6)


def test_degree_one_rejects_alpha_out_of_range():
    sys = system("high_damping")
    for alpha in (0.0, sys.kappa, 2 * sys.kappa):
        with pytest.raises(ValueError):
            build_sdp_d1(sys, alpha)
