import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wdrro import (
    EmpiricalDataset,
    InvalidArgument,
    NewsvendorInstance,
    Polyhedron,
    WassersteinBall,
    h_eval,
    regret_composite,
    regret_lower_bound_bruteforce,
    regret_newsvendor,
    sample_losses,
    solve_drro_newsvendor,
    solve_erm,
    wasserstein_distance_discrete,
    worst_case_expectation,
    worst_case_pair,
)


def _instance(seed, N=15, b=None, s=2.0):
    rng = np.random.default_rng(seed)
    b = float(rng.uniform(0.1, 1.9)) if b is None else b
    return NewsvendorInstance(b, s, np.maximum(rng.normal(10, 3, N), 0))


def test_instance_validation():
    with pytest.raises(InvalidArgument):
        NewsvendorInstance(2.0, 1.0, [1.0])
    with pytest.raises(InvalidArgument):
        NewsvendorInstance(1.0, 2.0, [-1.0])
    inst = NewsvendorInstance(1.0, 2.0, [3.0, 1.0, 2.0])
    assert list(inst.xs) == [1.0, 2.0, 3.0]


def test_h_equal_decisions_is_zero():
    inst = _instance(0)
    for delta in (0.0, 0.5, 3.0):
        assert h_eval(7.0, 7.0, inst, WassersteinBall(delta, 2)) == pytest.approx(0.0, abs=1e-12)


def test_h_single_point_greedy():
    inst = NewsvendorInstance(0.0, 1.0, [0.0])
    assert h_eval(1.0, 0.0, inst, WassersteinBall(0.5, 1, "L1")) == pytest.approx(0.5)


def test_h_zero_radius_is_sample_average():
    inst = _instance(1)
    theta, beta = 9.0, 12.0
    loss = inst.loss
    expected = np.mean(sample_losses(loss, [theta], inst.data) - sample_losses(loss, [beta], inst.data))
    assert h_eval(beta, theta, inst, WassersteinBall(0.0, 2)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("p", [1, 2])
def test_h_matches_generic_worst_case(p):
    """The specialized kernel against the generic conic program on 50 random instances."""
    rng = np.random.default_rng(p)
    for i in range(50):
        inst = _instance(100 + i, N=8)
        theta, beta = rng.uniform(0, 20, 2)
        ball = WassersteinBall(float(rng.uniform(0, 2)), p)
        generic = worst_case_expectation(regret_composite(inst.loss, [theta], [beta]), ball,
                                         inst.support, inst.data).value
        assert h_eval(beta, theta, inst, ball) == pytest.approx(generic, abs=1e-7 * (1 + abs(generic)))


def test_regret_zero_radius_at_erm():
    inst = _instance(2, N=40)
    erm = solve_erm(inst.loss, inst.data, inst.decisions)[0]
    assert regret_newsvendor(erm, inst, WassersteinBall(0.0, 2)).value == pytest.approx(0.0, abs=1e-7)


@pytest.mark.parametrize("p", [1, 2])
def test_regret_matches_beta_grid(p):
    inst = _instance(3, N=10)
    ball = WassersteinBall(0.8, p)
    theta = 10.5
    cert = regret_newsvendor(theta, inst, ball)
    grid = np.linspace(0, inst.beta_max(theta, ball), 400)
    brute = regret_lower_bound_bruteforce([theta], inst.loss, inst.data, ball, grid[:, None], inst.support)
    assert cert.value >= brute - 1e-6
    assert cert.value == pytest.approx(brute, abs=max(1e-4, 1e-4 * abs(brute)) + _grid_slack(inst, grid))
    assert cert.value == pytest.approx(max(cert.branches["left"][0], cert.branches["right"][0]))


def _grid_slack(inst, grid):
    # h is Lipschitz in beta with constant at most s; half a grid step bounds the discretization error
    return inst.s * (grid[1] - grid[0]) / 2


@given(st.integers(0, 500), st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([1, 2]))
def test_branch_midpoint_concavity(seed, u1, u2, p):
    inst = _instance(seed, N=10)
    ball = WassersteinBall(0.6, p)
    theta = 10.0
    for lo, hi in ((0.0, theta), (theta, inst.beta_max(theta, ball))):
        b1, b2 = lo + u1 * (hi - lo), lo + u2 * (hi - lo)
        mid = h_eval(0.5 * (b1 + b2), theta, inst, ball)
        assert mid >= 0.5 * (h_eval(b1, theta, inst, ball) + h_eval(b2, theta, inst, ball)) - 1e-7


@given(st.integers(0, 500), st.floats(2.0, 18.0), st.floats(2.0, 18.0))
def test_regret_convex_in_decision(seed, t1, t2):
    inst = _instance(seed, N=10)
    ball = WassersteinBall(0.5, 2)
    R = lambda t: regret_newsvendor(t, inst, ball).value  # noqa: E731
    assert R(0.5 * (t1 + t2)) <= 0.5 * (R(t1) + R(t2)) + 1e-6


@given(st.integers(0, 500), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_regret_monotone_in_radius(seed, d1, d2):
    inst = _instance(seed, N=10)
    a, b = sorted((d1, d2))
    assert regret_newsvendor(9.0, inst, WassersteinBall(a, 2)).value <= \
        regret_newsvendor(9.0, inst, WassersteinBall(b, 2)).value + 1e-7


def test_subgradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    inst = _instance(4, N=12)
    ball = WassersteinBall(0.7, 2)
    checked = 0
    for theta in rng.uniform(4, 16, 40):
        eps = 1e-4
        r0 = regret_newsvendor(theta, inst, ball)
        fwd = (regret_newsvendor(theta + eps, inst, ball).value - r0.value) / eps
        bwd = (r0.value - regret_newsvendor(theta - eps, inst, ball).value) / eps
        if abs(fwd - bwd) > 1e-3 * (1 + abs(fwd)):
            continue  # kink: one-sided slopes disagree
        g = float(r0.subgradient[0])
        assert g == pytest.approx(0.5 * (fwd + bwd), abs=max(1e-4, 1e-3 * abs(g)) + 1e-3)
        checked += 1
        if checked == 20:
            break
    assert checked >= 10


def test_subgradient_inequality():
    inst = _instance(5, N=12)
    ball = WassersteinBall(0.7, 1)
    rng = np.random.default_rng(5)
    for theta in rng.uniform(4, 16, 5):
        cert = regret_newsvendor(theta, inst, ball)
        for other in rng.uniform(0, 25, 10):
            r = regret_newsvendor(other, inst, ball).value
            assert r >= cert.value + cert.subgradient[0] * (other - theta) - 1e-5


def test_drro_critical_ratio_half_is_median_for_symmetric_sample():
    rng = np.random.default_rng(6)
    half = np.maximum(rng.normal(100, 10, 100), 0)
    med = 100.0
    inst = NewsvendorInstance(1.0, 2.0, np.concatenate([half, 2 * med - half, [med]]))
    for delta in (0.0, 2.0, 5.0, 10.0):
        theta, _ = solve_drro_newsvendor(inst, WassersteinBall(delta, 2))
        assert theta == pytest.approx(med, abs=1e-5)


def test_drro_zero_radius_attains_erm_objective():
    inst = _instance(7, N=30)
    theta, cert = solve_drro_newsvendor(inst, WassersteinBall(0.0, 2))
    erm, v = solve_erm(inst.loss, inst.data, inst.decisions, return_value=True)
    assert sample_losses(inst.loss, [theta], inst.data).mean() == pytest.approx(v, abs=1e-6)
    assert cert.value == pytest.approx(0.0, abs=1e-6)


def test_drro_minimizes_regret_on_grid():
    inst = _instance(8, N=20)
    ball = WassersteinBall(1.0, 2)
    theta, cert = solve_drro_newsvendor(inst, ball)
    for t in np.linspace(theta - 2, theta + 2, 21):
        assert regret_newsvendor(max(t, 0), inst, ball).value >= cert.value - 1e-6


def test_worst_case_pair_sides_and_radius():
    rng = np.random.default_rng(9)
    inst = NewsvendorInstance(0.1, 2.0, np.maximum(rng.normal(100, 10, 60), 0))
    ball = WassersteinBall(3.0, 2)
    theta, cert = solve_drro_newsvendor(inst, ball, tol=1e-8)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        left, right = worst_case_pair(theta, inst, ball)
    emp = inst.data.as_distribution()
    for dist in (left, right):
        assert wasserstein_distance_discrete(dist, emp, 2, "L2") <= ball.delta + 1e-6
    # mass only moves down (left) or up (right): first-order stochastic dominance
    pts = np.union1d(np.union1d(left.atoms[:, 0], right.atoms[:, 0]), inst.xs)
    emp_cdf, left_cdf, right_cdf = (_cdf(d, pts) for d in (emp, left, right))
    assert np.all(left_cdf >= emp_cdf - 1e-9)
    assert np.all(right_cdf <= emp_cdf + 1e-9)
    lv, rv = cert.branches["left"][0], cert.branches["right"][0]
    assert lv == pytest.approx(rv, rel=1e-5)


def _cdf(dist, pts):
    return np.array([dist.weights[dist.atoms[:, 0] <= t + 1e-12].sum() for t in pts])


def test_worst_case_pair_zero_radius_is_empirical():
    inst = _instance(10, N=10)
    theta, _ = solve_drro_newsvendor(inst, WassersteinBall(0.0, 2))
    for dist in worst_case_pair(theta, inst, WassersteinBall(0.0, 2)):
        assert wasserstein_distance_discrete(dist, inst.data.as_distribution(), 2, "L2") == \
            pytest.approx(0.0, abs=1e-9)


def test_worst_case_pair_warns_off_optimum():
    inst = _instance(11, N=10)
    ball = WassersteinBall(1.0, 2)
    with pytest.warns(RuntimeWarning):
        worst_case_pair(0.5, inst, ball)
