import numpy as np
import pytest
from hypothesis import given, strategies as st

from wdrro import (
    EmpiricalDataset,
    InvalidArgument,
    MaxAffineLoss,
    NewsvendorInstance,
    Polyhedron,
    WassersteinBall,
    hill_climb,
    regret_eval,
    relax_regret_eval,
    relax_regret_primal,
    solve_drro_newsvendor,
    solve_drro_relaxed,
    solve_erm,
)
from wdrro.regret import bilinear_objective


def _newsvendor(seed, N=12, b=None):
    rng = np.random.default_rng(seed)
    b = float(rng.uniform(0.1, 1.9)) if b is None else b
    return NewsvendorInstance(b, 2.0, np.maximum(rng.normal(10, 3, N), 0))


def _generic(seed, N=8):
    rng = np.random.default_rng(seed)
    loss = MaxAffineLoss(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=3))
    data = EmpiricalDataset(rng.uniform(0, 1, size=(N, 2)))
    return loss, data, Polyhedron.box([-2, -2], [2, 2]), Polyhedron.box([-1, -1], [2, 2])


@pytest.mark.parametrize("p,norm", [(1, "L1"), (2, "L2"), (2, "Linf")])
def test_dual_equals_lifted_primal(p, norm):
    loss, data, box, xi = _generic(1)
    ball = WassersteinBall(0.4, p, norm)
    theta = np.array([0.3, -0.5])
    dual = relax_regret_eval(theta, loss, data, ball, box, xi)
    primal = relax_regret_primal(theta, loss, data, ball, box, xi)
    assert dual == pytest.approx(primal, abs=1e-6 * (1 + abs(dual)))


def test_weak_duality_against_lifted_hill_climb_states():
    loss, data, box, xi = _generic(2)
    ball = WassersteinBall(0.5, 2)
    theta = np.array([0.1, 0.2])
    relax = relax_regret_eval(theta, loss, data, ball, box, xi)
    rng = np.random.default_rng(2)
    for _ in range(4):
        st_ = hill_climb(theta, loss, data, ball, box, xi, beta_init=rng.uniform(-2, 2, 2), max_rounds=3)
        # (gamma, q, z = gamma * beta) is feasible in the lifted primal
        obj, _ = bilinear_objective(theta, st_.beta, st_.gamma, st_.q, loss, data)
        assert obj <= relax + 1e-6


def test_zero_radius_tightness_newsvendor():
    inst = _newsvendor(3, N=20)
    for theta in (7.0, 10.0, 13.0):
        exact = regret_eval([theta], inst.loss, inst.data, WassersteinBall(0.0), inst.decisions,
                            inst.support, mode="hill-climb").value
        relax = relax_regret_eval([theta], inst.loss, inst.data, WassersteinBall(0.0), inst.decisions,
                                  inst.support)
        assert relax == pytest.approx(exact, abs=1e-6)


def test_zero_radius_tightness_generic():
    loss, data, box, xi = _generic(4)
    theta = np.array([0.5, 0.5])
    exact = regret_eval(theta, loss, data, WassersteinBall(0.0), box, xi, mode="hill-climb").value
    assert relax_regret_eval(theta, loss, data, WassersteinBall(0.0), box, xi) == pytest.approx(exact, abs=1e-6)


def test_zero_radius_relaxed_decision_attains_erm():
    inst = _newsvendor(5, N=25)
    theta, sol = solve_drro_relaxed(inst.loss, inst.data, WassersteinBall(0.0), inst.decisions, inst.support)
    assert sol.objective == pytest.approx(0.0, abs=1e-6)
    _, v = solve_erm(inst.loss, inst.data, inst.decisions, return_value=True)
    gap = regret_eval(theta, inst.loss, inst.data, WassersteinBall(0.0), inst.decisions, inst.support,
                      mode="hill-climb").value
    assert gap == pytest.approx(0.0, abs=1e-6)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_monotone_in_radius(d1, d2):
    inst = _newsvendor(6, N=8)
    a, b = sorted((d1, d2))
    ra = relax_regret_eval([10.0], inst.loss, inst.data, WassersteinBall(a, 2), inst.decisions, inst.support)
    rb = relax_regret_eval([10.0], inst.loss, inst.data, WassersteinBall(b, 2), inst.decisions, inst.support)
    assert rb >= ra - 1e-6


@pytest.mark.parametrize("p", [1, 2])
def test_joint_solve_consistency(p):
    inst = _newsvendor(7, N=15)
    ball = WassersteinBall(1.0, p)
    theta, sol = solve_drro_relaxed(inst.loss, inst.data, ball, inst.decisions, inst.support)
    again = relax_regret_eval(theta, inst.loss, inst.data, ball, inst.decisions, inst.support)
    assert again == pytest.approx(sol.objective, abs=1e-6 * (1 + abs(again)))
    assert sol.mu.shape == (15, 2, 2)
    assert np.allclose(sol.mu.sum(axis=2), 1.0, atol=1e-6)


def test_joint_solve_generic_and_multipliers():
    loss, data, box, xi = _generic(8)
    ball = WassersteinBall(0.3, 2)
    theta, sol = solve_drro_relaxed(loss, data, ball, box, xi)
    assert box.contains(theta, 1e-7)
    assert sol.lam >= -1e-8
    assert relax_regret_eval(theta, loss, data, ball, box, xi) == pytest.approx(sol.objective, abs=1e-6)
    # the joint optimum is no worse than the relaxed value at random decisions
    rng = np.random.default_rng(8)
    for th in rng.uniform(-2, 2, (5, 2)):
        assert relax_regret_eval(th, loss, data, ball, box, xi) >= sol.objective - 1e-6


def test_cheap_newsvendor_relaxed_tracks_exact_small_radius():
    rng = np.random.default_rng(9)
    inst = NewsvendorInstance(0.1, 2.0, np.maximum(rng.normal(100, 10, 200), 0))
    for delta in (1.0, 3.0):
        ball = WassersteinBall(delta, 2)
        exact, _ = solve_drro_newsvendor(inst, ball)
        relaxed, _ = solve_drro_relaxed(inst.loss, inst.data, ball, inst.decisions, inst.support)
        assert relaxed[0] == pytest.approx(exact, abs=0.1)


def test_dimension_checks():
    inst = _newsvendor(10)
    with pytest.raises(InvalidArgument):
        relax_regret_eval([1.0], inst.loss, inst.data, WassersteinBall(1.0), Polyhedron.box([0, 0], [1, 1]))
