import numpy as np
import pytest

from wdrro import (
    EmpiricalDataset,
    InvalidArgument,
    MaxAffineLoss,
    NewsvendorInstance,
    Polyhedron,
    UnsupportedConfiguration,
    WassersteinBall,
    ex_post_regret,
    hill_climb,
    regret_composite,
    regret_eval,
    regret_lower_bound_bruteforce,
    regret_newsvendor,
    relax_regret_eval,
    sample_losses,
    solve_drro_exact,
    solve_drro_newsvendor,
    solve_erm,
    worst_case_expectation,
)
from wdrro.regret import default_beta_grid, state_subgradient


def _newsvendor(seed, N=12):
    rng = np.random.default_rng(seed)
    b = float(rng.uniform(0.1, 1.9))
    return NewsvendorInstance(b, 2.0, np.maximum(rng.normal(10, 3, N), 0))


def _erm_gap(loss, theta, data, theta_set):
    _, v = solve_erm(loss, data, theta_set, return_value=True)
    return sample_losses(loss, theta, data).mean() - v


def test_zero_radius_one_round_to_erm_gap():
    inst = _newsvendor(0)
    erm = solve_erm(inst.loss, inst.data, inst.decisions)
    st = hill_climb([8.0], inst.loss, inst.data, WassersteinBall(0.0), inst.decisions, inst.support,
                    beta_init=erm)
    assert st.objective == pytest.approx(_erm_gap(inst.loss, [8.0], inst.data, inst.decisions), abs=1e-7)
    assert st.history[0] == pytest.approx(st.objective, abs=1e-9)


def test_regret_eval_zero_radius():
    rng = np.random.default_rng(1)
    loss = MaxAffineLoss(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), rng.normal(size=3))
    data = EmpiricalDataset(rng.normal(size=(10, 2)))
    box = Polyhedron.box([-2, -2], [2, 2])
    theta = np.array([0.5, -0.3])
    cert = regret_eval(theta, loss, data, WassersteinBall(0.0), box, mode="hill-climb")
    assert cert.value == pytest.approx(_erm_gap(loss, theta, data, box), abs=1e-7)
    assert np.allclose(cert.beta_star, solve_erm(loss, data, box), atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_hill_climb_history_nondecreasing(seed):
    rng = np.random.default_rng(seed)
    loss = MaxAffineLoss(rng.normal(size=(3, 1)), rng.normal(size=(3, 2)), rng.normal(size=3))
    data = EmpiricalDataset(rng.uniform(-1, 1, size=(8, 1)))
    box = Polyhedron.box([-3, -3], [3, 3])
    st = hill_climb(rng.uniform(-1, 1, 2), loss, data, WassersteinBall(0.5, int(seed % 2) + 1), box,
                    Polyhedron.box([-3], [3]), beta_init=rng.uniform(-3, 3, 2))
    assert np.all(np.diff(st.history) >= -1e-9)
    # every state keeps a feasible transport plan
    assert np.allclose(st.gamma.sum(axis=1), 1.0, atol=1e-7)


def test_hill_climb_with_bilinear_terms_and_subgradient():
    """Subgradient with bilinear terms against a finite difference at the fixed comparator."""
    rng = np.random.default_rng(3)
    A, B, D = rng.normal(size=(3, 1)), rng.normal(size=(3, 1)), rng.normal(size=(3, 1))
    loss = MaxAffineLoss(A, B, rng.normal(size=3), D)
    data = EmpiricalDataset(rng.uniform(0, 1, size=(6, 1)))
    box, xi = Polyhedron.box([-2], [2]), Polyhedron.box([-1], [2])
    ball = WassersteinBall(0.3, 2)
    theta = np.array([0.4])
    st = hill_climb(theta, loss, data, ball, box, xi)
    assert np.all(np.diff(st.history) >= -1e-9)
    g = state_subgradient(st, loss, data)

    def h(th):
        return worst_case_expectation(regret_composite(loss, th, st.beta), ball, xi, data).value

    eps = 1e-5
    fd = (h(theta + eps) - h(theta - eps)) / (2 * eps)
    assert g[0] == pytest.approx(fd, abs=1e-4 * (1 + abs(fd)))


def test_relaxation_refuses_bilinear_terms():
    loss = MaxAffineLoss([[1.0]], [[1.0]], [0.0], D=[[1.0]])
    with pytest.raises(UnsupportedConfiguration):
        relax_regret_eval([0.0], loss, EmpiricalDataset([0.0]), WassersteinBall(1.0), Polyhedron.box([-1], [1]))


def test_regret_eval_options():
    inst = _newsvendor(2)
    with pytest.raises(InvalidArgument):
        regret_eval([5.0], inst.loss, inst.data, WassersteinBall(1.0), inst.decisions, mode="global")
    loss3 = MaxAffineLoss(np.zeros((1, 1)), np.zeros((1, 3)), [0.0])
    with pytest.raises(UnsupportedConfiguration):
        default_beta_grid(np.zeros(3), loss3, EmpiricalDataset([0.0]), WassersteinBall(1.0),
                          Polyhedron.box([0, 0, 0], [1, 1, 1]))


def test_regret_eval_never_below_its_starts():
    inst = _newsvendor(4)
    ball = WassersteinBall(1.0, 2)
    beta0 = np.array([14.0])
    warm = hill_climb([9.0], inst.loss, inst.data, ball, inst.decisions, inst.support, beta_init=beta0)
    cert = regret_eval([9.0], inst.loss, inst.data, ball, inst.decisions, inst.support,
                       mode="multistart", k=2, beta_starts=[beta0])
    assert cert.value >= warm.objective - 1e-9


def test_newsvendor_agreement_twenty_instances():
    """Generic evaluation against the specialized one-dimensional solver."""
    worst = 0.0
    for i in range(20):
        inst = _newsvendor(100 + i, N=30)
        ball = WassersteinBall(float(np.random.default_rng(i).uniform(0.2, 2.0)), 1 + i % 2)
        theta = float(np.median(inst.xs)) + (i % 5) - 2
        exact = regret_newsvendor(theta, inst, ball).value
        cert = regret_eval([theta], inst.loss, inst.data, ball, inst.decisions, inst.support,
                           mode="grid-certified", points_per_axis=100, k=2)
        worst = max(worst, abs(cert.value - exact))
    assert worst <= 1e-5


def test_bruteforce_grid_properties():
    inst = _newsvendor(5)
    erm = solve_erm(inst.loss, inst.data, inst.decisions)
    v = regret_lower_bound_bruteforce([9.0], inst.loss, inst.data, WassersteinBall(0.0), [erm], inst.support)
    assert v == pytest.approx(_erm_gap(inst.loss, [9.0], inst.data, inst.decisions), abs=1e-8)
    ball = WassersteinBall(0.8, 2)
    coarse = np.linspace(0, 30, 11)[:, None]
    fine = np.linspace(0, 30, 31)[:, None]  # contains the coarse grid
    assert regret_lower_bound_bruteforce([9.0], inst.loss, inst.data, ball, fine, inst.support) >= \
        regret_lower_bound_bruteforce([9.0], inst.loss, inst.data, ball, coarse, inst.support) - 1e-9
    with pytest.raises(InvalidArgument):
        regret_lower_bound_bruteforce([9.0], inst.loss, inst.data, ball, np.zeros((0, 1)), inst.support)


def test_bruteforce_fine_grid_near_exact():
    inst = _newsvendor(6, N=10)
    ball = WassersteinBall(0.5, 2)
    theta = 10.0
    exact = regret_newsvendor(theta, inst, ball).value
    grid = np.linspace(0, inst.beta_max(theta, ball), 1000)[:, None]
    brute = regret_lower_bound_bruteforce([theta], inst.loss, inst.data, ball, grid, inst.support)
    assert brute <= exact + 1e-7
    assert brute == pytest.approx(exact, abs=1e-3)


def test_ex_post_closed_form():
    b, s = 0.5, 2.0
    inst = NewsvendorInstance(b, s, [7.0])
    r = inst.pointwise_regret_loss
    assert ex_post_regret([7.0], r, inst.data, WassersteinBall(0.0), inst.support) == pytest.approx(0.0, abs=1e-9)
    for theta in (3.0, 11.0):
        expected = max(b * (theta - 7.0), (s - b) * (7.0 - theta))
        assert ex_post_regret([theta], r, inst.data, WassersteinBall(0.0), inst.support) == \
            pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_sandwich(seed):
    inst = _newsvendor(200 + seed, N=10)
    ball = WassersteinBall(float(1 + seed), 1 + seed % 2)
    theta = float(np.median(inst.xs))
    grid = np.linspace(0, inst.beta_max(theta, ball), 200)[:, None]
    lower = regret_lower_bound_bruteforce([theta], inst.loss, inst.data, ball, grid, inst.support)
    relax = relax_regret_eval([theta], inst.loss, inst.data, ball, inst.decisions, inst.support)
    post = ex_post_regret([theta], inst.pointwise_regret_loss, inst.data, ball, inst.support)
    assert lower <= relax + 1e-6
    assert relax <= post + 1e-6


def test_exact_drro_matches_one_dimensional_solver():
    inst = _newsvendor(7, N=15)
    ball = WassersteinBall(0.8, 2)
    theta_1d, cert = solve_drro_newsvendor(inst, ball)
    box = Polyhedron.box([0.0], [inst.xs.max() + 10])
    res = solve_drro_exact(inst.loss, inst.data, ball, box, inst.support, tol=1e-4)
    assert res.value == pytest.approx(cert.value, abs=1e-2)
    assert regret_newsvendor(res.theta[0], inst, ball).value == pytest.approx(cert.value, abs=1e-2)


def test_exact_drro_uses_initial_points():
    inst = _newsvendor(8, N=10)
    ball = WassersteinBall(0.5, 2)
    theta_1d, cert = solve_drro_newsvendor(inst, ball)
    box = Polyhedron.box([0.0], [inst.xs.max() + 10])
    res = solve_drro_exact(inst.loss, inst.data, ball, box, inst.support, tol=1e-2, max_iter=3,
                           initial=[np.array([theta_1d])])
    assert res.value <= cert.value + 1e-6
