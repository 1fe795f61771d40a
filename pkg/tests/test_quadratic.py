import numpy as np
import pytest
from scipy.optimize import minimize

from oracles import mean_ball_max
from wdrro import (
    EmpiricalDataset,
    InvalidArgument,
    QuadraticLoss,
    UnsupportedConfiguration,
    WassersteinBall,
    quadratic_drro,
    quadratic_regret,
    sensitivity_rhs,
)
from wdrro.quadratic import mean_shift_regret


def _random_loss(rng, d, n):
    A = rng.normal(size=(d, d))
    R = rng.normal(size=(n, n))
    return QuadraticLoss(A @ A.T + 0.5 * np.eye(d), rng.normal(size=(n, d)), R + R.T,
                         rng.normal(size=d), rng.normal(size=n))


def test_loss_validation():
    with pytest.raises(InvalidArgument):
        QuadraticLoss([[1.0, 0.0], [0.0, -1.0]], np.zeros((1, 2)), [[0.0]], [0, 0], [0])
    with pytest.raises(InvalidArgument):
        QuadraticLoss([[1.0, 0.5], [0.4, 1.0]], np.zeros((1, 2)), [[0.0]], [0, 0], [0])
    with pytest.raises(InvalidArgument):
        QuadraticLoss([[1.0]], np.zeros((2, 2)), [[0.0]], [0], [0])


def test_squared_error_example():
    loss = QuadraticLoss([[1.0]], [[-1.0]], [[1.0]], [0.0], [0.0])
    X = np.array([[1.0], [2.0], [6.0]])
    assert np.allclose(loss.evaluate([2.5], X), (2.5 - X[:, 0]) ** 2)
    sol = quadratic_drro(loss, X.mean(axis=0))
    assert sol.theta_star[0] == pytest.approx(3.0)
    assert sol.lam_max == pytest.approx(1.0)
    assert quadratic_regret(0.0, sol)[0] == 0.0
    assert quadratic_regret(2.0, sol)[0] == pytest.approx(4.0)


def test_decoupled_decision_has_no_regret():
    rng = np.random.default_rng(0)
    loss = _random_loss(rng, 2, 3)
    loss = QuadraticLoss(loss.Q, np.zeros((3, 2)), loss.R, loss.q, loss.r)
    sol = quadratic_drro(loss, rng.normal(size=3))
    for delta in (0.5, 1.0, 5.0):
        assert sol.regret(delta) == 0.0


def test_closed_form_matches_numeric_erm():
    rng = np.random.default_rng(1)
    loss = _random_loss(rng, 2, 3)
    X = rng.normal(size=(50, 3))
    sol = quadratic_drro(loss, X.mean(axis=0), np.cov(X.T, bias=True))
    res = minimize(lambda th: loss.evaluate(th, X).mean(), np.zeros(2), method="BFGS",
                   options=dict(gtol=1e-11))
    assert np.allclose(sol.theta_star, res.x, atol=1e-6)
    assert np.linalg.norm(sol.v_max) == pytest.approx(1.0)


def test_grad_x_matches_finite_differences():
    rng = np.random.default_rng(2)
    loss = _random_loss(rng, 2, 3)
    theta, x = rng.normal(size=2), rng.normal(size=3)
    eps = 1e-6
    fd = [(loss.evaluate(theta, x + eps * e)[0] - loss.evaluate(theta, x - eps * e)[0]) / (2 * eps)
          for e in np.eye(3)]
    assert np.allclose(loss.grad_x(theta, x)[0], fd, atol=1e-6)


def test_mean_shift_regret_is_erm_gap():
    rng = np.random.default_rng(3)
    loss = _random_loss(rng, 2, 2)
    mu = rng.normal(size=2)
    theta = rng.normal(size=2)
    best = minimize(lambda b: _point_loss(loss, b, mu),
                    np.zeros(2), method="BFGS", options=dict(gtol=1e-12)).fun
    assert mean_shift_regret(theta, mu, loss) == pytest.approx(_point_loss(loss, theta, mu) - best, abs=1e-8)


def _point_loss(loss, theta, mu):
    # the mean part of E_mu[l(theta, X)]: the x'Rx term does not depend on theta
    return float(theta @ loss.Q @ theta + 2 * mu @ loss.S @ theta + 2 * theta @ loss.q)


@pytest.mark.parametrize("seed,d,n", [(4, 1, 1), (5, 2, 2), (6, 3, 2)])
def test_regret_matches_mean_ball_grid(seed, d, n):
    rng = np.random.default_rng(seed)
    loss = _random_loss(rng, d, n)
    sol = quadratic_drro(loss, rng.normal(size=n))
    for delta in (0.5, 1.0, 2.0):
        oracle = mean_ball_max(lambda mu: mean_shift_regret(sol.theta_star, mu, loss), sol.mu_hat, delta)
        assert sol.regret(delta) == pytest.approx(oracle, abs=1e-5 * (1 + oracle))


def test_worst_case_mean_symmetry():
    rng = np.random.default_rng(7)
    loss = _random_loss(rng, 2, 3)
    sol = quadratic_drro(loss, rng.normal(size=3))
    value, (up, down) = quadratic_regret(1.5, sol)
    f_up = mean_shift_regret(sol.theta_star, up, loss)
    f_down = mean_shift_regret(sol.theta_star, down, loss)
    assert f_up == pytest.approx(f_down, abs=1e-8)
    assert f_up == pytest.approx(value, abs=1e-8)


def test_repeated_top_eigenvalue_is_deterministic():
    loss = QuadraticLoss(np.eye(2), np.eye(2), np.zeros((2, 2)), [0, 0], [0, 0])
    sol = quadratic_drro(loss, [0.0, 0.0])
    assert np.allclose(sol.v_max, [1.0, 0.0])


def test_sensitivity_examples():
    rng = np.random.default_rng(8)
    loss = _random_loss(rng, 2, 2)
    data = EmpiricalDataset(rng.normal(size=(10, 2)))
    ball = WassersteinBall(1.0, 2)
    th = rng.normal(size=2)
    assert sensitivity_rhs(loss.grad_x, [th], [th], data, ball) == 0.0
    # gradients differ by the constant 2 S (theta - beta)
    beta = th + np.array([1.0, 0.0])
    gap = 2 * loss.S @ (th - beta)
    assert sensitivity_rhs(loss.grad_x, [th], [th, beta], data, ball) == pytest.approx(np.linalg.norm(gap))
    assert sensitivity_rhs(loss.grad_x, [th], [beta], data, WassersteinBall(1.0, 2, "L1")) == \
        pytest.approx(np.abs(gap).max())
    assert sensitivity_rhs(loss.grad_x, [th, beta], [th, beta], data, ball) == pytest.approx(np.linalg.norm(gap))
    with pytest.raises(UnsupportedConfiguration):
        sensitivity_rhs(loss.grad_x, [th], [th], data, WassersteinBall(1.0, 1))
    with pytest.raises(InvalidArgument):
        sensitivity_rhs(loss.grad_x, [], [th], data, ball)


def test_quadratic_regret_has_zero_first_order_sensitivity():
    rng = np.random.default_rng(9)
    sol = quadratic_drro(_random_loss(rng, 2, 2), rng.normal(size=2))
    ratios = [sol.regret(d) / d for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= 1e-3 * max(1.0, sol.lam_max)


def test_invalid_radius():
    sol = quadratic_drro(QuadraticLoss([[1.0]], [[1.0]], [[0.0]], [0.0], [0.0]), [0.0])
    with pytest.raises(InvalidArgument):
        quadratic_regret(-1.0, sol)
