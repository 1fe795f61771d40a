"""Closed-form regret oracles for convex quadratic losses and the small-radius
sensitivity of the regret.

The loss is
    l(theta, x) = theta'Q theta + 2 x'S theta + x'R x + 2 theta'q + 2 x'r
with Q positive definite. Under a 2-norm Wasserstein ball without support
restrictions only the mean of the adversarial distribution matters, the
empirical risk minimizer is regret optimal for every radius and its regret is
delta^2 times the top eigenvalue of S Q^-1 S'.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import InvalidArgument, UnsupportedConfiguration
from .types import EmpiricalDataset, WassersteinBall, norm_rows


@dataclass(frozen=True)
class QuadraticLoss:
    """Blocks of the quadratic form; ``S`` is n x d (it couples x to theta)."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        d, n = Q.shape[0], R.shape[0]
        if Q.shape != (d, d) or R.shape != (n, n):
            raise InvalidArgument("Q and R must be square")
        if S.shape != (n, d) or q.shape != (d,) or r.shape != (n,):
            raise InvalidArgument("block shapes are inconsistent")
        for name, M in (("Q", Q), ("R", R)):
            if not np.allclose(M, M.T, atol=1e-10, rtol=0):
                raise InvalidArgument(f"{name} must be symmetric")
        try:
            np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise InvalidArgument("Q must be positive definite") from exc
        for name, M in (("Q", Q), ("S", S), ("R", R), ("q", q), ("r", r)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def d(self) -> int:
        return self.Q.shape[0]

    @property
    def n(self) -> int:
        return self.R.shape[0]

    def evaluate(self, theta, X) -> np.ndarray:
        """Loss at each row of X."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return (theta @ self.Q @ theta + 2.0 * X @ (self.S @ theta)
                + np.einsum("ij,jk,ik->i", X, self.R, X) + 2.0 * theta @ self.q + 2.0 * X @ self.r)

    def grad_x(self, theta, X) -> np.ndarray:
        """x-gradient 2(S theta + R x + r) at each row of X."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return 2.0 * ((self.S @ theta)[None, :] + X @ self.R + self.r[None, :])


@dataclass(frozen=True)
class QuadraticSolution:
    theta_star: np.ndarray
    lam_max: float
    v_max: np.ndarray
    mu_hat: np.ndarray
    sigma_hat: np.ndarray

    def regret(self, delta: float) -> float:
        return quadratic_regret(delta, self)[0]


def _top_eigvec(M: np.ndarray, tol: float = 1e-10):
    vals, vecs = np.linalg.eigh(M)
    lam = float(vals[-1])
    top = vecs[:, vals >= lam - tol * max(1.0, abs(lam))]
    if top.shape[1] == 1:
        v = top[:, 0]
        # sign convention: first nonzero entry positive
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if nz.size and v[nz[0]] < 0:
            v = -v
        return lam, v
    # repeated top eigenvalue: pick the unit vector in the eigenspace that is
    # lexicographically largest, i.e. project the coordinate axes in order
    P = top @ top.T
    for j in range(M.shape[0]):
        v = P[:, j]
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            return lam, v / nv
    return lam, top[:, 0]


def quadratic_drro(loss: QuadraticLoss, mu_hat, sigma_hat=None) -> QuadraticSolution:
    """Regret-optimal decision and regret coefficient for a quadratic loss."""
    mu_hat = np.atleast_1d(np.asarray(mu_hat, dtype=float))
    if mu_hat.shape != (loss.n,):
        raise InvalidArgument("mu_hat has the wrong dimension")
    sigma_hat = np.zeros((loss.n, loss.n)) if sigma_hat is None else np.atleast_2d(
        np.asarray(sigma_hat, dtype=float))
    chol = linalg.cho_factor(loss.Q)
    theta = -linalg.cho_solve(chol, loss.S.T @ mu_hat + loss.q)
    M = loss.S @ linalg.cho_solve(chol, loss.S.T)
    M = 0.5 * (M + M.T)
    lam, v = _top_eigvec(M)
    return QuadraticSolution(theta, max(lam, 0.0), v, mu_hat, sigma_hat)


def quadratic_regret(delta: float, sol: QuadraticSolution):
    """Regret delta^2 * lam_max and the two worst-case means mu_hat +- delta v_max."""
    if delta < 0:
        raise InvalidArgument("delta must be nonnegative")
    shift = delta * sol.v_max
    return delta ** 2 * sol.lam_max, (sol.mu_hat + shift, sol.mu_hat - shift)


def mean_shift_regret(theta, mu, loss: QuadraticLoss) -> float:
    """E_mu[l(theta, X)] - min_beta E_mu[l(beta, X)] for any law with mean ``mu``.

    The covariance and the x-only terms cancel, leaving
    theta'Q theta + 2 theta'c + c'Q^-1 c with c = S'mu + q.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    c = loss.S.T @ np.atleast_1d(np.asarray(mu, dtype=float)) + loss.q
    return float(theta @ loss.Q @ theta + 2.0 * theta @ c + c @ np.linalg.solve(loss.Q, c))


def sensitivity_rhs(grad_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                    theta_candidates: Sequence, beta_candidates: Sequence,
                    data: EmpiricalDataset, ball: WassersteinBall) -> float:
    """min over theta candidates of max over beta candidates of the q-mean of
    ||grad_x l(theta, x_i) - grad_x l(beta, x_i)||_* with q = p / (p - 1).

    ``grad_fn(theta, X)`` returns the N x n matrix of x-gradients.
    """
    if ball.p == 1:
        raise UnsupportedConfiguration("the sensitivity formula needs p > 1")
    thetas = [np.atleast_1d(np.asarray(t, dtype=float)) for t in theta_candidates]
    betas = [np.atleast_1d(np.asarray(b, dtype=float)) for b in beta_candidates]
    if not thetas or not betas:
        raise InvalidArgument("candidate sets must be nonempty")
    X = data.points
    qexp = ball.conjugate_exponent
    grads_b = [np.asarray(grad_fn(b, X), dtype=float) for b in betas]
    best = np.inf
    for t in thetas:
        gt = np.asarray(grad_fn(t, X), dtype=float)
        worst = 0.0
        for gb in grads_b:
            diff = norm_rows(gt - gb, ball.dual_norm)
            if np.isinf(qexp):
                val = float(diff.max())
            else:
                val = float(np.mean(diff ** qexp) ** (1.0 / qexp))
            worst = max(worst, val)
        best = min(best, worst)
    return best
