"""Convex relaxation of the regret program for losses without bilinear terms.

Replacing the products gamma_ik * beta by free variables z_ik constrained by
sum_k z_ik = beta and z_ik / gamma_ik in Theta yields a convex program whose
value upper-bounds the regret. Its dual is a minimization in which the
decision theta can be added as a variable, so a relaxed regret-optimal
decision comes out of a single conic solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import cvxpy as cp
import numpy as np
from scipy import sparse

from . import _conic
from ._conic import SolverSettings
from .core import _flat_layout, _row_sum_matrix
from .errors import InvalidArgument, UnsupportedConfiguration
from .types import EmpiricalDataset, MaxAffineLoss, Polyhedron, WassersteinBall


@dataclass(frozen=True)
class RelaxationSolution:
    """Optimal dual variables of the relaxation.

    Shapes: ``s`` (N,), ``mu`` (N, K, K) with mu[i, k] on the simplex, ``tau``
    (N, d), ``theta_mult`` (N, K, m2) multipliers of the decision set,
    ``u`` (N, K, n) the induced support-function arguments P^T zeta_ik,
    ``zeta`` (N, K, m1) and ``eta`` (m2,).
    """

    theta: np.ndarray
    lam: float
    s: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    theta_mult: np.ndarray
    u: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    objective: float
    status: str = "optimal"


def _validate(loss, data, theta_set, xi_set):
    if loss.has_bilinear:
        raise UnsupportedConfiguration("the relaxation is only available without bilinear terms")
    if data.n != loss.n:
        raise InvalidArgument("data dimension does not match the loss")
    if theta_set.dim != loss.d:
        raise InvalidArgument("theta_set dimension does not match the loss")
    xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
    if xi_set.dim != data.n:
        raise InvalidArgument("xi_set dimension does not match the data")
    data.check_support(xi_set, tol=1e-7)
    return xi_set


def _build(theta_fixed, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
           theta_set: Polyhedron, xi_set: Polyhedron):
    N, K, n, d = data.N, loss.K, loss.n, loss.d
    X = data.points
    rows_i, rows_k = _flat_layout(N, K)
    NK = N * K
    A, B, c = loss.A, loss.B, loss.c
    spread = sparse.csr_matrix((np.ones(NK), (np.arange(NK), rows_i)), shape=(NK, N))

    v = {}
    cons = []
    if theta_fixed is None:
        theta = cp.Variable(d)
        v["theta"] = theta
        if theta_set.m:
            cons.append(theta_set.M @ theta <= theta_set.w)
        own_theta = B[rows_k] @ theta
    else:
        theta = np.asarray(theta_fixed, dtype=float)
        own_theta = B[rows_k] @ theta
    s = cp.Variable(N)
    mu = cp.Variable((NK, K), nonneg=True)
    tau = cp.Variable((N, d))
    v.update(s=s, mu=mu, tau=tau)
    cons.append(cp.sum(mu, axis=1) == 1)

    # support function of the decision set, dualized through the rows of M
    mu_B = mu @ B                                                   # NK x d
    tau_rep = spread @ tau
    objective_extra = 0
    theta_term = 0
    if theta_set.m:
        rho = cp.Variable((NK, theta_set.m), nonneg=True)
        eta = cp.Variable(theta_set.m, nonneg=True)
        v.update(rho=rho, eta=eta)
        cons.append(rho @ theta_set.M + mu_B == tau_rep)
        cons.append(theta_set.M.T @ eta == -cp.sum(tau, axis=0) / N)
        objective_extra = theta_set.w @ eta
        theta_term = rho @ theta_set.w
    else:
        cons.append(mu_B == tau_rep)
        cons.append(cp.sum(tau, axis=0) == 0)

    data_vals = X @ A.T + c[None, :]                                # N x K
    lhs = data_vals[rows_i, rows_k] + own_theta \
        - cp.sum(cp.multiply(mu, data_vals[rows_i]), axis=1) + theta_term
    resid = A[rows_k] - mu @ A                                       # NK x n
    if xi_set.m:
        zeta = cp.Variable((NK, xi_set.m), nonneg=True)
        v["zeta"] = zeta
        lhs = lhs + cp.sum(cp.multiply(zeta, xi_set.w[None, :] - X[rows_i] @ xi_set.M.T), axis=1)
        resid = resid - zeta @ xi_set.M

    if ball.delta > 0:
        lam = cp.Variable(nonneg=True)
        v["lam"] = lam
        lhs = lhs + _conic.conjugate_penalty(resid, lam, ball, cons)
        radius_term = lam * ball.delta ** ball.p
    else:
        # zero radius: the multiplier can grow without bound and the penalty vanishes
        radius_term = 0
    cons.append(spread @ s >= lhs)
    objective = radius_term + cp.sum(s) / N + objective_extra
    return cp.Problem(cp.Minimize(objective), cons), v


def _solution(prob, v, theta_fixed, loss, data, theta_set, xi_set) -> RelaxationSolution:
    N, K, n, d = data.N, loss.K, loss.n, loss.d
    theta = np.asarray(v["theta"].value if "theta" in v else theta_fixed, dtype=float)
    zeta = v["zeta"].value.reshape(N, K, -1) if "zeta" in v else np.zeros((N, K, 0))
    u = np.einsum("ikm,mn->ikn", zeta, xi_set.M) if xi_set.m else np.zeros((N, K, n))
    rho = v["rho"].value.reshape(N, K, -1) if "rho" in v else np.zeros((N, K, 0))
    eta = np.asarray(v["eta"].value) if "eta" in v else np.zeros(0)
    lam = float(v["lam"].value) if "lam" in v else np.inf
    return RelaxationSolution(
        theta=theta, lam=lam, s=np.asarray(v["s"].value), mu=v["mu"].value.reshape(N, K, K),
        tau=np.asarray(v["tau"].value), theta_mult=rho, u=u, zeta=zeta, eta=eta,
        objective=float(prob.value))


def relax_regret_eval(theta, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                      theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None,
                      settings: Optional[SolverSettings] = None,
                      return_solution: bool = False):
    """Upper bound on the regret of a fixed decision from the relaxation's dual."""
    xi_set = _validate(loss, data, theta_set, xi_set)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    prob, v = _build(theta, loss, data, ball, theta_set, xi_set)
    _conic.solve(prob, settings)
    if return_solution:
        return _solution(prob, v, theta, loss, data, theta_set, xi_set)
    return float(prob.value)


def solve_drro_relaxed(loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                       theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None,
                       settings: Optional[SolverSettings] = None):
    """Decision minimizing the relaxed regret; returns (theta, RelaxationSolution)."""
    xi_set = _validate(loss, data, theta_set, xi_set)
    prob, v = _build(None, loss, data, ball, theta_set, xi_set)
    _conic.solve(prob, settings)
    sol = _solution(prob, v, None, loss, data, theta_set, xi_set)
    theta = sol.theta
    bb = theta_set.box_bounds()
    if bb is not None:
        theta = np.clip(theta, bb[0], bb[1])
    return theta, sol


def relax_regret_primal(theta, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                        theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None,
                        settings: Optional[SolverSettings] = None, return_beta: bool = False):
    """The relaxation in its lifted primal (maximization) form.

    Products gamma_ik * beta become variables z_ik with sum_k z_ik = beta and
    M z_ik <= gamma_ik w. By strong duality the value equals
    ``relax_regret_eval``; it is solved here independently as a check.
    With ``return_beta`` the relaxed comparator is returned as well, a good
    starting point for hill climbing.
    """
    xi_set = _validate(loss, data, theta_set, xi_set)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    N, K, n, d = data.N, loss.K, loss.n, loss.d
    X = data.points
    rows_i, rows_k = _flat_layout(N, K)
    NK = N * K
    Xrep = X[rows_i]
    beta = cp.Variable(d)
    gam = cp.Variable(NK, nonneg=True)
    Q = cp.Variable((NK, n))
    Z = cp.Variable((NK, d))
    t = cp.Variable(NK)
    gsum = _row_sum_matrix(N, K)
    cons = [gsum @ gam == 1, gsum @ Z == np.ones((N, 1)) @ cp.reshape(beta, (1, d), order="C")]
    if theta_set.m:
        cons.append(theta_set.M @ beta <= theta_set.w)
        cons.append(Z @ theta_set.M.T <= cp.reshape(gam, (NK, 1), order="C") @ theta_set.w[None, :])
    if xi_set.m:
        slack = xi_set.w[None, :] - Xrep @ xi_set.M.T
        cons.append(Q @ xi_set.M.T <= cp.multiply(slack, cp.reshape(gam, (NK, 1), order="C")
                                                  @ np.ones((1, xi_set.m))))
    if ball.delta > 0:
        cost = _conic.transport_cost(Q, gam, ball, cons)
        cons.append(cp.sum(cost) / N <= ball.delta ** ball.p)
    else:
        cons.append(Q == 0)
    base = Xrep @ loss.A.T + loss.c[None, :]                          # NK x K
    cons.append(cp.reshape(t, (NK, 1), order="C") @ np.ones((1, K))
                >= cp.multiply(base, cp.reshape(gam, (NK, 1), order="C") @ np.ones((1, K)))
                + Z @ loss.B.T + Q @ loss.A.T)
    own = (base[np.arange(NK), rows_k] + loss.B[rows_k] @ theta)
    objective = (own @ gam + cp.sum(cp.multiply(loss.A[rows_k], Q)) - cp.sum(t)) / N
    prob = cp.Problem(cp.Maximize(objective), cons)
    _conic.solve(prob, settings)
    if return_beta:
        return float(prob.value), np.asarray(beta.value, dtype=float)
    return float(prob.value)
