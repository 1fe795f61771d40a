"""Loss evaluation, ERM and DRO baselines, and the worst-case expectation engine."""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Optional

import cvxpy as cp
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import _conic
from ._conic import SolverSettings
from .errors import Infeasible, InvalidArgument, InvalidCertificate, NumericalFailure, Unbounded
from .types import (
    CompositeLoss,
    DiscreteDistribution,
    EmpiricalDataset,
    MaxAffineLoss,
    Polyhedron,
    WassersteinBall,
    WorstCaseSolution,
    norm_rows,
)

__all__ = [
    "eval_loss",
    "eval_expected_loss",
    "solve_erm",
    "loss_composite",
    "negated_loss_composite",
    "regret_composite",
    "worst_case_expectation",
    "extract_worst_case_distribution",
    "solve_dro",
    "wasserstein_distance_discrete",
]


def _theta(loss: MaxAffineLoss, theta) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (loss.d,):
        raise InvalidArgument(f"theta must have length {loss.d}")
    return theta


def eval_loss(loss: MaxAffineLoss, theta, x) -> float:
    """Value of the max-affine loss at a single (theta, x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (loss.n,):
        raise InvalidArgument(f"x must have length {loss.n}")
    return float(loss.piece_values(_theta(loss, theta), x[None, :]).max())


def eval_expected_loss(loss: MaxAffineLoss, theta, dist: DiscreteDistribution) -> float:
    vals = loss.piece_values(_theta(loss, theta), dist.atoms).max(axis=1)
    return float(dist.weights @ vals)


def sample_losses(loss: MaxAffineLoss, theta, data: EmpiricalDataset) -> np.ndarray:
    return loss.piece_values(_theta(loss, theta), data.points).max(axis=1)


# ---------------------------------------------------------------------------
# ERM


def _check_set(theta_set: Polyhedron, dim: int, what: str) -> None:
    if theta_set.dim != dim:
        raise InvalidArgument(f"{what} has dimension {theta_set.dim}, expected {dim}")


def solve_erm(loss: MaxAffineLoss, data: EmpiricalDataset, theta_set: Polyhedron,
              return_value: bool = False):
    """Minimize the sample-average loss over a polyhedron.

    Solved as an epigraph LP. Among optimal points the lexicographically
    smallest one is returned (a sequence of tie-breaking LPs).
    """
    if data.n != loss.n:
        raise InvalidArgument("data dimension does not match the loss")
    _check_set(theta_set, loss.d, "theta_set")
    N, K, d = data.N, loss.K, loss.d
    X = data.points
    # rows (i, k): (b_k + d_k * x_i).theta - s_i <= -(a_k.x_i + c_k)
    theta_coef = (loss.B[None, :, :] + loss.D[None, :, :] * X[:, None, :]).reshape(N * K, d) \
        if loss.has_bilinear else np.tile(loss.B, (N, 1))
    rhs = -(X @ loss.A.T + loss.c[None, :]).reshape(N * K)
    s_block = sparse.kron(sparse.eye(N), -np.ones((K, 1)))
    A_ub = sparse.hstack([sparse.csr_matrix(theta_coef), s_block]).tocsr()
    b_ub = rhs
    if theta_set.m:
        A_ub = sparse.vstack([A_ub, sparse.hstack([sparse.csr_matrix(theta_set.M),
                                                   sparse.csr_matrix((theta_set.m, N))])]).tocsr()
        b_ub = np.concatenate([b_ub, theta_set.w])
    cost = np.concatenate([np.zeros(d), np.full(N, 1.0 / N)])
    bounds = [(None, None)] * (d + N)
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    _check_lp(res)
    opt = float(res.fun)
    theta = res.x[:d].copy()

    # lexicographic tie-break over coordinates
    slack = 1e-9 * (1.0 + abs(opt))
    extra_A = [sparse.csr_matrix(cost)]
    extra_b = [opt + slack]
    for j in range(d):
        obj = np.zeros(d + N)
        obj[j] = 1.0
        res_j = linprog(obj, A_ub=sparse.vstack([A_ub] + extra_A).tocsr(),
                        b_ub=np.concatenate([b_ub, extra_b]), bounds=bounds, method="highs")
        if res_j.status != 0:
            break
        theta = res_j.x[:d].copy()
        extra_A.append(sparse.csr_matrix(obj))
        extra_b.append(theta[j] + 1e-9 * (1.0 + abs(theta[j])))
    if theta_set.m:
        theta = _snap_into(theta, theta_set)
    value = float(np.mean(sample_losses(loss, theta, data)))
    return (theta, value) if return_value else theta


def _check_lp(res) -> None:
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status == 3:
        raise Unbounded(res.message)
    if res.status != 0:
        raise NumericalFailure(res.message)


def _snap_into(theta: np.ndarray, poly: Polyhedron) -> np.ndarray:
    """Remove tiny LP infeasibilities for axis-aligned sets."""
    bb = poly.box_bounds()
    if bb is None:
        return theta
    return np.clip(theta, bb[0], bb[1])


# ---------------------------------------------------------------------------
# Composite losses fed to the worst-case engine


def loss_composite(loss: MaxAffineLoss, theta) -> CompositeLoss:
    """x -> loss(theta, x) as a composite with zero subtrahend."""
    theta = _theta(loss, theta)
    return CompositeLoss(loss.x_coefficients(theta), loss.B @ theta + loss.c,
                         np.zeros((0, loss.n)), np.zeros(0))


def negated_loss_composite(loss: MaxAffineLoss, theta) -> CompositeLoss:
    """x -> -loss(theta, x): a single piece minus the max-affine loss."""
    theta = _theta(loss, theta)
    return CompositeLoss(np.zeros((1, loss.n)), np.zeros(1),
                         loss.x_coefficients(theta), loss.B @ theta + loss.c)


def regret_composite(loss: MaxAffineLoss, theta, beta) -> CompositeLoss:
    """x -> loss(theta, x) - loss(beta, x)."""
    theta = _theta(loss, theta)
    beta = _theta(loss, beta)
    return CompositeLoss(loss.x_coefficients(theta), loss.B @ theta + loss.c,
                         loss.x_coefficients(beta), loss.B @ beta + loss.c)


# ---------------------------------------------------------------------------
# Worst-case expectation


def _flat_layout(N: int, K: int):
    """Index helpers for the flattened (i, k) -> i * K + k layout."""
    rows_i = np.repeat(np.arange(N), K)
    rows_k = np.tile(np.arange(K), N)
    return rows_i, rows_k


def _row_sum_matrix(N: int, K: int) -> sparse.csr_matrix:
    return sparse.kron(sparse.eye(N), np.ones((1, K))).tocsr()


def worst_case_expectation(pieces: CompositeLoss, ball: WassersteinBall,
                           xi_set: Optional[Polyhedron], data: EmpiricalDataset,
                           settings: Optional[SolverSettings] = None) -> WorstCaseSolution:
    """Supremum of E[pieces(X)] over the Wasserstein ball around the data.

    Each data point i is split into K sub-masses gamma_ik moved by
    q_ik / gamma_ik; the budget uses the perspective of the transport cost and
    the shared subtrahend is handled through epigraph variables.
    """
    if pieces.n != data.n:
        raise InvalidArgument("composite loss and data dimensions differ")
    xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
    _check_set(xi_set, data.n, "xi_set")
    data.check_support(xi_set, tol=1e-7)
    N, K, n = data.N, pieces.K, data.n
    X = data.points
    top = X @ pieces.alpha.T + pieces.kappa[None, :]          # N x K
    sub = (X @ pieces.G.T + pieces.h[None, :]).max(axis=1)    # N

    if ball.delta == 0.0:
        k_star = np.argmax(top, axis=1)
        gamma = np.zeros((N, K))
        gamma[np.arange(N), k_star] = 1.0
        value = float(np.mean(top[np.arange(N), k_star] - sub))
        return WorstCaseSolution(value, gamma, np.zeros((N, K, n)), np.inf)

    prog = _worst_case_program(pieces, ball, xi_set, data)
    return prog.solve(top, pieces.h, settings)


class _WorstCaseProgram:
    """Compiled worst-case program whose piece offsets are parameters.

    Slopes, data, support and ball are fixed; re-solving for new offsets (new
    decisions theta or comparators beta) skips the cvxpy canonicalization.
    """

    def __init__(self, alpha, G, ball: WassersteinBall, xi_set: Polyhedron, data: EmpiricalDataset):
        N, K, n = data.N, alpha.shape[0], data.n
        X = data.points
        self.N, self.K, self.n = N, K, n
        rows_i, rows_k = _flat_layout(N, K)
        NK = N * K
        self.rows_i, self.rows_k = rows_i, rows_k
        Xrep = X[rows_i]
        self.Xrep_G = Xrep @ G.T                             # NK x M
        gam = cp.Variable(NK, nonneg=True)
        Q = cp.Variable((NK, n))
        cons = [_row_sum_matrix(N, K) @ gam == 1]
        self.top = cp.Parameter(NK)
        objective = (self.top @ gam + cp.sum(cp.multiply(alpha[rows_k], Q))) / N

        self.has_sub = bool(np.any(G))
        if self.has_sub:
            M = G.shape[0]
            t = cp.Variable(NK)
            self.base = cp.Parameter((NK, M))
            gam_col = cp.reshape(gam, (NK, 1), order="C") @ np.ones((1, M))
            t_col = cp.reshape(t, (NK, 1), order="C") @ np.ones((1, M))
            cons.append(t_col >= cp.multiply(self.base, gam_col) + Q @ G.T)
            objective = objective - cp.sum(t) / N

        if xi_set.m:
            P, r = xi_set.M, xi_set.w
            slack = r[None, :] - Xrep @ P.T                 # NK x m1, nonneg on data
            gam_col = cp.reshape(gam, (NK, 1), order="C") @ np.ones((1, xi_set.m))
            cons.append(Q @ P.T <= cp.multiply(slack, gam_col))

        cost = _conic.transport_cost(Q, gam, ball, cons)
        self.budget = cp.sum(cost) / N <= ball.delta ** ball.p
        cons.append(self.budget)
        self.gam, self.Q = gam, Q
        self.prob = cp.Problem(cp.Maximize(objective), cons)

    def solve(self, top, h, settings) -> WorstCaseSolution:
        N, K, n = self.N, self.K, self.n
        self.top.value = np.ascontiguousarray(top[self.rows_i, self.rows_k])
        shift = 0.0
        if self.has_sub:
            self.base.value = self.Xrep_G + h[None, :]
        else:
            shift = float(np.max(h))
        status = _conic.solve(self.prob, settings)
        gamma = np.clip(np.asarray(self.gam.value).reshape(N, K), 0.0, None)
        q = np.asarray(self.Q.value).reshape(N, K, n)
        dual = self.budget.dual_value
        lam = float(dual) if dual is not None else np.nan
        return WorstCaseSolution(float(self.prob.value) - shift, gamma, q, max(lam, 0.0), status)


_PROGRAM_CACHE: "OrderedDict[tuple, _WorstCaseProgram]" = OrderedDict()
_PROGRAM_CACHE_SIZE = 16
_CACHE_LOCK = threading.Lock()


def _worst_case_program(pieces: CompositeLoss, ball: WassersteinBall, xi_set: Polyhedron,
                        data: EmpiricalDataset) -> _WorstCaseProgram:
    key = (data.points.tobytes(), data.points.shape, pieces.alpha.tobytes(), pieces.alpha.shape,
           pieces.G.tobytes(), pieces.G.shape, bool(np.any(pieces.G)),
           ball.delta, ball.p, ball.norm, xi_set.M.tobytes(), xi_set.M.shape, xi_set.w.tobytes(),
           threading.get_ident())
    with _CACHE_LOCK:
        prog = _PROGRAM_CACHE.get(key)
        if prog is not None:
            _PROGRAM_CACHE.move_to_end(key)
            return prog
    prog = _WorstCaseProgram(pieces.alpha, pieces.G, ball, xi_set, data)
    with _CACHE_LOCK:
        _PROGRAM_CACHE[key] = prog
        while len(_PROGRAM_CACHE) > _PROGRAM_CACHE_SIZE:
            _PROGRAM_CACHE.popitem(last=False)
    return prog


def extract_worst_case_distribution(sol: WorstCaseSolution, data: EmpiricalDataset,
                                    xi_set: Optional[Polyhedron] = None,
                                    gamma_tol: float = 1e-9) -> DiscreteDistribution:
    """Turn a (gamma, q) certificate into an explicit discrete distribution.

    Sub-mass gamma_ik / N sits at x_i + q_ik / gamma_ik. Vanishing sub-masses
    carrying a nonzero displacement are recession directions; they are only
    accepted (and dropped) when the support set is unbounded in that direction.
    """
    N = data.N
    gamma = np.asarray(sol.gamma, dtype=float)
    q = np.asarray(sol.q, dtype=float)
    if gamma.shape[0] != N or q.shape[:2] != gamma.shape:
        raise InvalidArgument("certificate does not match the dataset")
    atoms, weights = [], []
    for i in range(N):
        xi = data.points[i]
        for k in range(gamma.shape[1]):
            g = gamma[i, k]
            if g > gamma_tol:
                atoms.append(xi + q[i, k] / g)
                weights.append(g / N)
            elif np.linalg.norm(q[i, k]) > 1e-7:
                bounded = xi_set is not None and not xi_set.in_recession_cone(q[i, k], tol=1e-7)
                if bounded:
                    raise InvalidCertificate(
                        f"zero mass at point {i} with displacement outside the recession cone")
        rest = 1.0 - gamma[i][gamma[i] > gamma_tol].sum()
        if rest > 1e-12:
            atoms.append(xi.copy())
            weights.append(rest / N)
    weights = np.asarray(weights)
    return DiscreteDistribution(np.asarray(atoms), weights / weights.sum())


# ---------------------------------------------------------------------------
# DRO


def solve_dro(loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
              theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None,
              settings: Optional[SolverSettings] = None, return_value: bool = False):
    """Minimize the worst-case expected loss by dualizing the inner supremum."""
    if ball.delta == 0.0:
        return solve_erm(loss, data, theta_set, return_value=return_value)
    if data.n != loss.n:
        raise InvalidArgument("data dimension does not match the loss")
    xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
    _check_set(theta_set, loss.d, "theta_set")
    _check_set(xi_set, data.n, "xi_set")
    data.check_support(xi_set, tol=1e-7)
    N, K, n, d = data.N, loss.K, loss.n, loss.d
    rows_i, rows_k = _flat_layout(N, K)
    NK = N * K
    X = data.points
    Xrep = X[rows_i]

    theta = cp.Variable(d)
    lam = cp.Variable(nonneg=True)
    s = cp.Variable(N)
    cons = []
    if theta_set.m:
        cons.append(theta_set.M @ theta <= theta_set.w)

    select = sparse.csr_matrix((np.ones(NK), (np.arange(NK), rows_k)), shape=(NK, K))
    if loss.has_bilinear:
        slopes = loss.A + cp.multiply(loss.D, np.ones((K, 1)) @ cp.reshape(theta, (1, d), order="C"))
        slope_rep = select @ slopes                                   # NK x n
        lin = cp.sum(cp.multiply(slope_rep, Xrep), axis=1)
    else:
        slope_rep = loss.A[rows_k]
        lin = np.sum(slope_rep * Xrep, axis=1)
    piece = lin + loss.B[rows_k] @ theta + loss.c[rows_k]

    if xi_set.m:
        P, r = xi_set.M, xi_set.w
        zeta = cp.Variable((NK, xi_set.m), nonneg=True)
        piece = piece + cp.sum(cp.multiply(zeta, r[None, :] - Xrep @ P.T), axis=1)
        w_expr = slope_rep - zeta @ P
    else:
        w_expr = slope_rep if isinstance(slope_rep, cp.Expression) else cp.Constant(slope_rep)
    pen = _conic.conjugate_penalty(w_expr, lam, ball, cons)
    spread = sparse.csr_matrix((np.ones(NK), (np.arange(NK), rows_i)), shape=(NK, N))
    cons.append(spread @ s >= piece + pen)
    prob = cp.Problem(cp.Minimize(lam * ball.delta ** ball.p + cp.sum(s) / N), cons)
    _conic.solve(prob, settings)
    th = np.asarray(theta.value, dtype=float)
    if theta_set.m:
        th = _snap_into(th, theta_set)
    return (th, float(prob.value)) if return_value else th


# ---------------------------------------------------------------------------
# Discrete Wasserstein distance


def wasserstein_distance_discrete(P: DiscreteDistribution, Q: DiscreteDistribution,
                                  p: float = 2.0, norm: str = "L2",
                                  method: str = "auto") -> float:
    """Exact type-p Wasserstein distance between two discrete distributions.

    ``method="lp"`` solves the transport LP; ``"quantile"`` uses the monotone
    coupling, valid on the real line. ``"auto"`` picks the latter in 1-D.
    """
    if P.n != Q.n:
        raise InvalidArgument("distributions live in different dimensions")
    if method == "auto":
        method = "quantile" if P.n == 1 else "lp"
    if method == "quantile":
        if P.n != 1:
            raise InvalidArgument("quantile coupling needs one-dimensional atoms")
        return _wasserstein_1d(P.atoms[:, 0], P.weights, Q.atoms[:, 0], Q.weights, p)
    if method != "lp":
        raise InvalidArgument(f"unknown method {method!r}")
    a, b = P.weights, Q.weights
    I, J = a.size, b.size
    diff = P.atoms[:, None, :] - Q.atoms[None, :, :]
    cost = norm_rows(diff.reshape(I * J, -1), norm) ** p
    A_eq = sparse.vstack([sparse.kron(sparse.eye(I), np.ones((1, J))),
                          sparse.kron(np.ones((1, I)), sparse.eye(J))]).tocsr()
    b_eq = np.concatenate([a, b * (a.sum() / b.sum())])
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        # balanced transport is always feasible; presolve can misreport this on tiny masses
        res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                      options={"presolve": False})
    _check_lp(res)
    return float(max(res.fun, 0.0) ** (1.0 / p))


def _wasserstein_1d(x, wx, y, wy, p: float) -> float:
    ox, oy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    x, wx, y, wy = x[ox], wx[ox], y[oy], wy[oy]
    cx = np.cumsum(wx) / wx.sum()
    cy = np.cumsum(wy) / wy.sum()
    levels = np.union1d(cx, cy)
    levels = levels[levels > 0]
    lo = np.concatenate([[0.0], levels[:-1]])
    mids = 0.5 * (lo + levels)
    ix = np.minimum(np.searchsorted(cx, mids), x.size - 1)
    iy = np.minimum(np.searchsorted(cy, mids), y.size - 1)
    total = np.sum((levels - lo) * np.abs(x[ix] - y[iy]) ** p)
    return float(total ** (1.0 / p))
