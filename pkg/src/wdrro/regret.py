"""Regret evaluation for general max-affine losses.

The regret R(theta) = sup_beta sup_Q E_Q[l(theta, X) - l(beta, X)] is a
bilinear program in (beta, gamma). ``hill_climb`` alternates between the two
convex subproblems obtained by fixing one block; ``regret_eval`` wraps it with
multistart and optional certification by a brute-force lower bound and the
convex relaxation as upper bound.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import cvxpy as cp
import numpy as np
from scipy import sparse

from . import _conic
from ._conic import SolverSettings
from .core import (
    _flat_layout,
    extract_worst_case_distribution,
    loss_composite,
    regret_composite,
    solve_erm,
    worst_case_expectation,
)
from .errors import InvalidArgument, NumericalFailure, UnsupportedConfiguration
from .optimize import OptimizeResult, OracleResult, cutting_plane, project
from .types import (
    EmpiricalDataset,
    MaxAffineLoss,
    Polyhedron,
    RegretCertificate,
    WassersteinBall,
)

_GAMMA_FLOOR = 1e-9


@dataclass
class BilinearProgramState:
    """Feasible point of the regret program with its exact objective.

    ``gamma`` is N x K, ``q`` N x K x n, ``t`` N x K (epigraph values) and
    ``history`` the best objective reached after each hill-climbing round.
    """

    beta: np.ndarray
    gamma: np.ndarray
    q: np.ndarray
    t: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    rounds: int = 0
    status: str = "local-only"

    @property
    def z(self) -> np.ndarray:
        """Products gamma_ik * beta, the lifted variables of the relaxation."""
        return self.gamma[:, :, None] * self.beta[None, None, :]


# ---------------------------------------------------------------------------
# objective pieces


def _piece_terms(loss: MaxAffineLoss, dec, X, gamma, q):
    """gamma_ik (a_m.x_i + b_m.dec + c_m + (d_m*dec).x_i) + (a_m + d_m*dec).q_ik for all m.

    Returns an N x K x K array indexed (i, k, m).
    """
    slopes = loss.x_coefficients(dec)                       # K x n
    at_data = X @ slopes.T + (loss.B @ dec + loss.c)[None, :]  # N x M
    return gamma[:, :, None] * at_data[:, None, :] + np.einsum("ikn,mn->ikm", q, slopes)


def bilinear_objective(theta, beta, gamma, q, loss: MaxAffineLoss, data: EmpiricalDataset):
    """Exact objective and epigraph values of the regret program."""
    X = data.points
    K = loss.K
    own = _piece_terms(loss, theta, X, gamma, q)[:, np.arange(K), np.arange(K)]
    t = _piece_terms(loss, beta, X, gamma, q).max(axis=2)
    return float(np.sum(own - t) / data.N), t


def state_subgradient(state: BilinearProgramState, loss: MaxAffineLoss, data: EmpiricalDataset):
    """(1/N) sum_ik gamma_ik b_k + d_k * (gamma_ik x_i + q_ik)."""
    g = state.gamma.sum(axis=0) @ loss.B
    if loss.has_bilinear:
        moved = state.gamma[:, :, None] * data.points[:, None, :] + state.q
        g = g + np.einsum("kn,ikn->n", loss.D, moved)
    return g / data.N


# ---------------------------------------------------------------------------
# hill climbing


def _beta_step(theta, gamma, q, loss, data, ball, theta_set, xi_set, settings):
    """Maximize over beta (and q when allowed) with gamma held fixed."""
    N, K, n, d = data.N, loss.K, loss.n, loss.d
    X = data.points
    rows_i, rows_k = _flat_layout(N, K)
    NK = N * K
    g_flat = gamma.reshape(NK)
    beta = cp.Variable(d)
    cons = []
    if theta_set.m:
        cons.append(theta_set.M @ beta <= theta_set.w)
    move_q = not loss.has_bilinear and ball.delta > 0
    active = np.flatnonzero(g_flat > _GAMMA_FLOOR)
    Xrep = X[rows_i]
    if move_q and active.size:
        Qa = cp.Variable((active.size, n))
        pick = sparse.csr_matrix((np.ones(active.size), (active, np.arange(active.size))),
                                 shape=(NK, active.size))
        Q = pick @ Qa
        if xi_set.m:
            slack = xi_set.w[None, :] - Xrep[active] @ xi_set.M.T
            cons.append(Qa @ xi_set.M.T <= slack * g_flat[active][:, None])
        cost = _conic.transport_cost(Qa, g_flat[active], ball, cons)
        cons.append(cp.sum(cost) / N <= ball.delta ** ball.p)
        own = cp.sum(cp.multiply(loss.A[rows_k], Q))
    else:
        Q = q.reshape(NK, n)
        own = float(np.sum(loss.x_coefficients(theta)[rows_k] * Q))
    # epigraph of the subtracted pieces: t_ik >= gamma_ik(a_m.x_i + b_m.beta + c_m) + ...
    t = cp.Variable(NK)
    base = g_flat[:, None] * (Xrep @ loss.A.T + loss.c[None, :])   # NK x K
    t_col = cp.reshape(t, (NK, 1), order="C") @ np.ones((1, K))
    if loss.has_bilinear:
        # beta enters through (b_m + d_m * (gamma x_i + q_ik)) . beta with q fixed
        moved = g_flat[:, None] * Xrep + Q
        coef = g_flat[:, None, None] * loss.B[None, :, :] + moved[:, None, :] * loss.D[None, :, :]
        beta_terms = cp.hstack([cp.reshape(coef[:, m, :] @ beta, (NK, 1), order="C")
                                for m in range(K)])
    else:
        beta_terms = g_flat[:, None] @ cp.reshape(loss.B @ beta, (1, K), order="C")
    cons.append(t_col >= base + beta_terms + Q @ loss.A.T)
    theta_part = float(np.sum(gamma * (X @ loss.x_coefficients(theta).T + (loss.B @ theta + loss.c)[None, :])))
    prob = cp.Problem(cp.Maximize((theta_part + own - cp.sum(t)) / N), cons)
    _conic.solve(prob, settings)
    if move_q and active.size:
        q_new = np.zeros((NK, n))
        q_new[active] = Qa.value
        q_new = q_new.reshape(N, K, n)
    else:
        q_new = q
    return np.asarray(beta.value, dtype=float), q_new


def hill_climb(theta, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
               theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None, beta_init=None,
               max_rounds: int = 50, tol: float = 1e-8, extrapolate: bool = True,
               stall_rounds: int = 5, stall_tol: float = 1e-7,
               settings: Optional[SolverSettings] = None) -> BilinearProgramState:
    """Alternating maximization of the regret program from ``beta_init``.

    Round structure: fix beta and solve the worst-case expectation in
    (gamma, q); then fix gamma and solve for beta (together with q when the
    loss has no bilinear terms, otherwise with q fixed too). With
    ``extrapolate`` the round then tries beta_old + 2^j (beta_new - beta_old)
    for j = 1, 2, ... while the worst-case value keeps increasing; this only
    accepts improvements, so the objective stays nondecreasing. Stops when a
    round improves the objective by less than ``tol``, or when the last
    ``stall_rounds`` rounds together gained less than
    ``stall_tol * (1 + |objective|)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
    if beta_init is None:
        beta = solve_erm(loss, data, theta_set)
    else:
        beta = project(beta_init, theta_set)
    history: list[float] = []
    best = None
    for rnd in range(1, max_rounds + 1):
        sol = worst_case_expectation(regret_composite(loss, theta, beta), ball, xi_set, data, settings)
        gamma, q = sol.gamma, sol.q
        obj1, t1 = bilinear_objective(theta, beta, gamma, q, loss, data)
        cand = BilinearProgramState(beta.copy(), gamma, q, t1, obj1)
        try:
            beta2, q2 = _beta_step(theta, gamma, q, loss, data, ball, theta_set, xi_set, settings)
            beta2 = project(beta2, theta_set) if theta_set.m else beta2
            obj2, t2 = bilinear_objective(theta, beta2, gamma, q2, loss, data)
            if obj2 > obj1:
                cand = BilinearProgramState(beta2, gamma, q2, t2, obj2)
        except NumericalFailure:
            pass
        if extrapolate and not np.array_equal(cand.beta, beta):
            cand = _extrapolate(theta, beta, cand, loss, data, ball, theta_set, xi_set, settings)
        if best is None or cand.objective > best.objective:
            best = cand
        # a re-solve can land a solver tolerance below the incumbent; keep the incumbent
        history.append(best.objective)
        beta = cand.beta
        if rnd > 1 and history[-1] - history[-2] < tol:
            break
        if rnd > stall_rounds and \
                history[-1] - history[-1 - stall_rounds] < stall_tol * (1.0 + abs(history[-1])):
            break
    best.history = history
    best.rounds = len(history)
    return best


def _extrapolate(theta, beta_old, cand, loss, data, ball, theta_set, xi_set, settings, max_doublings=8):
    step = cand.beta - beta_old
    best = cand
    for j in range(1, max_doublings + 1):
        trial = project(beta_old + 2.0 ** j * step, theta_set) if theta_set.m else beta_old + 2.0 ** j * step
        if np.allclose(trial, best.beta):
            break
        try:
            sol = worst_case_expectation(regret_composite(loss, theta, trial), ball, xi_set, data, settings)
        except NumericalFailure:
            break
        obj, t = bilinear_objective(theta, trial, sol.gamma, sol.q, loss, data)
        if obj <= best.objective:
            break
        best = BilinearProgramState(trial, sol.gamma, sol.q, t, obj)
    return best


# ---------------------------------------------------------------------------
# brute force, ex-post and the main entry point


def default_beta_grid(theta, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                      theta_set: Polyhedron, points_per_axis: int = 200) -> np.ndarray:
    """Regular grid over a box of comparators (decision dimension at most 2)."""
    d = loss.d
    if d > 3:
        raise UnsupportedConfiguration("grid search is limited to decision dimension 3")
    if d == 3:
        raise UnsupportedConfiguration("decision dimension 3 needs an explicit grid")
    lo, hi = search_box(theta, loss, data, ball, theta_set)
    axes = [np.linspace(lo[j], hi[j], points_per_axis) for j in range(d)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return mesh[theta_set.contains(mesh, 1e-12)] if theta_set.m else mesh


def search_box(theta, loss, data, ball, theta_set):
    """Heuristic box for comparators: ERM +- (data span + transport reach + 1)."""
    center = np.atleast_1d(np.asarray(theta, dtype=float))
    span = float(np.ptp(data.points)) if data.N > 1 else 0.0
    reach = data.N * ball.delta if ball.p == 1 else data.N ** (1.0 / ball.p) * ball.delta
    half = span + reach + np.abs(center).max() + 1.0
    lo, hi = center - half, center + half
    blo, bhi = theta_set.bounds() if theta_set.m else (lo, hi)
    return np.maximum(lo, blo), np.minimum(hi, bhi)


def regret_lower_bound_bruteforce(theta, loss: MaxAffineLoss, data: EmpiricalDataset,
                                  ball: WassersteinBall, theta_grid,
                                  xi_set: Optional[Polyhedron] = None,
                                  settings: Optional[SolverSettings] = None,
                                  return_argmax: bool = False):
    """Max over a finite comparator set of the worst-case expected loss difference."""
    grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    if grid.shape[1] != loss.d:
        grid = grid.reshape(-1, loss.d)
    if grid.shape[0] == 0:
        raise InvalidArgument("comparator grid is empty")
    best, arg = -np.inf, None
    for beta in grid:
        val = worst_case_expectation(regret_composite(loss, theta, beta), ball, xi_set, data, settings).value
        if val > best:
            best, arg = val, beta
    return (best, arg) if return_argmax else best


def ex_post_regret(theta, regret_loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                   xi_set: Optional[Polyhedron] = None, settings: Optional[SolverSettings] = None) -> float:
    """Worst-case expectation of a pointwise regret loss given in max-affine form."""
    return worst_case_expectation(loss_composite(regret_loss, theta), ball, xi_set, data, settings).value


def _zoom(theta, loss, data, ball, theta_set, xi_set, settings, grid, best_val, best_arg,
          levels: int = 4, per_axis: int = 9):
    """Refine a grid maximizer with successively finer local grids.

    Every evaluated comparator still gives a valid lower bound, so the
    refinement can only tighten it.
    """
    d = loss.d
    spacing = np.array([np.min(np.diff(np.unique(grid[:, j]))) if np.unique(grid[:, j]).size > 1
                        else 0.0 for j in range(d)])
    if not np.any(spacing > 0):
        return best_val, best_arg, spacing
    if d > 1:
        per_axis = 5
    for _ in range(levels):
        axes = [np.linspace(best_arg[j] - spacing[j], best_arg[j] + spacing[j], per_axis) for j in range(d)]
        local = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        if theta_set.m:
            local = local[theta_set.contains(local, 1e-12)]
        if local.shape[0]:
            val, arg = regret_lower_bound_bruteforce(theta, loss, data, ball, local, xi_set, settings,
                                                     return_argmax=True)
            if val > best_val:
                best_val, best_arg = val, arg
        spacing = 2.0 * spacing / (per_axis - 1)
    return best_val, best_arg, spacing


def _pattern_search(theta, loss, data, ball, theta_set, xi_set, settings, best_val, best_arg, step,
                    rel_tol: float = 1e-9):
    """Compass search on the comparator: try +-step per coordinate, halve on failure.

    Polishes maximizers sitting at kinks, where alternating steps stall. Only
    improvements are accepted, so the value stays a lower bound.
    """
    step = np.asarray(step, dtype=float).copy()
    beta = np.asarray(best_arg, dtype=float).copy()
    floor = rel_tol * (1.0 + np.abs(beta))
    while np.any(step > floor):
        moved = False
        for j in range(beta.shape[0]):
            if step[j] <= floor[j]:
                continue
            for sign in (1.0, -1.0):
                trial = beta.copy()
                trial[j] += sign * step[j]
                if theta_set.m and not theta_set.contains(trial, 1e-12):
                    continue
                val = worst_case_expectation(regret_composite(loss, theta, trial), ball, xi_set, data,
                                             settings).value
                if val > best_val:
                    best_val, beta, moved = val, trial, True
                    break
        if not moved:
            step = step / 2.0
    return best_val, beta


def _state_at(theta, beta, loss, data, ball, xi_set, settings) -> BilinearProgramState:
    sol = worst_case_expectation(regret_composite(loss, theta, beta), ball, xi_set, data, settings)
    obj, t = bilinear_objective(theta, beta, sol.gamma, sol.q, loss, data)
    return BilinearProgramState(np.asarray(beta, dtype=float), sol.gamma, sol.q, t, obj, [obj], 1)


def _random_starts(k, theta, loss, data, ball, theta_set, seed):
    if k <= 0:
        return []
    rng = np.random.default_rng(seed)
    lo, hi = search_box(theta, loss, data, ball, theta_set)
    return [project(rng.uniform(lo, hi), theta_set) for _ in range(k)]


def regret_eval(theta, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None,
                mode: str = "multistart", k: int = 8, seed: int = 0,
                beta_starts: Sequence = (), theta_grid=None, points_per_axis: int = 200,
                workers: int = 1, settings: Optional[SolverSettings] = None) -> RegretCertificate:
    """Evaluate the regret of ``theta``.

    ``mode`` is "hill-climb" (ERM start plus ``beta_starts``), "multistart"
    (additionally ``k`` seeded random starts), "grid-certified" (multistart,
    a brute-force grid lower bound refined around its maximizer, and the
    relaxation as upper bound) or "relax-certified" (multistart with the
    relaxation as upper bound, no grid). Without an upper bound the status is
    "local-only"; with one it is "optimal" when the bounds meet within
    1e-6 relative and "bound-pair" otherwise.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
    if mode not in ("hill-climb", "multistart", "grid-certified", "relax-certified"):
        raise InvalidArgument(f"unknown mode {mode!r}")
    erm = solve_erm(loss, data, theta_set)
    starts = [erm] + [np.atleast_1d(np.asarray(b, dtype=float)) for b in beta_starts]
    if mode != "hill-climb":
        starts += _random_starts(k, erm, loss, data, ball, theta_set, seed)

    def run(b0):
        return hill_climb(theta, loss, data, ball, theta_set, xi_set, beta_init=b0, settings=settings)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            states = list(pool.map(run, starts))
    else:
        states = [run(b0) for b0 in starts]
    best = max(states, key=lambda s: s.objective)
    lower = best.objective
    upper = np.inf
    status = "local-only"
    if mode == "grid-certified":
        grid = theta_grid if theta_grid is not None else default_beta_grid(
            erm, loss, data, ball, theta_set, points_per_axis)
        grid_val, grid_arg = regret_lower_bound_bruteforce(theta, loss, data, ball, grid, xi_set,
                                                           settings, return_argmax=True)
        grid_val, grid_arg, step = _zoom(theta, loss, data, ball, theta_set, xi_set, settings,
                                         np.atleast_2d(np.asarray(grid, dtype=float)).reshape(-1, loss.d),
                                         grid_val, grid_arg)
        if grid_val > lower:
            # polish the best grid comparator by hill climbing
            polished = run(grid_arg)
            if polished.objective > grid_val:
                grid_val, grid_arg = polished.objective, polished.beta
        if best.objective > grid_val:
            grid_val, grid_arg = best.objective, best.beta
        # then by compass search, which also handles maximizers at kinks
        grid_val, grid_arg = _pattern_search(theta, loss, data, ball, theta_set, xi_set, settings,
                                             grid_val, grid_arg, step)
        if grid_val > best.objective:
            best = _state_at(theta, grid_arg, loss, data, ball, xi_set, settings)
        lower = max(grid_val, best.objective)
    if mode in ("grid-certified", "relax-certified"):
        from .relaxation import relax_regret_eval

        upper = relax_regret_eval(theta, loss, data, ball, theta_set, xi_set, settings)
        status = "optimal" if upper - lower <= 1e-6 * (1.0 + abs(upper)) else "bound-pair"
    dist = extract_worst_case_distribution(
        _as_solution(best), data, xi_set if xi_set.m else None)
    value = lower if status != "optimal" else max(lower, best.objective)
    return RegretCertificate(
        value=value,
        beta_star=best.beta,
        worst_case=(dist,),
        lam=np.nan,
        status=status,
        lower=lower,
        upper=upper if status == "bound-pair" else (upper if np.isfinite(upper) else lower),
        subgradient=state_subgradient(best, loss, data),
    )


def _as_solution(state: BilinearProgramState):
    from .types import WorstCaseSolution

    return WorstCaseSolution(state.objective, state.gamma, state.q, np.nan)


# ---------------------------------------------------------------------------
# outer minimization for general losses


class RegretOracle:
    """Value-plus-subgradient oracle based on hill climbing.

    Every comparator found so far is kept in a pool. A query scores the pool
    at the new decision and hill-climbs from the ERM comparator and the
    ``memory`` best-scoring pool members, so values at different decisions
    are lower bounds of comparable quality. The value is a lower bound on
    the regret.
    """

    def __init__(self, loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                 theta_set: Polyhedron, xi_set: Optional[Polyhedron] = None, memory: int = 2,
                 pool_size: int = 32, settings: Optional[SolverSettings] = None):
        self.loss, self.data, self.ball = loss, data, ball
        self.theta_set = theta_set
        self.xi_set = xi_set if xi_set is not None else Polyhedron.full(data.n)
        self.memory = memory
        self.pool_size = pool_size
        self.settings = settings
        self.erm = solve_erm(loss, data, theta_set)
        self.pool: list[np.ndarray] = []
        self.queries: list[tuple[np.ndarray, float]] = []

    def _h(self, theta, beta) -> float:
        pieces = regret_composite(self.loss, theta, beta)
        return worst_case_expectation(pieces, self.ball, self.xi_set, self.data, self.settings).value

    def _remember(self, beta) -> None:
        scale = 1e-6 * (1.0 + np.abs(beta).max())
        if all(np.abs(beta - b).max() > scale for b in self.pool):
            self.pool.append(beta.copy())
            del self.pool[:-self.pool_size]

    def state(self, theta) -> BilinearProgramState:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        starts = [self.erm]
        if self.memory and self.pool:
            scores = [self._h(theta, b) for b in self.pool]
            starts += [self.pool[j] for j in np.argsort(scores)[::-1][:self.memory]]
        best = None
        for b0 in starts:
            st = hill_climb(theta, self.loss, self.data, self.ball, self.theta_set, self.xi_set,
                            beta_init=b0, settings=self.settings)
            if best is None or st.objective > best.objective:
                best = st
        self._remember(best.beta)
        self.queries.append((theta.copy(), best.objective))
        return best

    def __call__(self, theta) -> OracleResult:
        st = self.state(theta)
        return OracleResult(st.objective, state_subgradient(st, self.loss, self.data), st.status)


def solve_drro_exact(loss: MaxAffineLoss, data: EmpiricalDataset, ball: WassersteinBall,
                     theta_box: Polyhedron, xi_set: Optional[Polyhedron] = None,
                     tol: float = 1e-3, max_iter: int = 100, initial=(), rescore: int = 5,
                     settings: Optional[SolverSettings] = None) -> OptimizeResult:
    """Regret-minimizing decision over a bounded polyhedron by cutting planes.

    The oracle is ``RegretOracle``. Because its values are lower bounds, an
    early query can look better than it is; after the search the ``rescore``
    lowest queries (and every point of ``initial``) are evaluated again
    against the final comparator pool and the lowest re-scored point is
    returned. The value should still be certified afterwards, for instance
    with ``regret_eval`` in "relax-certified" mode.
    """
    oracle = RegretOracle(loss, data, ball, theta_box, xi_set, settings=settings)
    res = cutting_plane(oracle, theta_box, tol=tol, max_iter=max_iter, initial=initial)
    if rescore <= 0:
        return res
    n_init = len(initial)
    ranked = sorted(range(len(oracle.queries)), key=lambda j: oracle.queries[j][1])
    picks = sorted(set(ranked[:rescore]) | set(range(n_init)))
    best_theta, best_val = res.theta, np.inf
    for j in picks:
        theta = oracle.queries[j][0]
        val = oracle.state(theta).objective
        if val < best_val:
            best_theta, best_val = theta, val
    return OptimizeResult(best_theta, best_val, res.status, res.iterations, res.history, res.lower_bound)
