"""Outer minimization of a convex function given a value-plus-subgradient oracle."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import cvxpy as cp
import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible, InvalidArgument, NumericalFailure, Unbounded
from .types import Polyhedron


@dataclass(frozen=True)
class OracleResult:
    value: float
    subgradient: np.ndarray
    status: str = "optimal"

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.subgradient, dtype=float))
        if not np.isfinite(self.value) or not np.all(np.isfinite(g)):
            raise NumericalFailure("oracle returned non-finite output")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "subgradient", g)


@dataclass
class OptimizeResult:
    """Best point found; ``history`` holds the running-best value per oracle call."""

    theta: np.ndarray
    value: float
    status: str
    iterations: int
    history: list = field(default_factory=list)
    lower_bound: float = -np.inf

    def __iter__(self):
        # allows ``theta, value = method(...)``
        yield self.theta
        yield self.value


Oracle = Callable[[np.ndarray], OracleResult]


class _Tracker:
    def __init__(self, oracle: Oracle):
        self.oracle = oracle
        self.theta = None
        self.value = np.inf
        self.history: list[float] = []
        self.calls = 0

    def __call__(self, theta) -> OracleResult:
        theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
        res = self.oracle(theta)
        self.calls += 1
        if res.value < self.value:
            self.value, self.theta = res.value, theta
        self.history.append(self.value)
        return res


# ---------------------------------------------------------------------------
# geometry helpers


def project(theta, poly: Polyhedron) -> np.ndarray:
    """Euclidean projection onto a polyhedron."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if poly.m == 0:
        return theta.copy()
    bb = poly.box_bounds()
    if bb is not None:
        return np.clip(theta, bb[0], bb[1])
    x = cp.Variable(theta.shape[0])
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - theta)), [poly.M @ x <= poly.w])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise Infeasible("projection onto the decision set failed")
    return np.asarray(x.value, dtype=float)


def chebyshev_center(poly: Polyhedron) -> tuple[np.ndarray, float]:
    """Center and radius of the largest Euclidean ball inside a polytope."""
    if poly.m == 0:
        raise Unbounded("the full space has no Chebyshev center")
    d = poly.dim
    norms = np.linalg.norm(poly.M, axis=1)
    A_ub = np.hstack([poly.M, norms[:, None]])
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * d + [(0, None)]
    res = linprog(cost, A_ub=A_ub, b_ub=poly.w, bounds=bounds, method="highs")
    if res.status == 2:
        raise Infeasible("polytope is empty")
    if res.status == 3:
        raise Unbounded("polytope is unbounded")
    if res.status != 0:
        raise NumericalFailure(res.message)
    return res.x[:d].copy(), float(res.x[-1])


def _diameter(poly: Polyhedron, theta0: np.ndarray) -> float:
    lo, hi = poly.bounds()
    if np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)):
        return float(max(np.linalg.norm(hi - lo), 1e-12))
    return float(max(1.0, np.linalg.norm(theta0)))


# ---------------------------------------------------------------------------
# methods


def bisection_1d(oracle: Oracle, bracket, tol: float = 1e-6, max_expand: int = 60) -> OptimizeResult:
    """Bisection on the sign of the subgradient of a convex function of one variable.

    The bracket is widened geometrically when the endpoint signs are wrong.
    Without a sign change the better endpoint is returned with a warning.
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise InvalidArgument("bracket must satisfy lo < hi")
    track = _Tracker(oracle)
    g_lo = track([lo]).subgradient[0]
    g_hi = track([hi]).subgradient[0]
    for _ in range(max_expand):
        if g_lo <= 0 <= g_hi:
            break
        width = hi - lo
        if g_lo > 0:
            lo -= width
            g_lo = track([lo]).subgradient[0]
        if g_hi < 0:
            hi += width
            g_hi = track([hi]).subgradient[0]
    if not g_lo <= 0 <= g_hi:
        warnings.warn("no sign change of the subgradient inside the bracket", RuntimeWarning, stacklevel=2)
        return OptimizeResult(track.theta, track.value, "no-sign-change", track.calls, track.history)
    it = 0
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        g = track([mid]).subgradient[0]
        it += 1
        if abs(g) < 1e-9:
            lo = hi = mid
            break
        if g > 0:
            hi = mid
        else:
            lo = mid
    track([0.5 * (lo + hi)])
    return OptimizeResult(track.theta, track.value, "optimal", track.calls, track.history)


def step_sqrt(scale: float) -> Callable[[int], float]:
    """Step lengths scale / sqrt(t) for t = 1, 2, ..."""
    return lambda t: scale / np.sqrt(t)


def step_geometric(scale: float, ratio: float = 0.98) -> Callable[[int], float]:
    """Step lengths scale * ratio**(t-1); fast but not convergent in general."""
    return lambda t: scale * ratio ** (t - 1)


def subgradient_descent(oracle: Oracle, theta0, theta_set: Polyhedron, steps: int = 1000,
                        step_rule: Optional[Callable[[int], float]] = None) -> OptimizeResult:
    """Projected subgradient method with normalized steps; returns the running best."""
    theta = np.atleast_1d(np.asarray(theta0, dtype=float)).copy()
    if theta_set.dim != theta.shape[0]:
        raise InvalidArgument("theta0 and theta_set dimensions differ")
    if not theta_set.contains(theta, 1e-9):
        raise InvalidArgument("theta0 must lie in theta_set")
    if step_rule is None:
        step_rule = step_sqrt(_diameter(theta_set, theta))
    track = _Tracker(oracle)
    status = "max-steps"
    for t in range(1, steps + 1):
        g = track(theta).subgradient
        gn = np.linalg.norm(g)
        if gn == 0.0:
            status = "stationary"
            break
        theta = project(theta - step_rule(t) * g / gn, theta_set)
    return OptimizeResult(track.theta, track.value, status, track.calls, track.history)


def _kelley_bound(points, values, grads, box: Polyhedron) -> float:
    """min over the box of max_j values_j + grads_j.(theta - points_j)."""
    d = box.dim
    G = np.asarray(grads)
    rhs = np.asarray([g @ p - v for g, p, v in zip(grads, points, values)])
    A = np.vstack([np.hstack([G, -np.ones((len(G), 1))]),
                   np.hstack([box.M, np.zeros((box.m, 1))])])
    b = np.concatenate([rhs, box.w])
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * (d + 1), method="highs")
    return float(res.fun) if res.status == 0 else -np.inf


def cutting_plane(oracle: Oracle, theta_box: Polyhedron, tol: float = 1e-6, max_iter: int = 200,
                  stall_iter: int = 20, stall_tol: float = 1e-7, initial=()) -> OptimizeResult:
    """Cutting-plane method querying the Chebyshev center of the localizer.

    Every query theta_j with value R_j and subgradient g_j yields the cut
    R_j + g_j.(theta - theta_j) <= best value, which is at least as deep as the
    neutral cut through theta_j. Stops when the inscribed radius drops below
    ``tol``, when the Kelley lower bound is within ``tol`` of the best value,
    or after ``stall_iter`` iterations without an improvement above ``stall_tol``.
    Points in ``initial`` are queried first and contribute their cuts.
    """
    if theta_box.m == 0 or not theta_box.is_bounded():
        raise InvalidArgument("cutting_plane needs a bounded decision set")
    track = _Tracker(oracle)
    pts, vals, grads = [], [], []
    for theta0 in initial:
        theta0 = project(theta0, theta_box)
        res = track(theta0)
        pts.append(theta0)
        vals.append(res.value)
        grads.append(res.subgradient)
    status = "max-iter"
    lower = -np.inf
    last_best, stalled = np.inf, 0
    for it in range(max_iter):
        if grads:
            G = np.asarray(grads)
            rhs = np.asarray([g @ p for g, p in zip(grads, pts)]) + track.value - np.asarray(vals)
            M = np.vstack([theta_box.M, G])
            w = np.concatenate([theta_box.w, rhs])
        else:
            M, w = theta_box.M, theta_box.w
        try:
            center, radius = chebyshev_center(Polyhedron(M, w, check=False))
        except (Infeasible, NumericalFailure):
            status = "degraded"
            break
        if radius < tol:
            status = "optimal"
            break
        res = track(center)
        pts.append(center)
        vals.append(res.value)
        grads.append(res.subgradient)
        if np.linalg.norm(res.subgradient) == 0.0:
            status = "optimal"
            break
        lower = max(lower, _kelley_bound(pts, vals, grads, theta_box))
        if track.value - lower <= tol:
            status = "optimal"
            break
        if last_best - track.value > stall_tol:
            last_best, stalled = track.value, 0
        else:
            stalled += 1
            if stalled >= stall_iter:
                status = "stalled"
                break
    return OptimizeResult(track.theta, track.value, status, track.calls, track.history, lower)
