"""Cone encodings and solver plumbing shared by the conic programs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import Infeasible, NumericalFailure, Unbounded, UnsupportedConfiguration
from .types import WassersteinBall

_ORD = {"L1": 1, "L2": 2, "Linf": "inf"}


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 500

    def clarabel_options(self) -> dict:
        return {
            "tol_feas": self.feas_tol,
            "tol_gap_abs": self.feas_tol,
            "tol_gap_rel": self.gap_tol,
            "max_iter": self.max_iter,
        }


DEFAULT_SETTINGS = SolverSettings()


def solve(problem: cp.Problem, settings: SolverSettings | None = None) -> str:
    """Solve with Clarabel and translate failure statuses into exceptions."""
    settings = settings or DEFAULT_SETTINGS
    with warnings.catch_warnings():
        # inaccurate solutions are reported through the returned status instead
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        try:
            problem.solve(solver=cp.CLARABEL, **settings.clarabel_options())
        except cp.error.SolverError as exc:
            try:
                problem.solve(solver=cp.SCS, eps=settings.feas_tol * 100, max_iters=20000)
            except cp.error.SolverError:
                raise NumericalFailure(f"conic solver failed: {exc}") from exc
    status = problem.status
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible("conic program is infeasible")
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise Unbounded("conic program is unbounded")
    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise NumericalFailure(f"conic solver returned status {status}")
    return "optimal" if status == cp.OPTIMAL else "inaccurate"


def row_norm(expr, norm: str, extra: list):
    """Expression bounding the row norms of a (rows x n) affine expression.

    Returns a length-rows expression; for n == 1 this is just |expr|.
    """
    n = expr.shape[1]
    if n == 1:
        return cp.abs(expr[:, 0])
    if norm == "L2":
        aux = cp.Variable(expr.shape[0])
        extra.append(cp.SOC(aux, expr, axis=1))
        return aux
    return cp.norm(expr, _ORD[norm], axis=1)


def norm_bound(expr, norm: str, cons: list):
    """Affine variable bounding the row norms of ``expr`` from above."""
    aux = cp.Variable(expr.shape[0])
    if expr.shape[1] == 1 or norm != "L2":
        cons.append(row_norm(expr, norm, cons) <= aux)
    else:
        cons.append(cp.SOC(aux, expr, axis=1))
    return aux


def transport_cost(q, gamma, ball: WassersteinBall, cons: list):
    """Per-row upper bound on gamma * ||q / gamma||^p (perspective of the cost).

    ``q`` is a (rows x n) expression and ``gamma`` a length-rows nonnegative
    expression. Constraints are appended to ``cons``; the returned expression
    is the per-row cost.
    """
    rows, n = q.shape
    p = ball.p
    if p == 1:
        return row_norm(q, ball.norm, cons)
    cost = cp.Variable(rows)
    if p == 2:
        if ball.norm == "L2" or n == 1:
            lhs = q
        else:
            lhs = cp.reshape(norm_bound(q, ball.norm, cons), (rows, 1), order="C")
        # ||lhs||^2 <= cost * gamma as a rotated cone
        cons.append(cp.SOC(cost + gamma,
                           cp.hstack([2 * lhs, cp.reshape(cost - gamma, (rows, 1), order="C")]),
                           axis=1))
        return cost
    nrm = norm_bound(q, ball.norm, cons)
    _require_power_cone()
    cons.append(cp.constraints.PowCone3D(cost, gamma, nrm, 1.0 / p))
    return cost


def conjugate_penalty(v, lam, ball: WassersteinBall, cons: list):
    """Per-row bound on phi(q) * lam * ||v / lam||_*^q.

    For p == 1 this instead constrains ||v||_* <= lam and returns zeros.
    ``lam`` is a scalar nonnegative variable.
    """
    rows = v.shape[0]
    dual = ball.dual_norm
    if ball.p == 1:
        cons.append(row_norm(v, dual, cons) <= lam)
        return np.zeros(rows)
    pen = cp.Variable(rows)
    lam_vec = lam * np.ones(rows)
    if ball.p == 2:
        if dual == "L2" or v.shape[1] == 1:
            lhs = v
        else:
            lhs = cp.reshape(norm_bound(v, dual, cons), (rows, 1), order="C")
        # ||lhs||^2 / (4 lam) <= pen  <=>  ||(2 lhs, 4 lam - pen)|| <= 4 lam + pen
        cons.append(cp.SOC(4 * lam_vec + pen,
                           cp.hstack([2 * lhs, cp.reshape(4 * lam_vec - pen, (rows, 1), order="C")]),
                           axis=1))
        return pen
    qexp = ball.conjugate_exponent
    phi = conjugate_constant(qexp)
    nrm = norm_bound(v, dual, cons)
    _require_power_cone()
    cons.append(cp.constraints.PowCone3D(pen / phi, lam_vec, nrm, 1.0 / qexp))
    return pen


def conjugate_constant(qexp: float) -> float:
    """phi(q) = (q-1)^(q-1) / q^q, the constant of the conjugated power cost."""
    if not np.isfinite(qexp):
        return 0.0
    return (qexp - 1.0) ** (qexp - 1.0) / qexp ** qexp


def _require_power_cone():
    if "CLARABEL" not in cp.installed_solvers():
        raise UnsupportedConfiguration("orders other than 1 and 2 need a power-cone solver")
