"""Exact distributionally robust regret for the single-item newsvendor.

For the loss l(theta, x) = b*theta - s*min(theta, x), the regret function
h(beta; theta) = sup_Q E_Q[l(theta, X) - l(beta, X)] is concave in beta on
each side of theta, so the regret R(theta) = sup_beta h(beta; theta) is found
by two golden-section searches. Each evaluation of h reduces to a worst-case
expectation of a clipped linear payoff, computed by ``kernels``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import extract_worst_case_distribution
from .errors import InvalidArgument
from .kernels import clip_worst_case
from .optimize import OracleResult, bisection_1d
from .types import (
    DiscreteDistribution,
    EmpiricalDataset,
    MaxAffineLoss,
    Polyhedron,
    RegretCertificate,
    WassersteinBall,
    WorstCaseSolution,
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class NewsvendorInstance:
    """Wholesale price ``b``, retail price ``s`` and a nonnegative demand sample."""

    b: float
    s: float
    data: EmpiricalDataset
    xs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        b, s = float(self.b), float(self.s)
        if not (0.0 <= b < s):
            raise InvalidArgument("prices must satisfy 0 <= b < s")
        data = self.data if isinstance(self.data, EmpiricalDataset) else EmpiricalDataset(self.data)
        if data.n != 1:
            raise InvalidArgument("newsvendor demand must be one-dimensional")
        xs = np.sort(data.points[:, 0])
        if xs[0] < 0:
            raise InvalidArgument("demand samples must be nonnegative")
        xs.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "data", EmpiricalDataset(xs[:, None]))
        object.__setattr__(self, "xs", xs)

    @property
    def N(self) -> int:
        return self.xs.shape[0]

    @property
    def loss(self) -> MaxAffineLoss:
        """Max-affine encoding: pieces (b - s) theta and b theta - s x."""
        return newsvendor_loss(self.b, self.s)

    @property
    def pointwise_regret_loss(self) -> MaxAffineLoss:
        """x -> l(theta, x) - min_beta l(beta, x) = max(b(theta - x), (s - b)(x - theta))."""
        b, s = self.b, self.s
        return MaxAffineLoss([[-b], [s - b]], [[b], [-(s - b)]], [0.0, 0.0])

    @property
    def support(self) -> Polyhedron:
        return Polyhedron.nonnegative(1)

    @property
    def decisions(self) -> Polyhedron:
        return Polyhedron.nonnegative(1)

    def critical_quantile(self) -> float:
        """Smallest sample point with empirical CDF >= 1 - b/s."""
        ratio = 1.0 - self.b / self.s
        k = max(int(math.ceil(ratio * self.N - 1e-12)), 1)
        return float(self.xs[k - 1])

    def beta_max(self, theta: float, ball: WassersteinBall) -> float:
        spread = self.N * ball.delta if ball.p == 1 else self.N ** (1.0 / ball.p) * ball.delta
        return float(self.xs[-1] + spread + theta)


def newsvendor_loss(b: float, s: float) -> MaxAffineLoss:
    return MaxAffineLoss([[0.0], [-s]], [[b - s], [b]], [0.0, 0.0])


@dataclass(frozen=True)
class BranchResult:
    value: float
    beta: float
    lam: float
    positions: np.ndarray
    fractions: np.ndarray


def _branch(beta: float, theta: float, inst: NewsvendorInstance, ball: WassersteinBall) -> BranchResult:
    b, s, xs = inst.b, inst.s, inst.xs
    if beta >= theta:
        val, lam, pos, gam = clip_worst_case(xs, theta, beta, ball.delta, ball.p)
        h = b * (theta - beta) + s * val
    else:
        # mirror x -> -x so that mass again only moves right
        val, lam, pos, gam = clip_worst_case(-xs[::-1], -theta, -beta, ball.delta, ball.p)
        pos, gam = -pos[::-1], gam[::-1]
        h = -(s - b) * (theta - beta) + s * val
    return BranchResult(float(h), float(beta), float(s * lam), pos, gam)


def h_eval(beta: float, theta: float, inst: NewsvendorInstance, ball: WassersteinBall) -> float:
    """Worst-case expected loss difference sup_Q E[l(theta, X) - l(beta, X)]."""
    if beta < 0 or theta < 0:
        raise InvalidArgument("decisions must be nonnegative")
    return _branch(float(beta), float(theta), inst, ball).value


def _golden_max(f, lo: float, hi: float):
    """Maximize a concave function on [lo, hi]; returns the best evaluated point."""
    best = max((f(lo), f(hi)), key=lambda r: r.value)
    if hi - lo <= 0:
        return best
    a, c = lo, hi
    x1 = c - _GOLDEN * (c - a)
    x2 = a + _GOLDEN * (c - a)
    f1, f2 = f(x1), f(x2)
    best = max((best, f1, f2), key=lambda r: r.value)
    while c - a > 1e-7 * (1.0 + max(abs(a), abs(c))):
        if f1.value >= f2.value:
            c, x2, f2 = x2, x1, f1
            x1 = c - _GOLDEN * (c - a)
            f1 = f(x1)
            cand = f1
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (c - a)
            f2 = f(x2)
            cand = f2
        if cand.value > best.value:
            best = cand
    return best


def _witness(inst: NewsvendorInstance, br: BranchResult) -> DiscreteDistribution:
    N = inst.N
    gamma = np.column_stack([br.fractions, 1.0 - br.fractions])
    q = np.zeros((N, 2, 1))
    q[:, 0, 0] = br.fractions * (br.positions - inst.xs)
    sol = WorstCaseSolution(br.value, gamma, q, br.lam)
    return extract_worst_case_distribution(sol, inst.data, inst.support)


def _subgradient(inst: NewsvendorInstance, theta: float, dist: DiscreteDistribution) -> float:
    # piece (b - s) theta is active when x >= theta, piece b theta otherwise
    sold_out = float(dist.weights[dist.atoms[:, 0] >= theta].sum())
    return inst.b - inst.s * sold_out


def regret_newsvendor(theta: float, inst: NewsvendorInstance, ball: WassersteinBall) -> RegretCertificate:
    """Exact regret R(theta) with both branch maximizers and witnesses."""
    theta = float(np.asarray(theta).reshape(-1)[0])
    if theta < 0:
        raise InvalidArgument("theta must be nonnegative")

    def f(beta):
        return _branch(beta, theta, inst, ball)

    left = _golden_max(f, 0.0, theta) if theta > 0 else f(0.0)
    right = _golden_max(f, theta, inst.beta_max(theta, ball))
    branches = {}
    for name, br in (("left", left), ("right", right)):
        branches[name] = (br.value, br.beta, _witness(inst, br))
    tie = abs(left.value - right.value) <= 1e-9 * (1.0 + abs(right.value))
    if tie:
        side = "both"
    else:
        side = "right" if right.value > left.value else "left"
    best = right if right.value >= left.value else left
    best_dist = branches["right" if best is right else "left"][2]
    witnesses = (branches["left"][2], branches["right"][2]) if tie else (best_dist,)
    g = _subgradient(inst, theta, best_dist)
    return RegretCertificate(
        value=best.value,
        beta_star=np.array([best.beta]),
        worst_case=witnesses,
        lam=best.lam,
        status="optimal",
        lower=best.value,
        upper=best.value,
        side=side,
        subgradient=np.array([g]),
        branches=branches,
    )


def regret_oracle(inst: NewsvendorInstance, ball: WassersteinBall):
    """Value-plus-subgradient oracle for the outer minimization."""

    def oracle(theta) -> OracleResult:
        th = max(float(np.asarray(theta).reshape(-1)[0]), 0.0)
        cert = regret_newsvendor(th, inst, ball)
        return OracleResult(cert.value, cert.subgradient, cert.status)

    return oracle


def decision_bracket(inst: NewsvendorInstance, ball: WassersteinBall) -> tuple[float, float]:
    """Interval known to contain a regret minimizer.

    At theta = 0 every atom satisfies x >= theta so the subgradient is b - s < 0.
    Beyond the largest sample plus the farthest any single point can travel,
    no atom reaches theta and the subgradient is b > 0.
    """
    spread = inst.N * ball.delta if ball.p == 1 else inst.N ** (1.0 / ball.p) * ball.delta
    return 0.0, float(inst.xs[-1] + spread + 1.0)


def solve_drro_newsvendor(inst: NewsvendorInstance, ball: WassersteinBall, tol: float = 1e-6):
    """Minimize the regret by bisection on the subgradient sign.

    Returns (theta_star, certificate at theta_star).
    """
    if tol <= 0:
        raise InvalidArgument("tol must be positive")
    res = bisection_1d(regret_oracle(inst, ball), decision_bracket(inst, ball), tol)
    theta = float(res.theta[0])
    return theta, regret_newsvendor(theta, inst, ball)


def worst_case_pair(theta_star: float, inst: NewsvendorInstance, ball: WassersteinBall,
                    tol: float = 1e-6):
    """Left- and right-branch worst-case distributions at a regret minimizer.

    Warns when the two branch values differ by more than 10 * tol, which means
    ``theta_star`` is not optimal.
    """
    cert = regret_newsvendor(theta_star, inst, ball)
    lv, rv = cert.branches["left"][0], cert.branches["right"][0]
    if abs(lv - rv) > 10 * tol * max(1.0, abs(cert.value)):
        warnings.warn(f"branch values differ ({lv:.6g} vs {rv:.6g}); theta is not regret optimal",
                      RuntimeWarning, stacklevel=2)
    return cert.branches["left"][2], cert.branches["right"][2]
