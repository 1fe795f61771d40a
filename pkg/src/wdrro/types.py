"""Immutable domain types: losses, datasets, balls, polyhedra and distributions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible, InvalidArgument

NORMS = ("L1", "L2", "Linf")
DUAL_NORM = {"L1": "Linf", "L2": "L2", "Linf": "L1"}


def _as_matrix(x, name: str, cols: Optional[int] = None) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 1 and cols is not None:
        arr = arr.reshape(-1, cols) if arr.size else np.zeros((0, cols))
    if arr.ndim != 2:
        raise InvalidArgument(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(x, name: str, size: Optional[int] = None) -> np.ndarray:
    arr = np.atleast_1d(np.array(x, dtype=float))
    if arr.ndim != 1:
        raise InvalidArgument(f"{name} must be a vector, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise InvalidArgument(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def norm_rows(x: np.ndarray, norm: str) -> np.ndarray:
    """Row-wise norm of a 2-D array."""
    x = np.atleast_2d(x)
    if norm == "L1":
        return np.abs(x).sum(axis=1)
    if norm == "L2":
        return np.sqrt((x * x).sum(axis=1))
    if norm == "Linf":
        return np.abs(x).max(axis=1) if x.shape[1] else np.zeros(x.shape[0])
    raise InvalidArgument(f"unknown norm {norm!r}")


@dataclass(frozen=True)
class MaxAffineLoss:
    """Loss max_k a_k.x + b_k.theta + c_k + (d_k * theta).x.

    Rows of ``A``, ``B``, ``D`` hold a_k, b_k, d_k. ``D`` defaults to zero.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray
    D: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        K = A.shape[0]
        if K < 1:
            raise InvalidArgument("loss needs at least one piece")
        if B.shape[0] != K:
            raise InvalidArgument("A and B must have the same number of rows")
        c = _as_vector(self.c, "c", K)
        if self.D is None:
            D = np.zeros_like(A)
            D.setflags(write=False)
        else:
            D = _as_matrix(self.D, "D")
            if D.shape != A.shape:
                raise InvalidArgument("D must have the same shape as A")
        if np.any(D != 0) and B.shape[1] != A.shape[1]:
            raise InvalidArgument("bilinear terms need decision and randomness dimensions to match")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "D", D)

    @property
    def K(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def d(self) -> int:
        return self.B.shape[1]

    @property
    def has_bilinear(self) -> bool:
        return bool(np.any(self.D != 0))

    def x_coefficients(self, theta) -> np.ndarray:
        """K x n matrix of slopes a_k + d_k * theta in the random variable."""
        theta = np.asarray(theta, dtype=float)
        if not self.has_bilinear:
            return np.array(self.A)
        return self.A + self.D * theta[None, :]

    def piece_values(self, theta, X) -> np.ndarray:
        """N x K matrix of piece values at the rows of ``X``."""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if theta.shape[0] != self.d or X.shape[1] != self.n:
            raise InvalidArgument("dimension mismatch between loss and inputs")
        return X @ self.x_coefficients(theta).T + (self.B @ theta + self.c)[None, :]


@dataclass(frozen=True)
class EmpiricalDataset:
    """Uniformly weighted sample; ``points`` is N x n."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        pts = _as_matrix(pts, "points")
        if pts.shape[0] < 1:
            raise InvalidArgument("dataset needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def as_distribution(self) -> "DiscreteDistribution":
        return DiscreteDistribution(self.points, np.full(self.N, 1.0 / self.N))

    def check_support(self, xi_set: Optional["Polyhedron"], tol: float = 1e-9) -> None:
        if xi_set is None:
            return
        if xi_set.dim != self.n:
            raise InvalidArgument("support set dimension does not match data")
        if not np.all(xi_set.contains(self.points, tol)):
            raise InvalidArgument("some data points lie outside the support set")


@dataclass(frozen=True)
class WassersteinBall:
    """Type-p Wasserstein ball of radius ``delta`` with ground norm ``norm``."""

    delta: float
    p: float = 2.0
    norm: str = "L2"

    def __post_init__(self):
        delta = float(self.delta)
        p = float(self.p)
        if not np.isfinite(delta) or delta < 0:
            raise InvalidArgument("radius must be a nonnegative finite number")
        if not np.isfinite(p) or p < 1:
            raise InvalidArgument("order p must be at least 1")
        if self.norm not in NORMS:
            raise InvalidArgument(f"norm must be one of {NORMS}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "p", p)

    @property
    def dual_norm(self) -> str:
        return DUAL_NORM[self.norm]

    @property
    def conjugate_exponent(self) -> float:
        return np.inf if self.p == 1 else self.p / (self.p - 1.0)

    def with_delta(self, delta: float) -> "WassersteinBall":
        return WassersteinBall(delta, self.p, self.norm)


@dataclass(frozen=True)
class Polyhedron:
    """The set {x | M x <= w}; no rows means the whole space."""

    M: np.ndarray
    w: np.ndarray
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 2:
            raise InvalidArgument("M must be 2-D (use shape (0, dim) for the full space)")
        M = _as_matrix(M, "M")
        w = _as_vector(self.w, "w", M.shape[0]) if M.shape[0] else _as_vector(np.zeros(0), "w")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "w", w)
        if self.check and M.shape[0]:
            res = linprog(np.zeros(M.shape[1]), A_ub=M, b_ub=w,
                          bounds=[(None, None)] * M.shape[1], method="highs")
            if res.status == 2:
                raise Infeasible("polyhedron is empty")

    @classmethod
    def full(cls, dim: int) -> "Polyhedron":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @classmethod
    def nonnegative(cls, dim: int) -> "Polyhedron":
        return cls(-np.eye(dim), np.zeros(dim), check=False)

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polyhedron":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise InvalidArgument("box needs lower <= upper of equal length")
        dim = lo.shape[0]
        return cls(np.vstack([np.eye(dim), -np.eye(dim)]), np.concatenate([hi, -lo]), check=False)

    @property
    def dim(self) -> int:
        return self.M.shape[1]

    @property
    def m(self) -> int:
        return self.M.shape[0]

    def contains(self, x, tol: float = 1e-9):
        """Membership test; accepts a point or a stack of points (rows)."""
        x = np.asarray(x, dtype=float)
        if self.m == 0:
            return np.ones(x.shape[0], dtype=bool) if x.ndim == 2 else True
        if x.ndim == 1:
            return bool(np.all(self.M @ x <= self.w + tol * (1 + np.abs(self.w))))
        return np.all(x @ self.M.T <= self.w[None, :] + tol * (1 + np.abs(self.w))[None, :], axis=1)

    def in_recession_cone(self, v, tol: float = 1e-9) -> bool:
        v = np.asarray(v, dtype=float)
        return self.m == 0 or bool(np.all(self.M @ v <= tol * (1 + np.linalg.norm(v))))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise bounding box; infinite entries where unbounded."""
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        if self.m == 0:
            return lo, hi
        free = [(None, None)] * self.dim
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = 1.0
            for sign, store in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * e, A_ub=self.M, b_ub=self.w, bounds=free, method="highs")
                if res.status == 0:
                    store[j] = res.x[j]
        return lo, hi

    def is_bounded(self) -> bool:
        lo, hi = self.bounds()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def box_bounds(self) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Return (lower, upper) when the constraints are axis-aligned bounds only."""
        if self.m == 0:
            return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)
        nz = np.count_nonzero(self.M, axis=1)
        if np.any(nz != 1):
            return None
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        for row, rhs in zip(self.M, self.w):
            j = int(np.flatnonzero(row)[0])
            coef = row[j]
            if coef > 0:
                hi[j] = min(hi[j], rhs / coef)
            else:
                lo[j] = max(lo[j], rhs / coef)
        return lo, hi


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported distribution; ``atoms`` is J x n."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        atoms = _as_matrix(atoms, "atoms")
        weights = _as_vector(self.weights, "weights", atoms.shape[0])
        if np.any(weights < -1e-12):
            raise InvalidArgument("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"weights sum to {weights.sum():.12g}, not 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.atoms.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms


@dataclass(frozen=True)
class CompositeLoss:
    """Piecewise function x -> max_k (alpha_k.x + kappa_k) - max_m (g_m.x + h_m).

    The subtracted max-affine part is shared across pieces. With ``G`` empty
    the subtrahend is zero.
    """

    alpha: np.ndarray
    kappa: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        alpha = _as_matrix(self.alpha, "alpha")
        kappa = _as_vector(self.kappa, "kappa", alpha.shape[0])
        G = _as_matrix(self.G, "G", alpha.shape[1])
        if G.shape[0] == 0:
            G = np.zeros((1, alpha.shape[1]))
            h = np.zeros(1)
        else:
            h = _as_vector(self.h, "h", G.shape[0])
        if G.shape[1] != alpha.shape[1]:
            raise InvalidArgument("alpha and G column counts differ")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "G", np.asarray(G))
        object.__setattr__(self, "h", np.asarray(h))

    @property
    def K(self) -> int:
        return self.alpha.shape[0]

    @property
    def n(self) -> int:
        return self.alpha.shape[1]

    def evaluate(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        top = (X @ self.alpha.T + self.kappa).max(axis=1)
        sub = (X @ self.G.T + self.h).max(axis=1)
        return top - sub

    def expectation(self, dist: DiscreteDistribution) -> float:
        return float(dist.weights @ self.evaluate(dist.atoms))


@dataclass(frozen=True)
class WorstCaseSolution:
    """Certificate of a worst-case expectation problem.

    ``gamma`` is N x K, ``q`` is N x K x n and ``lam`` is the budget multiplier.
    """

    value: float
    gamma: np.ndarray
    q: np.ndarray
    lam: float
    status: str = "optimal"


@dataclass(frozen=True)
class RegretCertificate:
    """Result of a regret evaluation.

    ``status`` is one of "optimal", "local-only", "bound-pair"; ``lower`` and
    ``upper`` bracket the regret (equal to ``value`` for exact results).
    ``side`` is "left", "right" or "both" for the one-dimensional solver and
    None otherwise. ``branches`` maps side to (value, beta, witness).
    """

    value: float
    beta_star: np.ndarray
    worst_case: tuple
    lam: float
    status: str
    lower: float
    upper: float
    side: Optional[str] = None
    subgradient: Optional[np.ndarray] = None
    branches: Optional[dict] = None
