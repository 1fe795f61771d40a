"""Scenario definitions, seeded data generation and loss construction."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import norm as gaussian

from ..core import solve_erm
from ..errors import InvalidArgument
from ..newsvendor import newsvendor_loss
from ..types import EmpiricalDataset, MaxAffineLoss, NORMS, Polyhedron, WassersteinBall

KINDS = ("newsvendor", "multi-factor", "two-item")


@dataclass(frozen=True)
class ScenarioConfig:
    """Experiment description.

    ``prices`` holds b, s for the single-item kinds and b_A, b_B, s_A, s_B,
    phi for the two-item kind. ``demand`` holds mean/std (scalars, or
    two-element lists for two-item) or, for multi-factor, weights, mean and
    cov of the Gaussian factors.
    """

    kind: str
    prices: dict
    demand: dict
    N: int = 1000
    seed: int = 0
    delta_grid: tuple = (0.0,)
    p: float = 2.0
    norm: str = "L2"
    clip: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"kind must be one of {KINDS}")
        if int(self.N) < 1:
            raise InvalidArgument("N must be positive")
        seed = int(self.seed)
        if not 0 <= seed < 2 ** 64:
            raise InvalidArgument("seed must be an unsigned 64-bit integer")
        grid = tuple(float(d) for d in np.atleast_1d(self.delta_grid))
        if any(d < 0 for d in grid) or any(b < a for a, b in zip(grid, grid[1:])):
            raise InvalidArgument("delta_grid must be nonnegative and ascending")
        if self.p < 1 or self.norm not in NORMS:
            raise InvalidArgument("ball needs p >= 1 and a known norm")
        prices = {k: float(v) for k, v in self.prices.items()}
        if self.kind == "two-item":
            need = ("b_A", "b_B", "s_A", "s_B", "phi")
            if any(k not in prices for k in need):
                raise InvalidArgument(f"two-item prices need {need}")
            if not (0 < prices["b_A"] < prices["s_A"] and 0 < prices["b_B"] < prices["s_B"]):
                raise InvalidArgument("prices must be positive with sell > buy per item")
            if not 0 <= prices["phi"] <= 1:
                raise InvalidArgument("phi must lie in [0, 1]")
        else:
            if "b" not in prices or "s" not in prices:
                raise InvalidArgument("prices need b and s")
            if not 0 < prices["b"] < prices["s"]:
                raise InvalidArgument("prices must be positive with sell > buy")
        demand = dict(self.demand)
        if self.kind == "multi-factor":
            for key in ("weights", "mean", "cov"):
                if key not in demand:
                    raise InvalidArgument(f"multi-factor demand needs {key}")
            cov = np.asarray(demand["cov"], dtype=float)
            k = len(demand["weights"])
            if cov.shape != (k, k) or len(demand["mean"]) != k:
                raise InvalidArgument("factor mean/cov do not match the weights")
            if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() < -1e-10:
                raise InvalidArgument("factor covariance must be symmetric PSD")
        else:
            if "mean" not in demand or "std" not in demand:
                raise InvalidArgument("demand needs mean and std")
            width = 2 if self.kind == "two-item" else 1
            if np.size(demand["mean"]) != width or np.size(demand["std"]) != width:
                raise InvalidArgument(f"demand mean/std must have {width} entries")
            if np.any(np.asarray(demand["std"], dtype=float) <= 0):
                raise InvalidArgument("demand std must be positive")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "seed", seed)
        object.__setattr__(self, "delta_grid", grid)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "demand", demand)

    # -- convenience -------------------------------------------------------

    @property
    def d(self) -> int:
        return 2 if self.kind == "two-item" else 1

    def ball(self, delta: float) -> WassersteinBall:
        return WassersteinBall(delta, self.p, self.norm)

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["delta_grid"] = list(self.delta_grid)
        out["ball"] = {"p": out.pop("p"), "norm": out.pop("norm")}
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise InvalidArgument("config must be a mapping")
        raw = dict(raw)
        ball = raw.pop("ball", {}) or {}
        if not isinstance(ball, dict):
            raise InvalidArgument("ball must be a mapping with p and norm")
        known = {"kind", "prices", "demand", "N", "seed", "delta_grid", "clip"}
        unknown = set(raw) - known
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(p=float(ball.get("p", 2.0)), norm=str(ball.get("norm", "L2")), **raw)
        except TypeError as exc:
            raise InvalidArgument(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        """Read a JSON or YAML file (chosen by suffix, YAML otherwise)."""
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            raw = json.loads(text)
        else:
            import yaml

            raw = yaml.safe_load(text)
        return cls.from_dict(raw)

    @classmethod
    def preset(cls, name: str) -> "ScenarioConfig":
        if name not in PRESETS:
            raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls.from_dict(PRESETS[name])


ONE_TO_TEN = [float(d) for d in range(1, 11)]

PRESETS = {
    # cheap purchases, high margin (the motivating example and its table)
    "cheap": dict(kind="newsvendor", prices=dict(b=0.1, s=2.0), demand=dict(mean=100.0, std=10.0),
                  N=1000, seed=0, delta_grid=[0.0] + ONE_TO_TEN),
    # buy price at half the sell price: regret-optimal order equals ERM
    "balanced": dict(kind="newsvendor", prices=dict(b=1.0, s=2.0), demand=dict(mean=100.0, std=10.0),
                     N=1000, seed=0, delta_grid=[0.0] + ONE_TO_TEN),
    # expensive purchases
    "expensive": dict(kind="newsvendor", prices=dict(b=1.5, s=2.0), demand=dict(mean=100.0, std=10.0),
                      N=1000, seed=0, delta_grid=[0.0] + ONE_TO_TEN),
    "multi-factor": dict(kind="multi-factor", prices=dict(b=0.5, s=2.0),
                         demand=dict(weights=[1.3, 1.1, 0.8], mean=[20.0, 30.0, 50.0],
                                     cov=[[9.0, -3.0, 7.2], [-3.0, 25.0, -20.0], [7.2, -20.0, 64.0]]),
                         N=1000, seed=0, delta_grid=[0.0] + ONE_TO_TEN),
    "two-item": dict(kind="two-item", prices=dict(b_A=6.0, b_B=6.0, s_A=20.0, s_B=7.0, phi=0.1),
                     demand=dict(mean=[32.5, 40.0], std=[8.75, 5.0]),
                     N=100, seed=0, delta_grid=ONE_TO_TEN),
}


# ---------------------------------------------------------------------------
# data and losses


def generate_samples(config: ScenarioConfig) -> EmpiricalDataset:
    """Seeded Gaussian (or Gaussian-factor) demand, clipped at zero unless disabled."""
    rng = np.random.default_rng(config.seed)
    dem = config.demand
    if config.kind == "newsvendor":
        X = rng.normal(float(np.ravel(dem["mean"])[0]), float(np.ravel(dem["std"])[0]), config.N)[:, None]
    elif config.kind == "multi-factor":
        factors = rng.multivariate_normal(np.asarray(dem["mean"], dtype=float),
                                          np.asarray(dem["cov"], dtype=float), config.N,
                                          method="eigh")
        X = (factors @ np.asarray(dem["weights"], dtype=float))[:, None]
    else:
        mean = np.asarray(dem["mean"], dtype=float)
        std = np.asarray(dem["std"], dtype=float)
        X = rng.normal(mean[None, :], std[None, :], (config.N, 2))
    if config.clip:
        X = np.maximum(X, 0.0)
    return EmpiricalDataset(X)


def build_two_item_loss(b_A: float, b_B: float, s_A: float, s_B: float, phi: float) -> MaxAffineLoss:
    """Negative profit of the two-item model where a fraction ``phi`` of item-A
    buyers also buy item B, as a maximum of four affine pieces.

    Decisions are (theta_A, theta_B) and demand is (D_A, D_B).
    """
    if not 0 <= phi <= 1:
        raise InvalidArgument("phi must lie in [0, 1]")
    A = [[0.0, 0.0],
         [-s_A, 0.0],
         [0.0, -s_B],
         [-s_A - s_B * phi, -s_B]]
    B = [[b_A - s_A, b_B - s_B],
         [b_A, b_B - s_B],
         [b_A - s_A - s_B * phi, b_B],
         [b_A, b_B]]
    return MaxAffineLoss(A, B, np.zeros(4))


def two_item_loss_direct(theta, X, b_A, b_B, s_A, s_B, phi) -> np.ndarray:
    """Negative two-item profit evaluated from its defining formula."""
    tA, tB = np.asarray(theta, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sold_A = np.minimum(tA, X[:, 0])
    return b_A * tA + b_B * tB - s_A * sold_A - s_B * np.minimum(tB, X[:, 1] + phi * sold_A)


def scenario_loss(config: ScenarioConfig) -> MaxAffineLoss:
    pr = config.prices
    if config.kind == "two-item":
        return build_two_item_loss(pr["b_A"], pr["b_B"], pr["s_A"], pr["s_B"], pr["phi"])
    return newsvendor_loss(pr["b"], pr["s"])


def scenario_sets(config: ScenarioConfig) -> tuple[Polyhedron, Polyhedron]:
    """(decision set, support): both the nonnegative orthant."""
    return Polyhedron.nonnegative(config.d), Polyhedron.nonnegative(config.d)


# ---------------------------------------------------------------------------
# Gaussian profit heatmap


def gaussian_expected_profit(theta: float, mu: float, sigma: float, b: float, s: float) -> float:
    """Expected profit s E[min(theta, X)] - b theta for X ~ N(mu, sigma^2)."""
    if sigma <= 0:
        raise InvalidArgument("sigma must be positive")
    z = (theta - mu) / sigma
    leftover = (theta - mu) * gaussian.cdf(z) + sigma * gaussian.pdf(z)
    return float(s * (theta - leftover) - b * theta)


@dataclass(frozen=True)
class HeatmapCell:
    mu: float
    sigma: float
    in_ball: bool
    profit_diff: float


def default_heatmap_grid(mu0: float, sigma0: float, delta: float, points: int = 61):
    mus = np.linspace(mu0 - delta, mu0 + delta, points)
    sigmas = np.linspace(max(sigma0 - delta, 1e-3 * sigma0), sigma0 + delta, points)
    return [(float(m), float(s)) for m in mus for s in sigmas]


def heatmap_erm_vs_dro(config: ScenarioConfig, theta_erm: float, theta_dro: float, grid=None,
                       delta: Optional[float] = None, data: Optional[EmpiricalDataset] = None):
    """Profit of the ERM order minus profit of the DRO order under N(mu, sigma^2).

    Ball membership uses the 2-Wasserstein distance between Gaussians in one
    dimension, sqrt((mu - mu0)^2 + (sigma - sigma0)^2), against the Gaussian
    with the sample mean and standard deviation.
    """
    if config.d != 1:
        raise InvalidArgument("the heatmap is defined for single-item scenarios")
    data = data if data is not None else generate_samples(config)
    delta = float(config.delta_grid[-1] if delta is None else delta)
    x = data.points[:, 0]
    mu0, sigma0 = float(x.mean()), float(x.std())
    grid = grid if grid is not None else default_heatmap_grid(mu0, sigma0, delta)
    b, s = config.prices["b"], config.prices["s"]
    cells = []
    for mu, sigma in grid:
        dist = np.hypot(mu - mu0, sigma - sigma0)
        diff = gaussian_expected_profit(theta_erm, mu, sigma, b, s) - \
            gaussian_expected_profit(theta_dro, mu, sigma, b, s)
        cells.append(HeatmapCell(float(mu), float(sigma), bool(dist <= delta), float(diff)))
    return cells


def erm_decision(config: ScenarioConfig, data: EmpiricalDataset) -> np.ndarray:
    theta_set, _ = scenario_sets(config)
    return solve_erm(scenario_loss(config), data, theta_set)
