"""Radius sweeps, performance tables and their CSV forms."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from ..core import loss_composite, negated_loss_composite, solve_dro, solve_erm, worst_case_expectation
from ..errors import DRROError, InvalidArgument
from ..newsvendor import NewsvendorInstance, regret_newsvendor, solve_drro_newsvendor
from ..regret import regret_eval, solve_drro_exact
from ..relaxation import solve_drro_relaxed
from ..types import EmpiricalDataset, Polyhedron
from .scenarios import HeatmapCell, ScenarioConfig, generate_samples, scenario_loss, scenario_sets

METHODS = ("ERM", "DRO", "DRRO-exact", "DRRO-relax")


@dataclass(frozen=True)
class SweepRow:
    """One policy at one radius. ``regret`` is the bound-pair midpoint when
    ``status`` is "bound-pair"."""

    delta: float
    method: str
    theta: tuple
    regret: float
    status: str
    wall_ms: float


@dataclass(frozen=True)
class RegretReport:
    value: float
    status: str
    lower: float
    upper: float


class SweepContext:
    """Data and solvers shared by all radii of one scenario."""

    def __init__(self, config: ScenarioConfig, data: Optional[EmpiricalDataset] = None,
                 tol: float = 1e-6, regret_starts: int = 2):
        self.config = config
        self.data = data if data is not None else generate_samples(config)
        self.loss = scenario_loss(config)
        self.theta_set, self.xi_set = scenario_sets(config)
        self.tol = tol
        self.regret_starts = regret_starts
        self.erm = solve_erm(self.loss, self.data, self.theta_set)
        if config.d == 1:
            self.inst = NewsvendorInstance(config.prices["b"], config.prices["s"], self.data)

    def regret(self, theta, delta: float, beta_starts=()) -> RegretReport:
        ball = self.config.ball(delta)
        if self.config.d == 1:
            cert = regret_newsvendor(float(theta[0]), self.inst, ball)
            return RegretReport(cert.value, cert.status, cert.lower, cert.upper)
        cert = regret_eval(theta, self.loss, self.data, ball, self.theta_set, self.xi_set,
                           mode="relax-certified", k=self.regret_starts,
                           beta_starts=beta_starts)
        value = 0.5 * (cert.lower + cert.upper) if cert.status == "bound-pair" else cert.value
        return RegretReport(float(value), cert.status, float(cert.lower), float(cert.upper))

    def decision_box(self, delta: float) -> Polyhedron:
        reach = self.data.N ** (1.0 / self.config.p) * delta
        hi = self.data.points.max(axis=0) + reach + 1.0
        return Polyhedron.box(np.zeros(self.config.d), hi)

    def policy(self, method: str, delta: float) -> np.ndarray:
        ball = self.config.ball(delta)
        if method == "ERM":
            return self.erm.copy()
        if method == "DRO":
            return solve_dro(self.loss, self.data, ball, self.theta_set, self.xi_set)
        if method == "DRRO-relax":
            return solve_drro_relaxed(self.loss, self.data, ball, self.theta_set, self.xi_set)[0]
        if method == "DRRO-exact":
            if self.config.d == 1:
                return np.array([solve_drro_newsvendor(self.inst, ball, self.tol)[0]])
            if delta == 0:
                # zero radius: the regret is the ERM gap, minimized by ERM
                return self.erm.copy()
            # the relaxed and ERM decisions are good first queries
            warm = (self.policy("DRRO-relax", delta), self.erm)
            res = solve_drro_exact(self.loss, self.data, ball, self.decision_box(delta),
                                   self.xi_set, tol=max(self.tol, 1e-3), initial=warm)
            return np.asarray(res.theta, dtype=float)
        raise InvalidArgument(f"unknown method {method!r}")


def _rows_for_delta(ctx: SweepContext, delta: float, timing: bool, methods=METHODS) -> list[SweepRow]:
    rows = []
    for method in methods:
        start = time.perf_counter()
        try:
            theta = ctx.policy(method, delta)
            elapsed = (time.perf_counter() - start) * 1e3 if timing else 0.0
            rep = ctx.regret(theta, delta)
            rows.append(SweepRow(delta, method, tuple(float(t) for t in theta), rep.value,
                                 rep.status, float(round(elapsed, 3))))
        except DRROError as exc:
            elapsed = (time.perf_counter() - start) * 1e3 if timing else 0.0
            rows.append(SweepRow(delta, method, tuple([float("nan")] * ctx.config.d), float("nan"),
                                 f"failed:{type(exc).__name__}", float(round(elapsed, 3))))
    return rows


def _sweep_worker(args):
    config, data, delta, timing, tol, starts, methods = args
    ctx = SweepContext(config, data, tol, starts)
    return _rows_for_delta(ctx, delta, timing, methods)


def run_sweep(config: ScenarioConfig, out: Optional[str] = None, workers: int = 1,
              timing: bool = True, tol: float = 1e-6, regret_starts: int = 2,
              data: Optional[EmpiricalDataset] = None, methods=METHODS) -> list[SweepRow]:
    """Policies of every method at every radius with their regret.

    Radii run in parallel processes when ``workers > 1``; rows come back in
    grid order either way. With ``timing=False`` the wall_ms column is zero,
    which makes the CSV reproducible byte for byte.
    """
    data = data if data is not None else generate_samples(config)
    rows: list[SweepRow] = []
    if workers > 1 and len(config.delta_grid) > 1:
        jobs = [(config, data, d, timing, tol, regret_starts, tuple(methods)) for d in config.delta_grid]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_sweep_worker, jobs):
                rows.extend(chunk)
    else:
        ctx = SweepContext(config, data, tol, regret_starts)
        for delta in config.delta_grid:
            rows.extend(_rows_for_delta(ctx, delta, timing, methods))
    if out is not None:
        write_sweep_csv(rows, out)
    return rows


# ---------------------------------------------------------------------------
# performance table


@dataclass(frozen=True)
class TableRow:
    method: str
    theta: float
    worst_case: float
    best_case: float
    regret: float
    gap_worst: float
    gap_best: float
    gap_regret: float


def performance_table(config: ScenarioConfig, delta: float, data: Optional[EmpiricalDataset] = None,
                      tol: float = 1e-6) -> list[TableRow]:
    """Worst-case profit, best-case profit and regret of ERM, DRO and DRRO.

    Gaps are measured against the best method of each column (largest
    worst-case profit, largest best-case profit, smallest regret).
    """
    if config.d != 1:
        raise InvalidArgument("performance_table is defined for single-item scenarios")
    ctx = SweepContext(config, data, tol)
    ball = config.ball(delta)
    raw = []
    for method, tag in (("ERM", "ERM"), ("DRO", "DRO"), ("DRRO", "DRRO-exact")):
        theta = ctx.policy(tag, delta)
        worst = -worst_case_expectation(loss_composite(ctx.loss, theta), ball, ctx.xi_set, ctx.data).value
        best = worst_case_expectation(negated_loss_composite(ctx.loss, theta), ball, ctx.xi_set,
                                      ctx.data).value
        raw.append((method, float(theta[0]), float(worst), float(best), ctx.regret(theta, delta).value))
    top_worst = max(r[2] for r in raw)
    top_best = max(r[3] for r in raw)
    low_regret = min(r[4] for r in raw)
    return [TableRow(m, t, w, b, r, top_worst - w, top_best - b, r - low_regret) for m, t, w, b, r in raw]


# ---------------------------------------------------------------------------
# CSV


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def _write(path_or_buffer, header, records):
    own = isinstance(path_or_buffer, (str, Path))
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            writer.writerow([_fmt(v) for v in rec])
    finally:
        if own:
            fh.close()


def _read(src):
    """Records from a path or an open text stream."""
    text = src.read() if hasattr(src, "read") else Path(src).read_text()
    return list(csv.DictReader(io.StringIO(text)))


def sweep_header(d: int) -> list[str]:
    return ["delta", "method"] + [f"theta_{j + 1}" for j in range(d)] + ["regret", "status", "wall_ms"]


def write_sweep_csv(rows: list[SweepRow], out) -> None:
    d = len(rows[0].theta) if rows else 1
    _write(out, sweep_header(d),
           ([r.delta, r.method, *r.theta, r.regret, r.status, r.wall_ms] for r in rows))


def read_sweep_csv(src) -> list[SweepRow]:
    rows = []
    for rec in _read(src):
        d = sum(1 for k in rec if k.startswith("theta_"))
        rows.append(SweepRow(float(rec["delta"]), rec["method"],
                             tuple(float(rec[f"theta_{j + 1}"]) for j in range(d)),
                             float(rec["regret"]), rec["status"], float(rec["wall_ms"])))
    return rows


HEATMAP_HEADER = ["mu", "sigma", "in_ball", "profit_diff"]
TABLE_HEADER = ["method", "theta", "worst_case", "best_case", "regret", "gap_worst", "gap_best", "gap_regret"]


def write_heatmap_csv(cells: list[HeatmapCell], out) -> None:
    _write(out, HEATMAP_HEADER, ([c.mu, c.sigma, c.in_ball, c.profit_diff] for c in cells))


def read_heatmap_csv(src) -> list[HeatmapCell]:
    return [HeatmapCell(float(r["mu"]), float(r["sigma"]), r["in_ball"] == "true", float(r["profit_diff"]))
            for r in _read(src)]


def write_table_csv(rows: list[TableRow], out) -> None:
    _write(out, TABLE_HEADER, ([getattr(r, k) for k in TABLE_HEADER] for r in rows))


def read_table_csv(src) -> list[TableRow]:
    return [TableRow(r["method"], *(float(r[k]) for k in TABLE_HEADER[1:])) for r in _read(src)]
