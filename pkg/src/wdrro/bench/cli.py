"""Command line interface: ``wdrro <subcommand> [options]``.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional

import numpy as np

from ..core import solve_dro
from ..errors import DRROError, InvalidArgument, UnsupportedConfiguration
from ..newsvendor import solve_drro_newsvendor
from ..regret import regret_eval
from ..relaxation import solve_drro_relaxed
from ..types import EmpiricalDataset
from .scenarios import (
    PRESETS,
    ScenarioConfig,
    generate_samples,
    heatmap_erm_vs_dro,
    scenario_loss,
    scenario_sets,
)
from .sweep import (
    SweepContext,
    _write,
    performance_table,
    run_sweep,
    write_heatmap_csv,
    write_sweep_csv,
    write_table_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON scenario file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
    common.add_argument("--data", help="demand CSV (one row per sample) replacing generated data")
    common.add_argument("--header", action="store_true", help="the --data file has a header row")
    common.add_argument("--out", help="output CSV (default: stdout)")
    common.add_argument("--seed", type=_u64, help="override the scenario seed")
    common.add_argument("--delta", type=_floats, help="radii, comma or space separated")
    common.add_argument("--workers", type=int, default=1, help="parallel processes over radii")
    common.add_argument("--tol", type=float, default=1e-6, help="tolerance of the outer search")

    parser = _Parser(prog="wdrro", description="Wasserstein distributionally robust regret optimization")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("erm", parents=[common], help="empirical risk minimizer")
    sub.add_parser("dro", parents=[common], help="Wasserstein DRO decision per radius")
    sub.add_parser("drro-newsvendor", parents=[common], help="exact single-item regret minimizer")
    sub.add_parser("drro-relax", parents=[common], help="relaxed regret minimizer per radius")
    rp = sub.add_parser("regret-eval", parents=[common], help="regret of a given decision")
    rp.add_argument("--theta", type=_floats, required=True, help="decision vector")
    rp.add_argument("--mode", default="multistart",
                    choices=["hill-climb", "multistart", "grid-certified", "relax-certified"])
    rp.add_argument("--starts", type=int, default=8, help="random starts for multistart modes")
    sp = sub.add_parser("sweep", parents=[common], help="all methods over the radius grid")
    sp.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 (reproducible bytes)")
    sub.add_parser("heatmap", parents=[common], help="ERM minus DRO profit over Gaussian demands")
    sub.add_parser("table", parents=[common], help="worst-case, best-case and regret comparison")
    tp = sub.add_parser("two-item", parents=[common], help="sweep of the two-item scenario")
    tp.add_argument("--no-timing", action="store_true", help="write wall_ms as 0 (reproducible bytes)")
    return parser


def _load_config(args, default_preset: str = "cheap") -> ScenarioConfig:
    if args.config and args.preset:
        raise InvalidArgument("give either --config or --preset, not both")
    if args.config:
        try:
            config = ScenarioConfig.load(args.config)
        except (OSError, ValueError) as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"cannot read config: {exc}") from exc
    else:
        config = ScenarioConfig.preset(args.preset or default_preset)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.delta is not None:
        changes["delta_grid"] = tuple(sorted(args.delta))
    return config.with_(**changes) if changes else config


def _load_data(args, config: ScenarioConfig) -> EmpiricalDataset:
    if not args.data:
        return generate_samples(config)
    try:
        X = np.loadtxt(args.data, delimiter=",", skiprows=1 if args.header else 0, ndmin=2)
    except (OSError, ValueError) as exc:
        raise InvalidArgument(f"cannot read data: {exc}") from exc
    if X.shape[1] != config.d:
        raise InvalidArgument(f"data has {X.shape[1]} columns, scenario needs {config.d}")
    return EmpiricalDataset(X)


def _emit(args, header, records) -> None:
    if args.out:
        _write(args.out, header, records)
    else:
        _write(sys.stdout, header, records)


def _theta_cols(d: int) -> list[str]:
    return [f"theta_{j + 1}" for j in range(d)]


def _run(args) -> None:
    two_item = args.command == "two-item"
    config = _load_config(args, "two-item" if two_item else "cheap")
    if two_item and config.kind != "two-item":
        raise InvalidArgument("the two-item command needs a two-item scenario")
    if args.workers < 1 or args.tol <= 0:
        raise InvalidArgument("--workers must be >= 1 and --tol positive")
    data = _load_data(args, config)
    loss = scenario_loss(config)
    theta_set, xi_set = scenario_sets(config)
    d = config.d
    cmd = args.command

    if cmd in ("sweep", "two-item"):
        rows = run_sweep(config, workers=args.workers, timing=not args.no_timing, tol=args.tol, data=data)
        write_sweep_csv(rows, args.out if args.out else sys.stdout)
        return
    if cmd == "table":
        delta = config.delta_grid[-1]
        write_table_csv(performance_table(config, delta, data, args.tol), args.out or sys.stdout)
        return
    if cmd == "heatmap":
        delta = config.delta_grid[-1]
        ctx = SweepContext(config, data, args.tol)
        theta_dro = solve_dro(loss, data, config.ball(delta), theta_set, xi_set)
        cells = heatmap_erm_vs_dro(config, float(ctx.erm[0]), float(theta_dro[0]), delta=delta, data=data)
        write_heatmap_csv(cells, args.out or sys.stdout)
        return
    if cmd == "erm":
        ctx = SweepContext(config, data, args.tol)
        _emit(args, _theta_cols(d), [list(ctx.erm)])
        return

    records = []
    for delta in config.delta_grid:
        ball = config.ball(delta)
        if cmd == "dro":
            records.append([delta, *solve_dro(loss, data, ball, theta_set, xi_set)])
        elif cmd == "drro-relax":
            theta, sol = solve_drro_relaxed(loss, data, ball, theta_set, xi_set)
            records.append([delta, *theta, sol.objective])
        elif cmd == "drro-newsvendor":
            if d != 1:
                raise InvalidArgument("drro-newsvendor needs a single-item scenario")
            ctx = SweepContext(config, data, args.tol)
            theta, cert = solve_drro_newsvendor(ctx.inst, ball, args.tol)
            records.append([delta, theta, cert.value, cert.branches["left"][0], cert.branches["right"][0]])
        elif cmd == "regret-eval":
            theta = np.asarray(args.theta, dtype=float)
            if theta.shape != (d,):
                raise InvalidArgument(f"--theta needs {d} entries")
            cert = regret_eval(theta, loss, data, ball, theta_set, xi_set, mode=args.mode, k=args.starts)
            records.append([delta, cert.value, cert.lower, cert.upper, cert.status, *cert.beta_star])
    headers = {
        "dro": ["delta", *_theta_cols(d)],
        "drro-relax": ["delta", *_theta_cols(d), "relaxed_regret"],
        "drro-newsvendor": ["delta", "theta_1", "regret", "left_value", "right_value"],
        "regret-eval": ["delta", "regret", "lower", "upper", "status", *[f"beta_{j + 1}" for j in range(d)]],
    }
    _emit(args, headers[cmd], records)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgError as exc:
        print(f"wdrro: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _run(args)
    except (InvalidArgument, UnsupportedConfiguration) as exc:
        print(f"wdrro: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DRROError as exc:
        print(f"wdrro: solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
