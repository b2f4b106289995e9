"""Command line front end: single prices, error tables, matrix dumps.

Configuration can come from a flat key=value file (keys named exactly like
the flags, plus optional market keys sigma1, sigma2, rho, r, strike,
maturity, xmax, ymax, alpha1, alpha2, epsilon); explicit flags override the
file, which overrides the option-style defaults (the parameter sets of the
published error tables).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .assembly import Scheme, assemble_operator, dump_matrix
from .grid import build_uniform_grid
from .harness import (
    ReferenceMode,
    RunConfig,
    dump_surface,
    run_manifest,
    run_table,
    write_outputs,
)
from .model import AMERICAN, BASKET_PUT, CALL_ON_MAX, EUROPEAN, MarketParams, PenaltyParams, ProblemSpec
from .timestepper import TimeGrid, solve

_FLAG_KEYS = (
    "grid", "steps", "theta", "scheme", "option", "beta", "kpow",
    "payoff", "reference", "out", "seed",
)
_MARKET_KEYS = (
    "sigma1", "sigma2", "rho", "r", "strike", "maturity",
    "xmax", "ymax", "alpha1", "alpha2", "epsilon",
)


def _read_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected key=value")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _FLAG_KEYS + _MARKET_KEYS:
                raise SystemExit(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmpfa-pricer",
        description="Finite-volume pricer for two-asset European and American options",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("price", "solve one surface and write it out"),
        ("table", "run an error study over grids and schemes"),
        ("dump-matrix", "write the assembled system matrix as triplets"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--grid", help="interior unknowns per axis, e.g. 49 or 49,59,69")
        p.add_argument("--steps", type=int, help="time steps M (default 64)")
        p.add_argument("--theta", type=float, help="theta of the Euler scheme (default 0.5)")
        p.add_argument(
            "--scheme",
            help="scheme name(s), comma separated: "
            + ", ".join(s.value for s in Scheme),
        )
        p.add_argument("--option", choices=[EUROPEAN, AMERICAN], help="option style")
        p.add_argument("--beta", type=float, help="penalty magnitude")
        p.add_argument("--kpow", type=float, help="penalty power parameter k (exponent is 1/k)")
        p.add_argument("--payoff", choices=[BASKET_PUT, CALL_ON_MAX], help="payoff")
        p.add_argument(
            "--reference",
            help="reference mode: analytic | stored:<path> | self:<Nref>,<Mref>",
        )
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed for stochastic references")
    return parser


def _merged_settings(args) -> dict:
    file_vals = _read_config_file(args.config) if args.config else {}
    option = args.option or file_vals.get("option") or EUROPEAN
    defaults = {
        "grid": "49",
        "steps": "64",
        "theta": "0.5",
        "scheme": Scheme.LMPFA_UP1.value,
        "option": option,
        "beta": "0" if option == EUROPEAN else "256",
        "kpow": "0.5",
        "payoff": CALL_ON_MAX if option == EUROPEAN else BASKET_PUT,
        "reference": "analytic" if option == EUROPEAN else "self:79,256",
        "out": "out",
        "seed": "0",
        "sigma1": "0.3",
        "sigma2": "0.3",
        "rho": "0.3",
        "r": "0.08",
        "strike": "100",
        "maturity": str(1.0 / 12.0) if option == EUROPEAN else str(1.0 / 6.0),
        "xmax": "300",
        "ymax": "300",
        "alpha1": "0.5",
        "alpha2": "0.5",
        "epsilon": "",
    }
    merged = dict(defaults)
    merged.update(file_vals)
    for key in _FLAG_KEYS:
        flag = getattr(args, key.replace("-", "_"), None)
        if flag is not None:
            merged[key] = str(flag)
    return merged


def _problem_from_settings(s: dict) -> ProblemSpec:
    market = MarketParams(
        sigma1=float(s["sigma1"]),
        sigma2=float(s["sigma2"]),
        rho=float(s["rho"]),
        r=float(s["r"]),
        strike=float(s["strike"]),
        maturity=float(s["maturity"]),
        alpha1=float(s["alpha1"]),
        alpha2=float(s["alpha2"]),
    )
    if s["option"] == EUROPEAN:
        return ProblemSpec.european(market, payoff=s["payoff"])
    eps = float(s["epsilon"]) if s["epsilon"] else 1e-8 * market.strike
    penalty = PenaltyParams(beta=float(s["beta"]), k=float(s["kpow"]), epsilon=eps)
    return ProblemSpec.american(market, penalty, payoff=s["payoff"])


def _config_from_settings(s: dict) -> RunConfig:
    spec = _problem_from_settings(s)
    schemes = tuple(Scheme.from_name(name.strip()) for name in s["scheme"].split(","))
    grids = tuple(int(part) for part in s["grid"].split(","))
    return RunConfig(
        spec=spec,
        schemes=schemes,
        grid_sizes=grids,
        steps=int(s["steps"]),
        theta=float(s["theta"]),
        x_max=float(s["xmax"]),
        y_max=float(s["ymax"]),
        reference=ReferenceMode.parse(s["reference"]),
        out_dir=s["out"],
        seed=int(s["seed"]),
    )


def _cmd_price(config: RunConfig) -> int:
    n = config.grid_sizes[0]
    grid = build_uniform_grid(n, config.x_max, config.y_max)
    surface = solve(
        config.spec,
        config.schemes[0],
        grid,
        TimeGrid(config.spec.market.maturity, config.steps),
        config.settings(),
    )
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "surface.txt")
    dump_surface(surface, path)
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as fh:
        json.dump(run_manifest(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
    k = config.spec.market.strike
    at_strike = float(
        _bilinear(surface.values, grid.x.nodes, grid.y.nodes, k, k)
    )
    print(f"surface written to {path}")
    print(f"V(K, K) = {at_strike:.6f} at tau = {surface.tau:g}")
    return 0


def _bilinear(values, xs, ys, x, y):
    i = np.clip(np.searchsorted(xs, x) - 1, 0, xs.size - 2)
    j = np.clip(np.searchsorted(ys, y) - 1, 0, ys.size - 2)
    tx = (x - xs[i]) / (xs[i + 1] - xs[i])
    ty = (y - ys[j]) / (ys[j + 1] - ys[j])
    return (
        values[i, j] * (1 - tx) * (1 - ty)
        + values[i + 1, j] * tx * (1 - ty)
        + values[i, j + 1] * (1 - tx) * ty
        + values[i + 1, j + 1] * tx * ty
    )


def _cmd_table(config: RunConfig) -> int:
    table = run_table(config, verbose=True)
    csv_path = write_outputs(config, table)
    print(table.to_csv(), end="")
    print(f"table written to {csv_path}")
    return 0


def _cmd_dump_matrix(config: RunConfig) -> int:
    n = config.grid_sizes[0]
    grid = build_uniform_grid(n, config.x_max, config.y_max)
    scheme = config.schemes[0]
    op = assemble_operator(scheme, grid, config.spec)
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "matrix.txt")
    dump_matrix(op, path, scheme.value)
    print(f"matrix written to {path}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    settings = _merged_settings(args)
    config = _config_from_settings(settings)
    if args.command == "price":
        return _cmd_price(config)
    if args.command == "table":
        return _cmd_table(config)
    if args.command == "dump-matrix":
        return _cmd_dump_matrix(config)
    raise SystemExit(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
