#!/usr/bin/env python
"""
Comparative statics: solve the contract over a grid of one scenario parameter.

Every grid point reuses the same seed, so rows share their random numbers.

Usage:
  python sweep.py --config configs/example1.json --param lambda --grid 0.5:2:7

Parameters: lambda (bargaining weight), s_A (constant funding spread of A),
L_A (loss rate of A).
"""
import argparse
import logging
import sys
from dataclasses import replace
from typing import List

import numpy as np

from config import ScenarioConfig
from contract_state import Scenario
from errors import ConfigError, DomainError
from market_model import PiecewiseConstant
from pricing import motivation_price, solve_p_star
from sde_engine import simulate_clean_price
from utils import add_common_arguments, load_from_args, render_rows, run_guarded, setup_logging, write_output

logger = logging.getLogger("sweep")

PARAMS = ("lambda", "s_A", "L_A")
COLUMNS = ["param", "value", "p_star", "p_stderr", "mean_abs_delta", "p_hat", "p_motivation"]


def parse_grid(text: str) -> List[float]:
    """'a:b:n' -> n evenly spaced points from a to b"""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError("--grid", f"expected a:b:n, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError("--grid", f"expected a:b:n, got {text!r}")
    if count < 1:
        raise ConfigError("--grid", "grid is empty")
    return [float(v) for v in np.linspace(start, stop, count)]


def with_param(scenario: Scenario, param: str, value: float) -> Scenario:
    """Copy of the scenario with one parameter replaced"""
    try:
        if param == "lambda":
            return replace(scenario, contract=replace(scenario.contract, lam=value))
        if param == "s_A":
            return replace(scenario, agent_A=replace(scenario.agent_A, s=PiecewiseConstant.constant(value)))
        if param == "L_A":
            return replace(scenario, agent_A=replace(scenario.agent_A, L=value))
    except DomainError as e:
        raise ConfigError("--grid", f"{param}={value!r}: {e}")
    raise ConfigError("--param", f"must be one of {', '.join(PARAMS)}, got {param!r}")


def sweep_rows(config: ScenarioConfig, param: str, grid: List[float]) -> List[dict]:
    rows = []
    for value in grid:
        scenario = with_param(config.scenario, param, value)
        paths = simulate_clean_price(scenario, config.sim)
        solution = solve_p_star(scenario, paths)
        row = {"param": param, "value": value, "p_star": solution.p_star, "p_stderr": solution.p_stderr,
               "mean_abs_delta": solution.delta_abs_mean, "p_hat": solution.p_hat}
        if config.motivation is not None:
            m = config.motivation
            row["p_motivation"] = motivation_price(m["R_A"], m["R_B"], m["r"], m["T"], scenario.contract.lam)
        logger.info(f"[Sweep] {param}={value:.6g}: p* = {solution.p_star:.10g}")
        rows.append(row)
    return rows


def run_sweep(args: argparse.Namespace) -> int:
    grid = parse_grid(args.grid)
    config = load_from_args(args)
    rows = sweep_rows(config, args.param, grid)
    write_output(render_rows(rows, COLUMNS, args.format), args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Solve the contract over a parameter grid")
    add_common_arguments(parser)
    parser.add_argument("--param", choices=PARAMS, required=True, help="Parameter to sweep")
    parser.add_argument("--grid", required=True, help="Grid as a:b:n")
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    return run_guarded(run_sweep, args)


if __name__ == "__main__":
    sys.exit(main())
