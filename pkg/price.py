#!/usr/bin/env python
"""
Solve the risk-sharing contract (agreement cost p* and optimal margin) for a scenario.

Usage:
  python price.py --config configs/example1.json [--out result.csv] [--seed N]
                  [--threads N] [--paths N] [--steps N] [--format csv|json]

Example:
  python price.py --config configs/example2.json --paths 20000 --format json
"""
import argparse
import logging
import sys

from pricing import motivation_price, solve_p_star
from sde_engine import simulate_clean_price
from utils import add_common_arguments, load_from_args, render_rows, run_guarded, setup_logging, write_output

logger = logging.getLogger("price")

COLUMNS = [
    "p_star", "residual", "residual_stderr", "p_stderr", "slope", "iterations", "evaluations",
    "p_hat", "p_motivation", "delta_mean", "delta_p5", "delta_p95", "delta_abs_mean", "delta_abs_max",
    "objective", "objective_stderr", "q_fraction", "clamped_fraction", "delta_l2",
    "n_paths", "n_steps", "seed",
]


def price(args: argparse.Namespace) -> int:
    config = load_from_args(args)
    scenario, sim = config.scenario, config.sim
    paths = simulate_clean_price(scenario, sim)
    solution = solve_p_star(scenario, paths)

    row = solution.to_row()
    row.update(n_paths=sim.n_paths, n_steps=sim.n_steps, seed=sim.seed)
    if config.motivation is not None:
        m = config.motivation
        row["p_motivation"] = motivation_price(m["R_A"], m["R_B"], m["r"], m["T"], scenario.contract.lam)
    logger.info(f"[Price] p* = {solution.p_star:.10g} (+/- {solution.p_stderr:.3g}), p_hat = {solution.p_hat}")
    write_output(render_rows([row], COLUMNS, args.format), args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Solve the risk-sharing contract for a scenario")
    add_common_arguments(parser)
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    return run_guarded(price, args)


if __name__ == "__main__":
    sys.exit(main())
