#!/usr/bin/env python
"""
Check whether full collateralization (zero optimal variation margin) is optimal
for a scenario.

The verdict is data: the script exits 0 whatever it says.

Usage:
  python margin_check.py --config configs/example1.json [--out report.json]
"""
import argparse
import json
import logging
import sys

from margin_analysis import check_full_margin, check_full_margin_appendix
from sde_engine import simulate_clean_price
from utils import add_common_arguments, load_from_args, run_guarded, setup_logging, write_output

logger = logging.getLogger("margin_check")


def margin_check(args: argparse.Namespace) -> int:
    config = load_from_args(args)
    scenario = config.scenario
    paths = simulate_clean_price(scenario, config.sim)
    check = check_full_margin_appendix if scenario.appendix else check_full_margin
    report = check(scenario, paths, seed=config.sim.seed)
    write_output(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Full-margin diagnostics for a scenario")
    add_common_arguments(parser)
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    return run_guarded(margin_check, args)


if __name__ == "__main__":
    sys.exit(main())
