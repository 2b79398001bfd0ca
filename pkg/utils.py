"""
Shared plumbing for the command scripts: common flags, logging setup,
scenario loading and CSV/JSON output.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from config import ScenarioConfig, load_env_defaults, load_scenario
from errors import EngineError

logger = logging.getLogger("utils")

EXIT_VERIFY_FAILED = 1


def add_common_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--config", required=True, help="Scenario JSON file")
    parser.add_argument("--out", default=None, help="Output file (default: standard output)")
    parser.add_argument("--seed", type=int, default=None, help="Random seed (unsigned 64-bit)")
    parser.add_argument("--threads", type=int, default=None,
                        help="Worker threads (default: RS_ENGINE_THREADS or 1)")
    parser.add_argument("--paths", type=int, default=None, help="Number of Monte Carlo paths")
    parser.add_argument("--steps", type=int, default=None, help="Number of time steps")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="Output format")
    parser.add_argument("--log-level", default=None, help="Logging level (default: RS_ENGINE_LOG_LEVEL or INFO)")


def setup_logging(level: Optional[str] = None):
    """Configure root logging; only the command scripts call this"""
    level = (level or load_env_defaults()["RS_ENGINE_LOG_LEVEL"]).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def load_from_args(args: argparse.Namespace) -> ScenarioConfig:
    overrides = {"n_paths": args.paths, "n_steps": args.steps, "seed": args.seed, "threads": args.threads}
    config = load_scenario(args.config, overrides)
    logger.info(f"[Config] Loaded {args.config}: mode={config.scenario.mode}, "
                f"{config.sim.n_paths} paths x {config.sim.n_steps} steps, seed {config.sim.seed}")
    return config


def format_value(value: Any) -> str:
    """17 significant digits for floats so that CSV output round-trips"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def render_rows(rows: List[Dict[str, Any]], columns: Sequence[str], fmt: str) -> str:
    """Rows as CSV (header plus fixed column order) or as a JSON array"""
    if fmt == "json":
        return json.dumps([{c: row.get(c) for c in columns} for row in rows], indent=2) + "\n"
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    writer.writerows({c: format_value(row.get(c)) for c in columns} for row in rows)
    return buffer.getvalue()


def write_output(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write(text)
    logger.info(f"Results exported to {out}")


def run_guarded(command, args: argparse.Namespace) -> int:
    """Run a command body, mapping engine failures to their exit codes"""
    try:
        return command(args)
    except EngineError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
