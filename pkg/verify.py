#!/usr/bin/env python
"""
Run the verification oracles against a scenario.

Each oracle prints one row (name, status, discrepancy, tolerance, detail). The
script exits with 1 if any oracle fails; skipped oracles carry a notice.

Usage:
  python verify.py --config configs/example1.json [--mutate] [--format csv|json]

--mutate scales the closed-form collateral by 1.1; every collateral oracle is
expected to fail with it.
"""
import argparse
import logging
import sys
from functools import partial
from typing import Any, Dict, List

import numpy as np
from scipy.stats import norm

from collateral import (CollateralRule, appendix_score, brute_force_delta, delta_star_appendix,
                        delta_star_main, main_score)
from config import ScenarioConfig
from contract_state import AgentParams
from errors import SimulationError
from market_model import cir_bond_delta, cir_bond_price, risk_neutral_bond_mc
from objective import full_filtration_objective, reduced_objective, reduced_objective_paths
from pricing import FD_WARN, mpp_residual, scenario_p_hat
from sde_engine import identity_error, simulate_clean_price, simulate_reduced_values
from utils import EXIT_VERIFY_FAILED, add_common_arguments, load_from_args, render_rows, run_guarded, setup_logging, write_output

logger = logging.getLogger("verify")

COLUMNS = ["oracle", "status", "discrepancy", "tolerance", "detail"]

MUTATION_SCALE = 1.1
COLLATERAL_DRAWS = 1000
DELTA_TOLERANCE = 1e-6
SCORE_TOLERANCE = 1e-10
CI_LEVEL = 0.99
FIXED_DELTAS = (-0.5, 0.0, 0.5)
# Relative allowance for summation order when both estimators are deterministic
ROUNDOFF = 1e-10


def _row(oracle: str, ok: bool, discrepancy: float, tolerance: float, detail: str = "") -> Dict[str, Any]:
    status = "pass" if ok else "fail"
    log = logger.info if ok else logger.error
    log(f"[Verify] {oracle}: {status} (discrepancy {discrepancy:.3e}, tolerance {tolerance:.1e}) {detail}")
    return {"oracle": oracle, "status": status, "discrepancy": float(discrepancy),
            "tolerance": float(tolerance), "detail": detail}


def _skip(oracle: str, detail: str) -> Dict[str, Any]:
    logger.info(f"[Verify] {oracle}: skipped ({detail})")
    return {"oracle": oracle, "status": "skip", "discrepancy": None, "tolerance": None, "detail": detail}


def _agent(name: str, rng: np.random.Generator, risk_neutral: bool = False) -> AgentParams:
    return AgentParams(name=name, gamma=0.0 if risk_neutral else rng.uniform(0.5, 3.0),
                       nu=rng.uniform(-0.5, 0.5), L=rng.uniform(0.2, 1.0), risk_neutral=risk_neutral)


def check_cir_closed_form(config: ScenarioConfig) -> List[Dict[str, Any]]:
    rate = config.scenario.market.rate
    if rate.kind != "cir":
        return [_skip("cir_bond_price_mc", "constant short rate"), _skip("cir_bond_delta_fd", "constant short rate")]
    T = config.scenario.contract.maturity
    sim = config.sim
    mc, stderr = risk_neutral_bond_mc(rate, T, sim.n_paths, max(200, sim.n_steps), sim.seed)
    closed = float(cir_bond_price(0.0, rate.r0, rate, T))
    rows = [_row("cir_bond_price_mc", abs(mc - closed) <= 3 * stderr, abs(mc - closed), 3 * stderr,
                 f"closed form {closed:.10f}, MC {mc:.10f}")]

    t, r = np.meshgrid(np.linspace(0.0, 0.99 * T, 10), np.linspace(0.005, 0.1, 10))
    step = 1e-6
    de_dr = (cir_bond_price(t, r + step, rate, T) - cir_bond_price(t, r - step, rate, T)) / (2 * step)
    z = cir_bond_delta(t, r, rate, T, 1.0)
    gap = float(np.max(np.abs(z - rate.rho * np.sqrt(r) * de_dr) / np.abs(z)))
    rows.append(_row("cir_bond_delta_fd", gap <= 1e-6, gap, 1e-6, "100-point (t, r) grid"))
    return rows


def check_collateral_main(rule: CollateralRule, seed: int, draws: int = COLLATERAL_DRAWS) -> Dict[str, Any]:
    """Closed-form margin against the golden-section oracle on random parameter draws"""
    rng = np.random.default_rng(seed)
    worst_delta = worst_score = 0.0
    for _ in range(draws):
        A, B = _agent("A", rng), _agent("B", rng)
        lam, K = rng.uniform(0.5, 2.0), rng.uniform(0.9, 1.1)
        h_A, h_B = rng.uniform(0.01, 0.1, 2)
        p, x = rng.uniform(-0.5, 0.5, 2)
        closed = rule.scale * float(delta_star_main(p, x, A, B, lam, K))
        score = partial(main_score, p=p, x=x, agent_A=A, agent_B=B, lam=lam, K=K, h_A=h_A, h_B=h_B)
        oracle, best = brute_force_delta(score)
        worst_delta = max(worst_delta, abs(closed - oracle))
        worst_score = max(worst_score, best - float(score(closed)))
    ok = worst_delta <= DELTA_TOLERANCE and worst_score <= SCORE_TOLERANCE
    return _row("collateral_main_brute_force", ok, worst_delta, DELTA_TOLERANCE,
                f"{draws} draws, worst objective gap {worst_score:.3e}")


def check_collateral_appendix(rule: CollateralRule, seed: int, draws: int = COLLATERAL_DRAWS) -> Dict[str, Any]:
    rng = np.random.default_rng(seed + 1)
    worst_delta = worst_score = 0.0
    for _ in range(draws):
        A, B = _agent("A", rng, risk_neutral=True), _agent("B", rng)
        args = dict(v_B=rng.uniform(-0.5, 0.5), agent_A=A, agent_B=B, lam=rng.uniform(0.5, 2.0),
                    K=rng.uniform(0.9, 1.1), G=rng.uniform(0.5, 1.0), I=rng.uniform(0.0, 0.05),
                    s_Am=rng.uniform(0.0, 0.02), h_A=rng.uniform(0.01, 0.1), h_B=rng.uniform(0.01, 0.1),
                    delta_E=rng.uniform(-0.5, 0.5))
        closed = rule.scale * float(delta_star_appendix(**args))
        score = partial(appendix_score, **args)
        oracle, best = brute_force_delta(score, split=-args["delta_E"])
        worst_delta = max(worst_delta, abs(closed - oracle))
        worst_score = max(worst_score, best - float(score(closed)))
    ok = worst_delta <= DELTA_TOLERANCE and worst_score <= SCORE_TOLERANCE
    return _row("collateral_appendix_brute_force", ok, worst_delta, DELTA_TOLERANCE,
                f"{draws} draws, worst objective gap {worst_score:.3e}")


def check_reduction(config: ScenarioConfig, paths) -> List[Dict[str, Any]]:
    """Reduced vs full-filtration objective, 99% confidence intervals must overlap"""
    scenario = config.scenario
    if not scenario.market.intensities.h_delta.is_zero():
        return [_skip("reduction_ci_overlap", "dependent defaults (h_delta != 0)")]
    z = norm.ppf(0.5 + CI_LEVEL / 2)
    p = scenario_p_hat(scenario) or 0.0
    rows = []
    for delta0 in FIXED_DELTAS:
        bundle = simulate_reduced_values(p, scenario, paths, CollateralRule.fixed(delta0))
        reduced = reduced_objective(bundle, scenario)
        full = full_filtration_objective(bundle, scenario)
        # CI overlap, with a round-off floor for zero-variance estimates
        tolerance = z * (reduced.stderr + full.stderr) + ROUNDOFF * max(1.0, abs(full.value))
        discrepancy = abs(reduced.value - full.value)
        rows.append(_row(f"reduction_ci_overlap[delta0={delta0:+g}]", discrepancy <= tolerance, discrepancy, tolerance,
                         f"reduced {reduced.value:.8g}, full {full.value:.8g}"))
    return rows


def check_identities(config: ScenarioConfig, paths, rule: CollateralRule) -> List[Dict[str, Any]]:
    scenario = config.scenario
    if scenario.appendix:
        return [_skip("fhat_g_identity", "appendix mode"), _skip("x_identity", "appendix mode"),
                _skip("mpp_envelope_fd", "appendix mode")]
    bundle = simulate_reduced_values(scenario_p_hat(scenario), scenario, paths, rule)
    rows = []
    try:
        reduced_objective_paths(bundle, scenario)
        rows.append(_row("fhat_g_identity", True, 0.0, 1e-8, "per-path g-form vs beta-form"))
    except SimulationError as e:
        rows.append(_row("fhat_g_identity", False, float("inf"), 1e-8, str(e)))
    gap = identity_error(bundle, scenario.gamma_ratio)
    rows.append(_row("x_identity", gap <= 1e-10, gap, 1e-10, "X vs v_A - ratio (v_B - v_B0)"))
    residual = mpp_residual(bundle, scenario, rule)
    rows.append(_row("mpp_envelope_fd", residual.fd_gap <= FD_WARN, residual.fd_gap, FD_WARN,
                     f"kink-node fraction {residual.q_fraction:.3e}"))
    return rows


def verify(args: argparse.Namespace) -> int:
    config = load_from_args(args)
    scenario = config.scenario
    scale = MUTATION_SCALE if args.mutate else 1.0
    if args.mutate:
        logger.warning(f"[Verify] Mutation self-test: closed-form collateral scaled by {scale}")
    rule = CollateralRule.for_scenario(scenario, scale=scale)
    paths = simulate_clean_price(scenario, config.sim)

    rows = check_cir_closed_form(config)
    rows.append(check_collateral_main(CollateralRule("closed_form_main", scale=scale), config.sim.seed, args.draws))
    rows.append(check_collateral_appendix(CollateralRule("closed_form_appendix", scale=scale), config.sim.seed,
                                          args.draws))
    rows.extend(check_reduction(config, paths))
    rows.extend(check_identities(config, paths, rule))

    write_output(render_rows(rows, COLUMNS, args.format), args.out)
    failed = [row["oracle"] for row in rows if row["status"] == "fail"]
    if failed:
        logger.error(f"[Verify] {len(failed)} oracle(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY_FAILED
    logger.info("[Verify] All oracles passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Run verification oracles on a scenario")
    add_common_arguments(parser)
    parser.add_argument("--mutate", action="store_true", help="Corrupt the collateral formula (self-test)")
    parser.add_argument("--draws", type=int, default=COLLATERAL_DRAWS,
                        help="Random parameter draws per collateral oracle")
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    return run_guarded(verify, args)


if __name__ == "__main__":
    sys.exit(main())
