"""
Full-margin diagnostics.

Checks the necessary conditions under which the optimal variation margin
vanishes identically (delta* = 0, full collateralization) and measures how far a
configuration is from them.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from collateral import CollateralRule
from contract_state import MarketPaths, Scenario
from errors import DomainError
from market_model import PiecewiseConstant
from pricing import scenario_p_hat
from sde_engine import aggregate_drift, simulate_reduced_values

logger = logging.getLogger("margin_analysis")

ZERO_TOLERANCE = 1e-12
OFF_GRID_POINTS = 10


@dataclass
class MarginReport:
    mode: str
    full_margin_optimal: bool
    flags: Dict[str, bool]
    drift_residual: float
    violations: List[str] = field(default_factory=list)
    aggregate_phi_zero: Optional[bool] = None
    p_hat: Optional[float] = None
    max_abs_delta: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def _off_grid(T: float, seed: int) -> np.ndarray:
    return np.sort(np.random.default_rng(seed).uniform(0.0, T, OFF_GRID_POINTS))


def curve_vanishes(curve: PiecewiseConstant, times: np.ndarray, off_grid: np.ndarray) -> bool:
    """Zero on every grid node and on the off-grid sample points"""
    values = np.concatenate((curve(times), curve(off_grid)))
    return bool(np.all(np.abs(values) <= ZERO_TOLERANCE))


def _hedge_vanishes(scenario: Scenario, who: str, paths: MarketPaths, off_grid: np.ndarray) -> bool:
    phi = paths.phi_A if who == "A" else paths.phi_B
    if np.any(np.abs(phi) > ZERO_TOLERANCE):
        return False
    custom = scenario.hedge.custom_A if who == "A" else scenario.hedge.custom_B
    mode = scenario.hedge.mode_A if who == "A" else scenario.hedge.mode_B
    if mode == "custom" and isinstance(custom, PiecewiseConstant):
        return curve_vanishes(custom, paths.times, off_grid)
    return True


def check_full_margin(scenario: Scenario, paths: MarketPaths, seed: int = 0) -> MarginReport:
    """
    Full-margin check for two risk-averse agents.

    Both agents must hedge the clean-price delta (phi_A = phi_B = 0), neither
    funding spread may be passed on (s_A = s_B = 0), and the drift of
    X + (s_A - s_B) t / gamma_A must vanish on the sampled paths.
    """
    if scenario.appendix:
        raise DomainError("check_full_margin needs the main mode")
    A, B = scenario.agent_A, scenario.agent_B
    times = paths.times
    off_grid = _off_grid(scenario.contract.maturity, seed)

    flags = {
        "phi_A": _hedge_vanishes(scenario, "A", paths, off_grid),
        "phi_B": _hedge_vanishes(scenario, "B", paths, off_grid),
        "s_A": curve_vanishes(A.s, times, off_grid),
        "s_B": curve_vanishes(B.s, times, off_grid),
    }
    aggregate_phi = paths.phi_A - scenario.gamma_ratio * paths.phi_B
    drift = aggregate_drift(scenario, paths, np.zeros_like(paths.v)) + (A.s(times) - B.s(times)) / A.gamma
    drift_residual = float(np.max(np.abs(drift)))

    violations = [name for name, ok in flags.items() if not ok]
    if drift_residual > ZERO_TOLERANCE:
        violations.append("drift")
    verdict = not violations

    implied = scenario_p_hat(scenario)
    bundle = simulate_reduced_values(implied, scenario, paths, CollateralRule.for_scenario(scenario))
    max_abs_delta = float(np.max(np.abs(bundle.delta)))
    logger.info(f"[MarginAnalysis] Full margin optimal: {verdict}; violations: {violations or 'none'}; "
                f"max |delta*| at p_hat = {max_abs_delta:.3e}")
    return MarginReport(
        mode="main",
        full_margin_optimal=verdict,
        flags=flags,
        drift_residual=drift_residual,
        violations=violations,
        aggregate_phi_zero=bool(np.all(np.abs(aggregate_phi) <= ZERO_TOLERANCE)),
        p_hat=implied if verdict else None,
        max_abs_delta=max_abs_delta,
    )


def check_full_margin_appendix(scenario: Scenario, paths: MarketPaths, seed: int = 0) -> MarginReport:
    """
    Full-margin check with a risk-neutral Agent A.

    Needs phi_B = 0, s_A = s_B = s_Am = 0 and a vanishing drift of
    v_B - (s_A - s_B) t / gamma_B.
    """
    if not scenario.appendix:
        raise DomainError("check_full_margin_appendix needs the appendix mode")
    if not scenario.market.intensities.h_delta.is_zero():
        raise DomainError("check_full_margin_appendix needs independent defaults")
    A, B = scenario.agent_A, scenario.agent_B
    times = paths.times
    off_grid = _off_grid(scenario.contract.maturity, seed)

    flags = {
        "phi_B": _hedge_vanishes(scenario, "B", paths, off_grid),
        "s_A": curve_vanishes(A.s, times, off_grid),
        "s_B": curve_vanishes(B.s, times, off_grid),
        "s_Am": curve_vanishes(A.s_m, times, off_grid),
    }
    lam = scenario.market.lambda_premium
    drift = (-B.s(times) * paths.K * paths.v + paths.phi_B * (lam + B.b) - paths.delta_B * B.b
             - (A.s(times) - B.s(times)) / B.gamma)
    drift_residual = float(np.max(np.abs(drift)))

    violations = [name for name, ok in flags.items() if not ok]
    if drift_residual > ZERO_TOLERANCE:
        violations.append("drift")
    verdict = not violations
    logger.info(f"[MarginAnalysis] Appendix full margin optimal: {verdict}; violations: {violations or 'none'}")
    return MarginReport(mode="appendix", full_margin_optimal=verdict, flags=flags,
                        drift_residual=drift_residual, violations=violations)
