"""
Agreement-cost solvers.

Closed forms for the deterministic motivation model and for the full-margin
case, plus a Brent root finder on the Monte Carlo maximum-principle residual.
All residual evaluations of one solve share the same MarketPaths, so the
residual is a deterministic function of p.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np
from scipy.optimize import brentq

from collateral import CollateralRule, psi_A, psi_B
from contract_state import MarketPaths, PathBundle, Scenario, agent_utility
from errors import SolverError
from objective import check_integrability, fhat_integrand, reduced_objective, reduced_objective_paths
from sde_engine import simulate_reduced_values

logger = logging.getLogger("pricing")

FD_STEP = 1e-5
FD_WARN = 1e-4
MAX_Q_FRACTION = 1e-3
# One-sided derivatives further apart than this (relative) mark a kink node
KINK_TOLERANCE = 1e-3
PRICE_CAP = 1e3
SLOPE_STEP = 1e-4


@dataclass
class ResidualEstimate:
    value: float
    stderr: float
    q_fraction: float = 0.0
    fd_gap: float = 0.0


@dataclass
class RiskSharingSolution:
    p_star: float
    residual: float
    residual_stderr: float
    slope: float
    p_stderr: float
    iterations: int
    evaluations: int
    converged: bool
    p_hat: Optional[float]
    objective: float
    objective_stderr: float
    delta_mean: float
    delta_p5: float
    delta_p95: float
    delta_abs_mean: float
    delta_abs_max: float
    q_fraction: float
    clamped_fraction: float
    delta_l2: float

    def to_row(self) -> Dict[str, object]:
        return asdict(self)


def motivation_price(R_A: float, R_B: float, r: float, T: float, lam: float) -> float:
    """Agreement cost of the deterministic one-period bond model"""
    return -(math.exp(-R_A * T) + math.exp(-R_B * T)) / 2 + math.exp(-r * T) - math.log(lam) / 2


def motivation_objective(p: float, R_A: float, R_B: float, r: float, T: float, lam: float) -> float:
    """U(-e^{-rT} + p + e^{-R_A T}) + lam U(e^{-rT} - p - e^{-R_B T}) with U(x) = -exp(-x)"""
    wealth_A = -math.exp(-r * T) + p + math.exp(-R_A * T)
    wealth_B = math.exp(-r * T) - p - math.exp(-R_B * T)
    return -math.exp(-wealth_A) - lam * math.exp(-wealth_B)


def p_hat(gamma_A: float, gamma_B: float, nu_A: float, nu_B: float, lam: float) -> float:
    """Price at which U_A'(nu_A + p) = lam U_B'(nu_B - p)"""
    total = gamma_A + gamma_B
    return (gamma_B * nu_B - gamma_A * nu_A) / total - math.log(lam * gamma_B / gamma_A) / total


def scenario_p_hat(scenario: Scenario) -> Optional[float]:
    """p_hat for two risk-averse agents, None otherwise"""
    if scenario.appendix or scenario.agent_A.risk_neutral:
        return None
    A, B = scenario.agent_A, scenario.agent_B
    return p_hat(A.gamma, B.gamma, A.nu, B.nu, scenario.contract.lam)


def _fhat_at(p: float, X: np.ndarray, bundle: PathBundle, scenario: Scenario, rule: CollateralRule):
    """f_hat on nodes k < n with the collateral re-optimized at (p, X)"""
    paths = bundle.market
    delta = rule.evaluate(p, scenario, paths, X=X)
    return fhat_integrand(delta[:, :-1], X[:, :-1], p, bundle.beta[:, :-1], scenario,
                          paths.K[:-1], paths.h_A[:-1], paths.h_B[:-1])


def envelope_integrand(bundle: PathBundle, scenario: Scenario) -> np.ndarray:
    """(d_p + d_x) f_hat on nodes k < n with the collateral held at its optimum"""
    paths = bundle.market
    A, B = scenario.agent_A, scenario.agent_B
    _, du_B0 = agent_utility(B, B.nu - bundle.p)
    _, du_A = agent_utility(A, bundle.X[:, :-1])
    delta = bundle.delta[:, :-1]
    K, h_A, h_B = paths.K[:-1], paths.h_A[:-1], paths.h_B[:-1]
    return bundle.beta[:, :-1] * (du_A * psi_A(delta, h_A, h_B, A.L, B.L, A.gamma)
                                  - scenario.contract.lam * du_B0 * psi_B(delta, h_A, h_B, A.L, B.L, B.gamma, K))


def mpp_residual_paths(bundle: PathBundle, scenario: Scenario, rule: CollateralRule):
    """
    Per-path maximum-principle residual in the main mode.

    Partials of f_hat use the envelope rule (collateral held fixed); a central
    difference along (p, x) -> (p + h, x + h) re-optimizes the collateral and
    serves as a check. Nodes whose one-sided differences disagree are kink nodes
    and take the average of the two.

    Returns:
        (per-path residual, kink-node fraction, max relative envelope/difference gap)
    """
    paths = bundle.market
    A, B = scenario.agent_A, scenario.agent_B
    lam = scenario.contract.lam
    p = bundle.p
    beta = bundle.beta
    _, du_B0 = agent_utility(B, B.nu - p)

    _, du_A_T = agent_utility(A, bundle.X[:, -1])
    terminal = beta[:, -1] * (du_A_T - lam * du_B0)

    X = bundle.X[:, :-1]
    delta = bundle.delta[:, :-1]
    K, h_A, h_B = paths.K[:-1], paths.h_A[:-1], paths.h_B[:-1]
    envelope = envelope_integrand(bundle, scenario)

    h = FD_STEP
    f_up = _fhat_at(p + h, bundle.X + h, bundle, scenario, rule)
    f_mid = fhat_integrand(delta, X, p, beta[:, :-1], scenario, K, h_A, h_B)
    f_down = _fhat_at(p - h, bundle.X - h, bundle, scenario, rule)
    forward, backward = (f_up - f_mid) / h, (f_mid - f_down) / h
    central = (f_up - f_down) / (2 * h)

    level = np.maximum(np.maximum(np.abs(forward), np.abs(backward)), np.abs(f_mid))
    kink = np.abs(forward - backward) > KINK_TOLERANCE * level
    q_fraction = float(np.count_nonzero(kink) / kink.size)
    integrand = np.where(kink, 0.5 * (forward + backward), envelope)

    scale = max(float(np.max(np.abs(envelope))), float(np.max(np.abs(f_mid))), np.finfo(float).tiny)
    fd_gap = float(np.max(np.abs(np.where(kink, 0.0, envelope - central)))) / scale
    if fd_gap > FD_WARN:
        logger.warning(f"[Pricing] Envelope and finite-difference partials differ by {fd_gap:.3e} at p={p:.6g}")
    return terminal + integrand.sum(axis=1) * paths.dt, q_fraction, fd_gap


def mpp_residual(bundle: PathBundle, scenario: Scenario, rule: CollateralRule) -> ResidualEstimate:
    """
    Monte Carlo estimate of the derivative of the objective in p.

    Main mode: E[beta_T U_A'(X_T) - lam beta_T U_B'(nu_B - p) + int (d_p f_hat + d_x f_hat) dt].
    Appendix mode: central difference of the reduced objective with common
    random numbers.
    """
    check_integrability(bundle)
    if scenario.appendix:
        paths = bundle.market
        up = reduced_objective_paths(simulate_reduced_values(bundle.p + FD_STEP, scenario, paths, rule), scenario)
        down = reduced_objective_paths(simulate_reduced_values(bundle.p - FD_STEP, scenario, paths, rule), scenario)
        per_path, q_fraction, fd_gap = (up - down) / (2 * FD_STEP), 0.0, 0.0
    else:
        per_path, q_fraction, fd_gap = mpp_residual_paths(bundle, scenario, rule)
    if q_fraction > MAX_Q_FRACTION:
        raise SolverError(f"non-differentiable set hit on {q_fraction:.3%} of nodes at p={bundle.p:.6g} "
                          f"(limit {MAX_Q_FRACTION:.1%})")
    n = per_path.size
    return ResidualEstimate(float(per_path.mean()), float(per_path.std(ddof=1) / np.sqrt(n)), q_fraction, fd_gap)


class _Residual:
    """Residual as a function of p on fixed paths, counting evaluations"""

    def __init__(self, scenario: Scenario, paths: MarketPaths, rule: CollateralRule):
        self.scenario = scenario
        self.paths = paths
        self.rule = rule
        self.evaluations = 0
        self.cache: Dict[float, ResidualEstimate] = {}

    def estimate(self, p: float) -> ResidualEstimate:
        if p not in self.cache:
            self.evaluations += 1
            bundle = simulate_reduced_values(p, self.scenario, self.paths, self.rule)
            self.cache[p] = mpp_residual(bundle, self.scenario, self.rule)
        return self.cache[p]

    def __call__(self, p: float) -> float:
        return self.estimate(p).value


def _expand_bracket(residual: _Residual, hint: float):
    """Doubling steps away from hint until the residual changes sign"""
    value = residual(hint)
    if value == 0.0:
        return hint, hint
    direction = 1.0 if value > 0 else -1.0
    step = 1.0
    previous, prev_value = hint, value
    while True:
        p = hint + direction * step
        if abs(p) > PRICE_CAP:
            raise SolverError(f"no sign change of the residual within |p| <= {PRICE_CAP:g}")
        current = residual(p)
        logger.debug(f"[Pricing] Bracket step p={p:.6g} residual={current:.6g}")
        # Residual must fall as p rises
        if direction * (current - prev_value) > 0:
            raise SolverError(f"residual is not decreasing in p between {previous:.6g} and {p:.6g}")
        if np.sign(current) != np.sign(value):
            return (previous, p) if direction > 0 else (p, previous)
        previous, prev_value = p, current
        step *= 2


def delta_summary(bundle: PathBundle) -> Dict[str, float]:
    delta = bundle.delta[:, :-1]
    return {
        "delta_mean": float(delta.mean()),
        "delta_p5": float(np.percentile(delta, 5)),
        "delta_p95": float(np.percentile(delta, 95)),
        "delta_abs_mean": float(np.abs(delta).mean()),
        "delta_abs_max": float(np.abs(delta).max()),
    }


def solve_p_star(scenario: Scenario, paths: MarketPaths, rule: CollateralRule = None,
                 hint: Optional[float] = None, xtol: float = 1e-10) -> RiskSharingSolution:
    """
    Root of the maximum-principle residual by Brent's method.

    Args:
        scenario: contract and market description
        paths: clean-price paths reused for every residual evaluation
        rule: collateral rule, by default the one the scenario implies
        hint: bracket starting point; p_hat when defined, else 0
        xtol: absolute tolerance on p
    """
    rule = rule or CollateralRule.for_scenario(scenario)
    implied = scenario_p_hat(scenario)
    if hint is None:
        hint = implied if implied is not None else 0.0
    residual = _Residual(scenario, paths, rule)
    lo, hi = _expand_bracket(residual, hint)

    if lo == hi:
        p_star, iterations, converged = lo, 0, True
    else:
        p_star, info = brentq(residual, lo, hi, xtol=xtol, maxiter=100, full_output=True, disp=False)
        iterations, converged = info.iterations, info.converged
    if not converged:
        raise SolverError(f"Brent did not converge in [{lo:.6g}, {hi:.6g}]")
    logger.info(f"[Pricing] p* = {p_star:.10g} after {iterations} Brent iterations, "
                f"{residual.evaluations} residual evaluations")

    at_root = residual.estimate(p_star)
    slope = (residual(p_star + SLOPE_STEP) - residual(p_star - SLOPE_STEP)) / (2 * SLOPE_STEP)
    if slope >= 0:
        raise SolverError(f"residual is not decreasing at p* (slope {slope:.6g})")
    bundle = simulate_reduced_values(p_star, scenario, paths, rule)
    objective = reduced_objective(bundle, scenario)

    return RiskSharingSolution(
        p_star=float(p_star),
        residual=at_root.value,
        residual_stderr=at_root.stderr,
        slope=float(slope),
        p_stderr=at_root.stderr / abs(slope),
        iterations=int(iterations),
        evaluations=residual.evaluations,
        converged=bool(converged),
        p_hat=implied,
        objective=objective.value,
        objective_stderr=objective.stderr,
        q_fraction=at_root.q_fraction,
        clamped_fraction=bundle.clamped_fraction,
        delta_l2=objective.delta_l2,
        **delta_summary(bundle),
    )
