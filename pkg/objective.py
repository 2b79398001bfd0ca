"""
Monte Carlo estimates of the risk-sharing objective.

The reduced objective works on survival-weighted reduced values; the
full-filtration objective samples the default times and freezes wealth at the
first default, which checks the reduction numerically.
"""
import logging
from dataclasses import dataclass

import numpy as np

from contract_state import PathBundle, Scenario, agent_utility, breach_amount
from collateral import psi_A, psi_B
from errors import DomainError, IntegrabilityError, SimulationError
from market_model import default_times_from_uniforms

logger = logging.getLogger("objective")

# Paths allowed to need exponent clamping before an estimate is refused
MAX_CLAMPED_FRACTION = 1e-3

# Per-path tolerance between the g-form and the beta-form of the objective
FORM_TOLERANCE = 1e-8


@dataclass
class ObjectiveEstimate:
    value: float
    stderr: float
    n_paths: int
    clamped_fraction: float = 0.0
    # Sample E[int delta^2 dt]
    delta_l2: float = 0.0

    def interval(self, z: float):
        return self.value - z * self.stderr, self.value + z * self.stderr


def _estimate(per_path: np.ndarray, bundle: PathBundle) -> ObjectiveEstimate:
    n = per_path.size
    delta_sq = bundle.delta[:, :-1] ** 2
    return ObjectiveEstimate(
        value=float(per_path.mean()),
        stderr=float(per_path.std(ddof=1) / np.sqrt(n)),
        n_paths=n,
        clamped_fraction=bundle.clamped_fraction,
        delta_l2=float(delta_sq.sum(axis=1).mean() * bundle.market.dt),
    )


def check_integrability(bundle: PathBundle):
    if bundle.clamped_fraction > MAX_CLAMPED_FRACTION:
        raise IntegrabilityError(
            f"{bundle.clamped_fraction:.2%} of paths needed exponent clamping "
            f"(limit {MAX_CLAMPED_FRACTION:.1%})")


def g_integrand(delta, v_A, v_B, scenario: Scenario, K, G, h_A, h_B, delta_E=0.0):
    """
    Survival-weighted expected utility rate at default.

    G [h_A (U_A(v_A + Theta_A) + lam U_B(v_B - K Theta_A))
       + h_B (U_A(v_A + Theta_B) + lam U_B(v_B - K Theta_B))]
    """
    A, B = scenario.agent_A, scenario.agent_B
    lam = scenario.contract.lam
    theta_A = breach_amount(delta, "A", A.L, B.L, delta_E)
    theta_B = breach_amount(delta, "B", A.L, B.L, delta_E)
    on_A = agent_utility(A, v_A + theta_A)[0] + lam * agent_utility(B, v_B - K * theta_A)[0]
    on_B = agent_utility(A, v_A + theta_B)[0] + lam * agent_utility(B, v_B - K * theta_B)[0]
    return G * (h_A * on_A + h_B * on_B)


def fhat_integrand(delta, X, p: float, beta, scenario: Scenario, K, h_A, h_B):
    """beta [U_A(X) psi_A(delta) + lam U_B(nu_B - p) psi_B(delta)]"""
    A, B = scenario.agent_A, scenario.agent_B
    u_A = agent_utility(A, X)[0]
    u_B0 = agent_utility(B, B.nu - p)[0]
    return beta * (u_A * psi_A(delta, h_A, h_B, A.L, B.L, A.gamma)
                   + scenario.contract.lam * u_B0 * psi_B(delta, h_A, h_B, A.L, B.L, B.gamma, K))


def reduced_objective_paths(bundle: PathBundle, scenario: Scenario) -> np.ndarray:
    """
    Per-path G_T U_A(v_A_T) + lam G_T U_B(v_B_T) + sum_k g_k dt (left point).

    In the main mode the beta-form of the same quantity is computed alongside and
    must agree path by path.
    """
    paths = bundle.market
    lam = scenario.contract.lam
    A, B = scenario.agent_A, scenario.agent_B
    delta_E = scenario.contract.delta_E(paths.times)
    g = g_integrand(bundle.delta, bundle.v_A, bundle.v_B, scenario, paths.K, paths.G,
                    paths.h_A, paths.h_B, delta_E)
    G_T = paths.G[-1]
    terminal = G_T * (agent_utility(A, bundle.v_A[:, -1])[0] + lam * agent_utility(B, bundle.v_B[:, -1])[0])
    per_path = terminal + g[:, :-1].sum(axis=1) * paths.dt

    if not scenario.appendix and bundle.clamped_paths == 0:
        fhat = fhat_integrand(bundle.delta, bundle.X, bundle.p, bundle.beta, scenario, paths.K,
                              paths.h_A, paths.h_B)
        beta_T = bundle.beta[:, -1]
        beta_form = (beta_T * (agent_utility(A, bundle.X[:, -1])[0] + lam * agent_utility(B, B.nu - bundle.p)[0])
                     + fhat[:, :-1].sum(axis=1) * paths.dt)
        gap = np.abs(per_path - beta_form) / np.maximum(1.0, np.abs(per_path))
        if np.max(gap) > FORM_TOLERANCE:
            worst = int(np.argmax(gap))
            raise SimulationError(f"g-form and beta-form objectives disagree on path {worst} "
                                  f"(relative gap {gap[worst]:.3e})")
    return per_path


def reduced_objective(bundle: PathBundle, scenario: Scenario) -> ObjectiveEstimate:
    """Mean and standard error of the reduced objective at the bundle's price"""
    check_integrability(bundle)
    estimate = _estimate(reduced_objective_paths(bundle, scenario), bundle)
    logger.debug(f"[Objective] Reduced objective at p={bundle.p:.6g}: {estimate.value:.10g} "
                 f"+/- {estimate.stderr:.3g}")
    return estimate


def full_filtration_objective(bundle: PathBundle, scenario: Scenario) -> ObjectiveEstimate:
    """
    Objective with sampled default times, wealth frozen at the first default.

    A default in [t_k, t_{k+1}) freezes wealth at node k, the node whose
    left-point weight covers that step in the reduced objective; a default
    after T leaves the terminal reduced values untouched.
    """
    paths = bundle.market
    intensities = scenario.market.intensities
    if not intensities.h_delta.is_zero():
        raise DomainError("full-filtration objective needs independent defaults (h_delta == 0)")
    check_integrability(bundle)
    A, B = scenario.agent_A, scenario.agent_B
    T = scenario.contract.maturity

    tau_A, tau_B = default_times_from_uniforms(intensities, paths.uniforms)
    tau = np.minimum(tau_A, tau_B)
    defaulted = tau <= T
    step = np.minimum(np.floor(np.minimum(tau, T) / paths.dt), paths.n_steps - 1)
    node = np.where(defaulted, step, paths.n_steps).astype(int)
    rows = np.arange(paths.n_paths)

    delta = bundle.delta[rows, node]
    delta_E = scenario.contract.delta_E(paths.times[node])
    theta = np.where(tau_A <= tau_B,
                     breach_amount(delta, "A", A.L, B.L, delta_E),
                     breach_amount(delta, "B", A.L, B.L, delta_E))
    theta = np.where(defaulted, theta, 0.0)
    wealth_A = bundle.v_A[rows, node] + theta
    wealth_B = bundle.v_B[rows, node] - paths.K[node] * theta
    per_path = agent_utility(A, wealth_A)[0] + scenario.contract.lam * agent_utility(B, wealth_B)[0]

    logger.info(f"[Objective] Full filtration: {int(defaulted.sum())} of {paths.n_paths} paths default before T")
    return _estimate(per_path, bundle)
