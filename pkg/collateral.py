"""
Optimal variation margin.

Closed forms for the two risk-averse agents and for a risk-neutral Agent A with
an incremental cash flow, plus a golden-section oracle that maximizes the
pointwise objective directly.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from contract_state import AgentParams, MarketPaths, Scenario, breach_amount, clamped_exp, negative_part, positive_part
from errors import DomainError, LogDomainError, NotBracketedError

logger = logging.getLogger("collateral")

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQ = (3 - math.sqrt(5)) / 2

# Largest |delta| the oracle will search
BRACKET_CAP = 1e6

RULE_MODES = ("closed_form_main", "closed_form_appendix", "fixed")


def psi_A(delta, h_A, h_B, L_A: float, L_B: float, gamma_A: float):
    """h_A exp(-gamma_A L_A delta+) + h_B exp(gamma_A L_B delta-)"""
    up, _ = clamped_exp(-gamma_A * L_A * positive_part(delta))
    down, _ = clamped_exp(gamma_A * L_B * negative_part(delta))
    return h_A * up + h_B * down


def psi_B(delta, h_A, h_B, L_A: float, L_B: float, gamma_B: float, K):
    """h_A exp(gamma_B L_A K delta+) + h_B exp(-gamma_B L_B K delta-)"""
    up, _ = clamped_exp(gamma_B * L_A * K * positive_part(delta))
    down, _ = clamped_exp(-gamma_B * L_B * K * negative_part(delta))
    return h_A * up + h_B * down


def _numerator(p, x, agent_A: AgentParams, agent_B: AgentParams, lam: float, K):
    gA, gB = agent_A.gamma, agent_B.gamma
    return gB * agent_B.nu - gB * p - gA * np.asarray(x, dtype=float) - np.log(lam * K * gB / gA)


def i_plus(p, x, agent_A: AgentParams, agent_B: AgentParams, lam: float, K):
    K = np.asarray(K, dtype=float)
    denom = agent_A.L * (agent_B.gamma * K + agent_A.gamma)
    return _numerator(p, x, agent_A, agent_B, lam, K) / denom


def i_minus(p, x, agent_A: AgentParams, agent_B: AgentParams, lam: float, K):
    K = np.asarray(K, dtype=float)
    denom = agent_B.L * (agent_B.gamma * K + agent_A.gamma)
    return _numerator(p, x, agent_A, agent_B, lam, K) / denom


def delta_star_main(p, x, agent_A: AgentParams, agent_B: AgentParams, lam: float, K):
    """(0 v I+) + (0 ^ I-); only one of the two terms is ever nonzero"""
    return (np.maximum(0.0, i_plus(p, x, agent_A, agent_B, lam, K))
            + np.minimum(0.0, i_minus(p, x, agent_A, agent_B, lam, K)))


def main_score(delta, p: float, x: float, agent_A: AgentParams, agent_B: AgentParams,
               lam: float, K: float, h_A: float, h_B: float):
    """
    Pointwise main-mode objective in delta, up to a positive factor.

    U_A(x) psi_A + lam U_B(nu_B - p) psi_B divided by exp(-gamma_A x).
    """
    c = lam * math.exp(agent_A.gamma * x - agent_B.gamma * (agent_B.nu - p))
    return (-psi_A(delta, h_A, h_B, agent_A.L, agent_B.L, agent_A.gamma)
            - c * psi_B(delta, h_A, h_B, agent_A.L, agent_B.L, agent_B.gamma, K))


def _appendix_log(term: str, numerator, denominator):
    numerator = np.asarray(numerator, dtype=float)
    denominator = np.asarray(denominator, dtype=float)
    bad = ~(numerator > 0)
    if np.any(bad):
        raise LogDomainError(term, float(np.asarray(numerator)[bad].flat[0]))
    bad = ~(denominator > 0)
    if np.any(bad):
        raise LogDomainError(term, float(np.asarray(denominator)[bad].flat[0]))
    return np.log(numerator / denominator)


def appendix_candidates(v_B, agent_A: AgentParams, agent_B: AgentParams, lam: float, K, G, I,
                        s_Am, h_A, h_B, delta_E):
    """
    Unconstrained stationary points (I_hat+, I_hat-) of the two appendix pieces.

    With s_Am = 0 both collapse to the reduced form
    -ln(lam gamma_B K) / (gamma_B K L) without the survival level.
    """
    gB = agent_B.gamma
    L_A, L_B = agent_A.L, agent_B.L
    v_B, K, G, I = (np.asarray(a, dtype=float) for a in (v_B, K, G, I))
    s_Am, h_A, h_B, delta_E = (np.asarray(a, dtype=float) for a in (s_Am, h_A, h_B, delta_E))
    scale = gB * K
    if np.all(s_Am == 0):
        if np.any(h_A * L_A <= 0):
            raise LogDomainError("h_A*L_A", float(np.min(h_A * L_A)))
        if np.any(h_B * L_B <= 0):
            raise LogDomainError("h_B*L_B", float(np.min(h_B * L_B)))
        log_plus = log_minus = -np.log(lam * scale)
    else:
        log_plus = _appendix_log("G*(h_A*L_A + s_Am) + s_Am*I", G * (h_A * L_A + s_Am) + s_Am * I,
                                 G * lam * scale * h_A * L_A)
        log_minus = _appendix_log("G*(h_B*L_B + s_Am) + s_Am*I", G * (h_B * L_B + s_Am) + s_Am * I,
                                  G * lam * scale * h_B * L_B)
    plus = negative_part(delta_E) + v_B / (K * L_A) + log_plus / (scale * L_A)
    minus = -positive_part(delta_E) + v_B / (K * L_B) + log_minus / (scale * L_B)
    return plus, minus


def appendix_score(delta, v_B, agent_A: AgentParams, agent_B: AgentParams, lam: float, K, G, I,
                   s_Am, h_A, h_B, delta_E):
    """
    Delta-dependent part of the appendix objective at one node.

    G sum_i h_i [Theta_i + lam U_B(v_B - K Theta_i)] + (G + I) s_Am delta; it is
    concave on each side of -delta_E.
    """
    gB = agent_B.gamma
    theta_A = breach_amount(delta, "A", agent_A.L, agent_B.L, delta_E)
    theta_B = breach_amount(delta, "B", agent_A.L, agent_B.L, delta_E)
    u_A, _ = clamped_exp(-gB * (v_B - K * theta_A))
    u_B, _ = clamped_exp(-gB * (v_B - K * theta_B))
    return (G * (h_A * (theta_A - lam * u_A) + h_B * (theta_B - lam * u_B))
            + (G + I) * s_Am * np.asarray(delta, dtype=float))


def _pick(c_plus, c_minus, score_plus, score_minus):
    """Better of the two piece maxima; ties go to the smaller |delta|"""
    prefer_plus = (score_plus > score_minus) | (
        (score_plus == score_minus) & (np.abs(c_plus) <= np.abs(c_minus)))
    return np.where(prefer_plus, c_plus, c_minus)


def delta_star_appendix(v_B, agent_A: AgentParams, agent_B: AgentParams, lam: float, K, G, I,
                        s_Am, h_A, h_B, delta_E):
    """Argmax of appendix_score over the two candidates max(I+, -delta_E) and min(I-, -delta_E)"""
    plus, minus = appendix_candidates(v_B, agent_A, agent_B, lam, K, G, I, s_Am, h_A, h_B, delta_E)
    kink = -np.asarray(delta_E, dtype=float)
    c_plus = np.maximum(plus, kink)
    c_minus = np.minimum(minus, kink)
    args = (v_B, agent_A, agent_B, lam, K, G, I, s_Am, h_A, h_B, delta_E)
    return _pick(c_plus, c_minus, appendix_score(c_plus, *args), appendix_score(c_minus, *args))


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> float:
    """
    Golden-section search for the maximum of a unimodal f on [a, b].

    Args:
        f: objective
        a: left end of the bracket
        b: right end of the bracket
        tol: final bracket width

    Returns:
        midpoint of the final bracket
    """
    a, b = min(a, b), max(a, b)
    dist = b - a
    if dist <= tol:
        return (a + b) / 2

    n = int(math.ceil(math.log(tol / dist) / math.log(INV_PHI)))
    c = a + INV_PHI_SQ * dist
    d = a + INV_PHI * dist
    yc, yd = f(c), f(d)
    for _ in range(n - 1):
        if yc > yd:
            b, d, yd = d, c, yc
            dist = INV_PHI * dist
            c = a + INV_PHI_SQ * dist
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            dist = INV_PHI * dist
            d = a + INV_PHI * dist
            yd = f(d)
    return (a + d) / 2 if yc > yd else (c + b) / 2


def _bracket(f: Callable[[float], float], start: float, direction: float, cap: float) -> float:
    """Far end of a half-line bracket from start, doubled until f stops improving"""
    width = 1.0
    while f(start + 2 * direction * width) > f(start + direction * width):
        width *= 2
        if width > cap:
            raise NotBracketedError(f"optimum not bracketed within |delta| <= {cap:g} from {start:g}")
    logger.debug(f"[Collateral] Bracket from {start:g} closed at width {2 * width:g}")
    return start + 2 * direction * width


def brute_force_delta(score: Callable[[float], float], split: float = 0.0,
                      singleton: Optional[float] = None, cap: float = BRACKET_CAP, tol: float = 1e-10):
    """
    Oracle argmax of a pointwise collateral objective.

    Runs a golden-section search on each concave piece (left and right of split)
    and keeps the better piece maximum, the smaller |delta| on a tie.

    Returns:
        (delta, score value)
    """
    if singleton is not None:
        return singleton, score(singleton)
    best = []
    for direction in (1.0, -1.0):
        far = _bracket(score, split, direction, cap)
        x = golden_section_max(score, split, far, tol)
        # The kink itself can be the piece maximum
        if score(split) >= score(x):
            x = split
        best.append((x, score(x)))
    (c_plus, s_plus), (c_minus, s_minus) = best
    delta = float(_pick(np.array(c_plus), np.array(c_minus), np.array(s_plus), np.array(s_minus)))
    return delta, float(score(delta))


@dataclass(frozen=True)
class CollateralRule:
    """
    How the variation margin is chosen on every node.

    scale multiplies the closed-form output; anything but 1.0 corrupts the rule
    and is used by the verification mutation self-test.
    """
    mode: str
    delta0: Optional[float] = None
    scale: float = 1.0

    def __post_init__(self):
        if self.mode not in RULE_MODES:
            raise DomainError(f"unknown collateral rule '{self.mode}'")
        if self.mode == "fixed" and (self.delta0 is None or not np.isfinite(self.delta0)):
            raise DomainError("fixed collateral rule needs a finite delta0")

    @classmethod
    def fixed(cls, delta0: float) -> "CollateralRule":
        return cls("fixed", float(delta0))

    @classmethod
    def for_scenario(cls, scenario: Scenario, scale: float = 1.0) -> "CollateralRule":
        if scenario.contract.singleton is not None:
            return cls("fixed", scenario.contract.singleton)
        if scenario.appendix:
            if not scenario.agent_A.risk_neutral:
                raise DomainError("appendix collateral rule needs a risk-neutral Agent A")
            if not scenario.agent_B.s_m.is_zero():
                raise DomainError("appendix collateral rule needs s_m of Agent B == 0")
            return cls("closed_form_appendix", scale=scale)
        return cls("closed_form_main", scale=scale)

    def evaluate(self, p: float, scenario: Scenario, paths: MarketPaths, X=None, v_B=None) -> np.ndarray:
        """Collateral delta on every node, shape (n_paths, n_steps + 1)"""
        if self.mode == "fixed":
            return np.full((paths.n_paths, paths.n_steps + 1), self.delta0)
        if self.mode == "closed_form_main":
            delta = delta_star_main(p, X, scenario.agent_A, scenario.agent_B, scenario.contract.lam, paths.K)
        else:
            times = paths.times
            delta = delta_star_appendix(v_B, scenario.agent_A, scenario.agent_B, scenario.contract.lam,
                                        paths.K, paths.G, paths.I, scenario.agent_A.s_m(times),
                                        paths.h_A, paths.h_B, scenario.contract.delta_E(times))
        return self.scale * delta
