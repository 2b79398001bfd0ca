"""
Agent and contract parameters, hedge policies and the per-path state bundle.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from errors import DomainError
from market_model import MarketModel, PiecewiseConstant

logger = logging.getLogger("contract_state")

# Exponents are clipped to this magnitude before np.exp
EXP_CLAMP = 700.0

HEDGE_MODES = ("delta_hedge", "naked", "custom")

ZERO_CURVE = PiecewiseConstant.constant(0.0)


@dataclass(frozen=True)
class AgentParams:
    """
    One party of the contract.

    Args:
        name: "A" or "B"; also selects the party's hazard in the IntensityCurve
        gamma: absolute risk aversion (ignored when risk_neutral)
        nu: initial endowment
        L: loss rate on uncollateralized exposure
        s: funding spread over OIS
        s_m: margin funding spread over the remuneration rate
        b: funding risk-premium shift
    """
    name: str
    gamma: float
    nu: float = 0.0
    L: float = 1.0
    s: PiecewiseConstant = ZERO_CURVE
    s_m: PiecewiseConstant = ZERO_CURVE
    b: float = 0.0
    risk_neutral: bool = False

    def __post_init__(self):
        if self.name not in ("A", "B"):
            raise DomainError(f"agent name must be 'A' or 'B', got {self.name!r}")
        if not self.risk_neutral and not self.gamma > 0:
            raise DomainError(f"agent {self.name}: gamma must be > 0")
        if not 0 < self.L <= 1:
            raise DomainError(f"agent {self.name}: loss rate must lie in (0, 1]")


@dataclass(frozen=True)
class HedgePolicy:
    """
    Per-agent hedge of the clean-price delta.

    phi_A = pi_A - Delta_A and phi_B = pi_B + Delta_B are the residual
    exposures that drive the reduced values. A custom policy supplies phi
    directly, either as a time curve or as a callable of (t, r).
    """
    mode_A: str = "delta_hedge"
    mode_B: str = "delta_hedge"
    custom_A: Optional[Union[PiecewiseConstant, Callable]] = None
    custom_B: Optional[Union[PiecewiseConstant, Callable]] = None

    def __post_init__(self):
        for who, mode, custom in (("A", self.mode_A, self.custom_A), ("B", self.mode_B, self.custom_B)):
            if mode not in HEDGE_MODES:
                raise DomainError(f"hedge {who}: unknown mode '{mode}'")
            if mode == "custom" and custom is None:
                raise DomainError(f"hedge {who}: custom mode needs a phi curve")

    def phi(self, who: str, times: np.ndarray, r: np.ndarray, delta_A: np.ndarray, delta_B: np.ndarray) -> np.ndarray:
        """Residual exposure phi of one agent on every node, shape of r"""
        mode = self.mode_A if who == "A" else self.mode_B
        if mode == "delta_hedge":
            return np.zeros_like(r)
        if mode == "naked":
            # pi = 0
            return -delta_A if who == "A" else delta_B.copy()
        custom = self.custom_A if who == "A" else self.custom_B
        if isinstance(custom, PiecewiseConstant):
            return np.broadcast_to(custom(times), r.shape).copy()
        return np.broadcast_to(np.asarray(custom(times, r), dtype=float), r.shape).copy()


@dataclass(frozen=True)
class ContractSpec:
    maturity: float
    lam: float = 1.0
    dividend: str = "unit_bond_paid_by_A"
    delta_E: PiecewiseConstant = ZERO_CURVE
    # None means the collateral domain is the whole real line
    singleton: Optional[float] = None

    def __post_init__(self):
        if not self.maturity > 0:
            raise DomainError("maturity must be > 0")
        if not self.lam > 0:
            raise DomainError("bargaining weight lambda must be > 0")
        if self.singleton is not None and not np.isfinite(self.singleton):
            raise DomainError("singleton collateral value must be finite")


@dataclass(frozen=True)
class Scenario:
    """Everything but the simulation settings"""
    market: MarketModel
    agent_A: AgentParams
    agent_B: AgentParams
    contract: ContractSpec
    hedge: HedgePolicy = field(default_factory=HedgePolicy)
    mode: str = "main"

    @property
    def gamma_ratio(self) -> float:
        """gamma_B / gamma_A; zero when A is risk neutral"""
        if self.agent_A.risk_neutral:
            return 0.0
        return self.agent_B.gamma / self.agent_A.gamma

    @property
    def appendix(self) -> bool:
        return self.mode == "appendix"


@dataclass
class MarketPaths:
    """
    Clean-price state shared by every price evaluation (common random numbers).

    Node arrays have shape (n_paths, n_steps + 1); deterministic curves are
    stored once per node with shape (n_steps + 1,).
    h_A and h_B hold the survival-weighted step means from
    market_model.step_intensities, so left-point sums weight each step by its
    exact default probability.
    """
    times: np.ndarray
    dt: float
    dW: np.ndarray
    r: np.ndarray
    B: np.ndarray
    B_A: np.ndarray
    B_B: np.ndarray
    K: np.ndarray
    v: np.ndarray
    Z: np.ndarray
    delta_A: np.ndarray
    delta_B: np.ndarray
    phi_A: np.ndarray
    phi_B: np.ndarray
    G: np.ndarray
    h_A: np.ndarray
    h_B: np.ndarray
    I: np.ndarray
    uniforms: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.r.shape[0]

    @property
    def n_steps(self) -> int:
        return self.r.shape[1] - 1


@dataclass
class PathBundle:
    """Reduced values for one agreement cost p on top of a MarketPaths"""
    market: MarketPaths
    p: float
    v_A: np.ndarray
    v_B: np.ndarray
    X: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    clamped_paths: int = 0

    @property
    def v_B0(self) -> float:
        return float(self.v_B[0, 0])

    @property
    def clamped_fraction(self) -> float:
        return self.clamped_paths / self.market.n_paths


def positive_part(x):
    return np.maximum(x, 0.0)


def negative_part(x):
    """max(-x, 0), nonnegative"""
    return np.maximum(-np.asarray(x, dtype=float), 0.0)


def breach_amount(delta, who_defaults: str, L_A: float, L_B: float, delta_E=0.0):
    """
    Close-out shortfall Theta paid at the first default.

    With delta_E = 0 this is L_A delta+ when A defaults and -L_B delta- when B
    defaults; otherwise only the increment over the endowed residual counts.
    """
    delta = np.asarray(delta, dtype=float)
    delta_E = np.asarray(delta_E, dtype=float)
    total = delta + delta_E
    if who_defaults == "A":
        return L_A * (positive_part(total) - positive_part(delta_E))
    if who_defaults == "B":
        return -L_B * (negative_part(total) - negative_part(delta_E))
    raise ValueError(f"who_defaults must be 'A' or 'B', got {who_defaults!r}")


def clamped_exp(z):
    """exp(z) with the exponent clipped to +-EXP_CLAMP; also returns the clip mask"""
    z = np.asarray(z, dtype=float)
    mask = np.abs(z) > EXP_CLAMP
    return np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP)), mask


def utility(kind: str, gamma: float, x):
    """
    Utility value and first derivative.

    kind is "exp_A"/"exp_B" (U(x) = -exp(-gamma x)) or "linear" (U(x) = x).
    """
    x = np.asarray(x, dtype=float)
    if kind == "linear":
        return x, np.ones_like(x)
    if kind not in ("exp_A", "exp_B"):
        raise ValueError(f"unknown utility kind {kind!r}")
    if not gamma > 0:
        raise DomainError("exponential utility needs gamma > 0")
    e, _ = clamped_exp(-gamma * x)
    return -e, gamma * e


def agent_utility(agent: AgentParams, x):
    """Utility of one agent: linear when risk neutral, exponential otherwise"""
    kind = "linear" if agent.risk_neutral else f"exp_{agent.name}"
    return utility(kind, agent.gamma, x)
