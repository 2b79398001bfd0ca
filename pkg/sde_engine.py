"""
Path simulation on a uniform time grid.

Brownian increments are drawn in fixed blocks of BLOCK_PATHS paths, each block
from its own Philox substream keyed by (seed, block index), so the worker count
never changes a number. Clean prices come from closed forms evaluated on the
simulated short rate; the reduced values of both agents and the aggregate state
X are Euler-integrated with the same increments.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from collateral import CollateralRule
from contract_state import MarketPaths, PathBundle, Scenario, clamped_exp
from errors import DomainError, SimulationError
from market_model import (cir_coefficients, clean_price, dependence_correction, simulate_short_rate, step_intensities,
                          survival)

logger = logging.getLogger("sde_engine")

BLOCK_PATHS = 512

# Short rates are floored here before entering the CIR closed forms
RATE_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    n_steps: int = 100
    seed: int = 42
    antithetic: bool = True
    scheme: str = "euler"
    threads: int = 1

    def __post_init__(self):
        if self.n_paths < 2:
            raise DomainError("n_paths must be >= 2")
        if self.n_steps < 1:
            raise DomainError("n_steps must be >= 1")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even n_paths")
        if self.scheme != "euler":
            raise DomainError(f"unsupported scheme '{self.scheme}'")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be an unsigned 64-bit integer")


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based substream for one block of paths"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _block_noise(sim: SimConfig, block: int, dt: float):
    size = min(BLOCK_PATHS, sim.n_paths - block * BLOCK_PATHS)
    rng = block_rng(sim.seed, block)
    if sim.antithetic:
        z = rng.standard_normal((size // 2, sim.n_steps))
        z = np.concatenate((z, -z))
    else:
        z = rng.standard_normal((size, sim.n_steps))
    # Default-time uniforms for the full-filtration oracle
    uniforms = rng.random((size, 2))
    return z * np.sqrt(dt), uniforms


def generate_noise(sim: SimConfig, dt: float):
    """Brownian increments (n_paths, n_steps) and uniforms (n_paths, 2), block by block"""
    n_blocks = -(-sim.n_paths // BLOCK_PATHS)
    with ThreadPoolExecutor(max_workers=sim.threads) as pool:
        blocks = list(pool.map(lambda b: _block_noise(sim, b, dt), range(n_blocks)))
    dW = np.concatenate([b[0] for b in blocks])
    uniforms = np.concatenate([b[1] for b in blocks])
    return dW, uniforms


def _check_finite(name: str, values: np.ndarray):
    bad = ~np.isfinite(values)
    if np.any(bad):
        path, step = np.argwhere(bad)[0][:2] if values.ndim > 1 else (0, int(np.argmax(bad)))
        raise SimulationError(f"non-finite {name} on path {path}, node {step}")


def _cumulate(start, increments: np.ndarray) -> np.ndarray:
    """Node values from a start value and per-step increments"""
    n_paths = increments.shape[0]
    out = np.empty((n_paths, increments.shape[1] + 1))
    out[:, 0] = start
    np.cumsum(increments, axis=1, out=out[:, 1:])
    out[:, 1:] += out[:, :1]
    return out


def simulate_clean_price(scenario: Scenario, sim: SimConfig) -> MarketPaths:
    """
    Short rate, accounts, discounted clean price v and the deltas Delta_A, Delta_B.

    The short rate follows its P-dynamics (risk premium Lambda); v = e / B_A with
    e taken from the closed form, and Delta_i = B Z / B_i.
    """
    contract, market = scenario.contract, scenario.market
    if contract.dividend != "unit_bond_paid_by_A":
        raise DomainError(f"unsupported dividend '{contract.dividend}'")
    T = contract.maturity
    times = np.linspace(0.0, T, sim.n_steps + 1)
    dt = T / sim.n_steps
    logger.info(f"[SdeEngine] Simulating {sim.n_paths} paths x {sim.n_steps} steps (seed {sim.seed}, "
                f"{sim.threads} thread(s))")

    dW, uniforms = generate_noise(sim, dt)
    r = simulate_short_rate(market.rate, dt, dW, market.lambda_premium)
    rate_integral = np.concatenate((np.zeros((sim.n_paths, 1)), np.cumsum(np.maximum(r[:, :-1], 0.0) * dt, axis=1)), axis=1)
    B = np.exp(rate_integral)
    spread_A = scenario.agent_A.s.integral(times)
    spread_B = scenario.agent_B.s.integral(times)
    B_A = B * np.exp(spread_A)
    B_B = B * np.exp(spread_B)
    K = np.exp(spread_A - spread_B)

    if market.rate.kind == "cir":
        r_eval = np.maximum(r, RATE_FLOOR)
        e = clean_price(times, r_eval, market.rate, T)
        _, a2 = cir_coefficients(times, market.rate, T)
        Z = -market.rate.rho * np.sqrt(r_eval) * a2 * e / B
    else:
        e = clean_price(times, r, market.rate, T)
        Z = np.zeros_like(r)
    v = e / B_A
    delta_A = B * Z / B_A
    delta_B = B * Z / B_B
    _check_finite("clean price", v)

    phi_A = scenario.hedge.phi("A", times, r, delta_A, delta_B)
    phi_B = scenario.hedge.phi("B", times, r, delta_A, delta_B)
    intensities = market.intensities
    h_A, h_B = step_intensities(times, intensities)
    return MarketPaths(
        times=times, dt=dt, dW=dW, r=r, B=B, B_A=B_A, B_B=B_B, K=K, v=v, Z=Z,
        delta_A=delta_A, delta_B=delta_B, phi_A=phi_A, phi_B=phi_B,
        G=survival(times, intensities), h_A=h_A, h_B=h_B,
        I=dependence_correction(times, T, intensities), uniforms=uniforms,
    )


def reduced_drifts(scenario: Scenario, paths: MarketPaths, delta: np.ndarray):
    """
    Node drifts of v_A and v_B.

    v_A: phi_A Lambda_A + Delta_A b_A + s_A v + s_Am (delta - v)
    v_B: phi_B Lambda_B - Delta_B b_B - s_B K v - s_Bm K (delta - v)
    """
    A, B = scenario.agent_A, scenario.agent_B
    lam = scenario.market.lambda_premium
    times, v, K = paths.times, paths.v, paths.K
    drift_A = (paths.phi_A * (lam + A.b) + paths.delta_A * A.b + A.s(times) * v
               + A.s_m(times) * (delta - v))
    drift_B = (paths.phi_B * (lam + B.b) - paths.delta_B * B.b - B.s(times) * K * v
               - B.s_m(times) * K * (delta - v))
    return drift_A, drift_B


def aggregate_drift(scenario: Scenario, paths: MarketPaths, delta: np.ndarray):
    """
    Node drift of X = v_A - (gamma_B/gamma_A)(v_B - v_B0), coded from the
    aggregate spread s = s_A + (gamma_B/gamma_A) s_B K.
    """
    A, B = scenario.agent_A, scenario.agent_B
    ratio = scenario.gamma_ratio
    lam = scenario.market.lambda_premium
    times, v, K = paths.times, paths.v, paths.K
    s = A.s(times) + ratio * B.s(times) * K
    margin = (A.s_m(times) + ratio * B.s_m(times) * K) * (delta - v)
    return (s * v + paths.phi_A * (lam + A.b) - ratio * paths.phi_B * (lam + B.b)
            + paths.delta_A * A.b + ratio * paths.delta_B * B.b + margin)


def simulate_reduced_values(p: float, scenario: Scenario, paths: MarketPaths, rule: CollateralRule) -> PathBundle:
    """
    Reduced values v_A, v_B, aggregate state X and weight beta for agreement cost p.

    v_B is integrated first because the appendix rule reads it; the main rule
    reads X, whose dynamics carry no margin term in that mode.
    """
    A, B = scenario.agent_A, scenario.agent_B
    dt, dW = paths.dt, paths.dW
    if rule.mode != "fixed" and not (A.s_m.is_zero() or rule.mode == "closed_form_appendix"):
        raise DomainError("nonzero margin spread of Agent A needs a singleton collateral domain")
    if rule.mode != "fixed" and not B.s_m.is_zero():
        raise DomainError("nonzero margin spread of Agent B needs a singleton collateral domain")

    shape = paths.v.shape
    delta = rule.evaluate(p, scenario, paths) if rule.mode == "fixed" else np.zeros(shape)

    v_A0, v_B0 = A.nu + p, B.nu - p
    _, drift_B = reduced_drifts(scenario, paths, delta)
    v_B = _cumulate(v_B0, drift_B[:, :-1] * dt + paths.phi_B[:, :-1] * dW)
    if rule.mode == "closed_form_appendix":
        delta = rule.evaluate(p, scenario, paths, v_B=v_B)

    drift_A, _ = reduced_drifts(scenario, paths, delta)
    v_A = _cumulate(v_A0, drift_A[:, :-1] * dt + paths.phi_A[:, :-1] * dW)

    ratio = scenario.gamma_ratio
    drift_X = aggregate_drift(scenario, paths, delta)
    X = _cumulate(v_A0, drift_X[:, :-1] * dt + (paths.phi_A - ratio * paths.phi_B)[:, :-1] * dW)
    if rule.mode == "closed_form_main":
        delta = rule.evaluate(p, scenario, paths, X=X)

    beta_exp, clamped = clamped_exp(-B.gamma * (v_B - v_B0))
    beta = paths.G * beta_exp
    clamped_paths = int(np.count_nonzero(clamped.any(axis=1)))
    if clamped_paths:
        logger.warning(f"[SdeEngine] {clamped_paths} path(s) needed exponent clamping at p={p:.6g}")
    for name, values in (("v_A", v_A), ("v_B", v_B), ("X", X), ("collateral", delta)):
        _check_finite(name, values)
    return PathBundle(market=paths, p=p, v_A=v_A, v_B=v_B, X=X, beta=beta, delta=delta,
                      clamped_paths=clamped_paths)


def identity_error(bundle: PathBundle, ratio: float) -> float:
    """Max |X - v_A + ratio (v_B - v_B0)| over all nodes"""
    return float(np.max(np.abs(bundle.X - bundle.v_A + ratio * (bundle.v_B - bundle.v_B0))))


def simulate(p: float, scenario: Scenario, sim: SimConfig, rule: CollateralRule = None) -> PathBundle:
    """Clean price and reduced values in one call"""
    rule = rule or CollateralRule.for_scenario(scenario)
    return simulate_reduced_values(p, scenario, simulate_clean_price(scenario, sim), rule)
