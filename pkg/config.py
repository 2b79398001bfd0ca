#!/usr/bin/env python3
"""
Configuration for the risk-sharing engine.

Two layers: a JSON scenario document (market, agents, contract, hedge,
simulation settings) and process-level defaults kept in a .env file.
Run this module as a script to inspect or change the .env defaults.

Precedence for simulation settings: command-line flag > scenario "sim" block >
.env / environment > built-in default.
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, Optional

from dotenv import load_dotenv, set_key

from contract_state import AgentParams, ContractSpec, HedgePolicy, Scenario
from errors import ConfigError, DomainError
from market_model import IntensityCurve, MarketModel, PiecewiseConstant, RateModel
from sde_engine import SimConfig

# Default configuration file
CONFIG_FILE = ".env"

DEFAULTS = {
    "RS_ENGINE_PATHS": "10000",
    "RS_ENGINE_STEPS": "100",
    "RS_ENGINE_SEED": "42",
    "RS_ENGINE_THREADS": "1",
    "RS_ENGINE_LOG_LEVEL": "INFO",
}

MODES = ("main", "appendix")


@dataclass
class ScenarioConfig:
    scenario: Scenario
    sim: SimConfig
    motivation: Optional[Dict[str, float]] = None
    source: Optional[str] = None


def load_env_defaults() -> Dict[str, str]:
    """Process-level defaults from .env and the environment"""
    load_dotenv(CONFIG_FILE)
    return {key: os.getenv(key, value) for key, value in DEFAULTS.items()}


def _get(doc: Dict[str, Any], key: str, path: str, default: Any = ...):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return doc[key]


def _number(value: Any, path: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(path, "must be finite")
    if positive and value <= 0:
        raise ConfigError(path, f"must be > 0, got {value!r}")
    if nonnegative and value < 0:
        raise ConfigError(path, f"must be >= 0, got {value!r}")
    return value


def _integer(value: Any, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(path, f"expected an integer >= {minimum}, got {value!r}")
    return value


def parse_curve(value: Any, path: str, nonnegative: bool = False) -> PiecewiseConstant:
    """A number or {"times": [0, t1, ...], "values": [v0, v1, ...]}"""
    if isinstance(value, dict):
        times = _get(value, "times", path)
        values = _get(value, "values", path)
        if not isinstance(times, list) or not isinstance(values, list):
            raise ConfigError(path, "times and values must be lists")
        values = [_number(v, f"{path}.values[{i}]", nonnegative=nonnegative) for i, v in enumerate(values)]
        times = [_number(t, f"{path}.times[{i}]") for i, t in enumerate(times)]
        try:
            return PiecewiseConstant(times, values)
        except ValueError as e:
            raise ConfigError(path, str(e))
    return PiecewiseConstant.constant(_number(value, path, nonnegative=nonnegative))


def _rate(doc: Dict[str, Any]) -> RateModel:
    kind = _get(doc, "kind", "market.rate")
    if kind == "constant":
        return RateModel("constant", level=_number(_get(doc, "level", "market.rate"), "market.rate.level", nonnegative=True))
    if kind == "cir":
        params = {key: _number(_get(doc, key, "market.rate"), f"market.rate.{key}", positive=True)
                  for key in ("k", "theta", "rho", "r0")}
        return RateModel("cir", **params)
    raise ConfigError("market.rate.kind", f"must be 'constant' or 'cir', got {kind!r}")


def _market(doc: Dict[str, Any]) -> MarketModel:
    intensities = _get(doc, "intensities", "market")
    independent = _get(intensities, "independent", "market.intensities", True)
    if not isinstance(independent, bool):
        raise ConfigError("market.intensities.independent", "expected true or false")
    try:
        curves = IntensityCurve(
            h_A=parse_curve(_get(intensities, "h_A", "market.intensities"), "market.intensities.h_A", nonnegative=True),
            h_B=parse_curve(_get(intensities, "h_B", "market.intensities"), "market.intensities.h_B", nonnegative=True),
            h_delta=parse_curve(_get(intensities, "h_delta", "market.intensities", 0.0), "market.intensities.h_delta"),
            independent=independent,
        )
    except DomainError as e:
        raise ConfigError("market.intensities", str(e))
    return MarketModel(
        rate=_rate(_get(doc, "rate", "market")),
        lambda_premium=_number(_get(doc, "lambda_premium", "market", 0.0), "market.lambda_premium"),
        remuneration=parse_curve(_get(doc, "remuneration", "market", 0.0), "market.remuneration"),
        intensities=curves,
    )


def _agent(doc: Dict[str, Any], name: str) -> AgentParams:
    path = f"agents.{name}"
    risk_neutral = _get(doc, "risk_neutral", path, False)
    if not isinstance(risk_neutral, bool):
        raise ConfigError(f"{path}.risk_neutral", "expected true or false")
    gamma = 0.0 if risk_neutral and "gamma" not in doc else _number(_get(doc, "gamma", path), f"{path}.gamma",
                                                                    positive=not risk_neutral)
    L = _number(_get(doc, "L", path), f"{path}.L", positive=True)
    if L > 1:
        raise ConfigError(f"{path}.L", f"loss rate must lie in (0, 1], got {L!r}")
    return AgentParams(
        name=name,
        gamma=gamma,
        nu=_number(_get(doc, "nu", path, 0.0), f"{path}.nu"),
        L=L,
        s=parse_curve(_get(doc, "s", path, 0.0), f"{path}.s"),
        s_m=parse_curve(_get(doc, "s_m", path, 0.0), f"{path}.s_m"),
        b=_number(_get(doc, "b", path, 0.0), f"{path}.b"),
        risk_neutral=risk_neutral,
    )


def _contract(doc: Dict[str, Any]) -> ContractSpec:
    dividend = _get(doc, "dividend", "contract", "unit_bond_paid_by_A")
    if dividend != "unit_bond_paid_by_A":
        raise ConfigError("contract.dividend", f"unsupported dividend {dividend!r}")
    domain = _get(doc, "collateral_domain", "contract", "all_reals")
    singleton = None
    if isinstance(domain, dict):
        singleton = _number(_get(domain, "singleton", "contract.collateral_domain"),
                            "contract.collateral_domain.singleton")
    elif domain != "all_reals":
        raise ConfigError("contract.collateral_domain", f"must be 'all_reals' or {{'singleton': value}}, got {domain!r}")
    return ContractSpec(
        maturity=_number(_get(doc, "maturity", "contract"), "contract.maturity", positive=True),
        lam=_number(_get(doc, "lambda", "contract", 1.0), "contract.lambda", positive=True),
        dividend=dividend,
        delta_E=parse_curve(_get(doc, "delta_E", "contract", 0.0), "contract.delta_E"),
        singleton=singleton,
    )


def _hedge(doc: Dict[str, Any]) -> HedgePolicy:
    modes, customs = {}, {}
    for who in ("A", "B"):
        value = _get(doc, who, "hedge", "delta_hedge")
        if isinstance(value, dict):
            modes[who] = "custom"
            customs[who] = parse_curve(_get(value, "custom", f"hedge.{who}"), f"hedge.{who}.custom")
        elif value in ("delta_hedge", "naked"):
            modes[who], customs[who] = value, None
        else:
            raise ConfigError(f"hedge.{who}", f"must be 'delta_hedge', 'naked' or {{'custom': curve}}, got {value!r}")
    return HedgePolicy(modes["A"], modes["B"], customs["A"], customs["B"])


def _sim(doc: Dict[str, Any], env: Dict[str, str], overrides: Dict[str, Any]) -> SimConfig:
    def pick(key: str, env_key: str, minimum: int) -> int:
        if overrides.get(key) is not None:
            return _integer(overrides[key], f"--{key}", minimum)
        if key in doc:
            return _integer(doc[key], f"sim.{key}", minimum)
        try:
            return _integer(int(env[env_key]), env_key, minimum)
        except ValueError:
            raise ConfigError(env_key, f"expected an integer, got {env[env_key]!r}")

    antithetic = doc.get("antithetic", True)
    if not isinstance(antithetic, bool):
        raise ConfigError("sim.antithetic", "expected true or false")
    n_paths = pick("n_paths", "RS_ENGINE_PATHS", 2)
    if antithetic and n_paths % 2:
        raise ConfigError("sim.n_paths", "must be even with antithetic sampling")
    seed = pick("seed", "RS_ENGINE_SEED", 0)
    if seed >= 2 ** 64:
        raise ConfigError("sim.seed", "must fit in 64 bits")
    threads = overrides.get("threads")
    if threads is None:
        try:
            threads = int(env["RS_ENGINE_THREADS"])
        except ValueError:
            raise ConfigError("RS_ENGINE_THREADS", f"expected an integer, got {env['RS_ENGINE_THREADS']!r}")
    return SimConfig(n_paths=n_paths, n_steps=pick("n_steps", "RS_ENGINE_STEPS", 1), seed=seed,
                     antithetic=antithetic, threads=_integer(threads, "--threads", 1))


def _check_mode(scenario: Scenario):
    A, B = scenario.agent_A, scenario.agent_B
    singleton = scenario.contract.singleton is not None
    if scenario.mode == "main":
        for agent in (A, B):
            if agent.risk_neutral:
                raise ConfigError(f"agents.{agent.name}.risk_neutral", "main mode needs two risk-averse agents")
            if not singleton and not agent.s_m.is_zero():
                raise ConfigError(f"agents.{agent.name}.s_m",
                                  "margin spreads must be 0 unless the collateral domain is a singleton")
        if not scenario.contract.delta_E.is_zero():
            raise ConfigError("contract.delta_E", "endowed residual is only used in appendix mode")
    else:
        if not A.risk_neutral:
            raise ConfigError("agents.A.risk_neutral", "appendix mode needs a risk-neutral Agent A")
        if B.risk_neutral:
            raise ConfigError("agents.B.risk_neutral", "appendix mode needs a risk-averse Agent B")
        if not B.s_m.is_zero():
            raise ConfigError("agents.B.s_m", "must be 0 in appendix mode")
        if A.s_m.values.min() < 0:
            raise ConfigError("agents.A.s_m", "must be >= 0 in appendix mode")


def scenario_from_dict(doc: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None,
                       source: Optional[str] = None) -> ScenarioConfig:
    """Validate a scenario document; ConfigError names the failing field"""
    overrides = overrides or {}
    mode = _get(doc, "mode", "", "main")
    if mode not in MODES:
        raise ConfigError("mode", f"must be 'main' or 'appendix', got {mode!r}")
    agents = _get(doc, "agents", "")
    try:
        scenario = Scenario(
            market=_market(_get(doc, "market", "")),
            agent_A=_agent(_get(agents, "A", "agents"), "A"),
            agent_B=_agent(_get(agents, "B", "agents"), "B"),
            contract=_contract(_get(doc, "contract", "")),
            hedge=_hedge(_get(doc, "hedge", "", {})),
            mode=mode,
        )
    except DomainError as e:
        raise ConfigError("scenario", str(e))
    _check_mode(scenario)

    motivation = None
    if "motivation" in doc:
        block = doc["motivation"]
        motivation = {key: _number(_get(block, key, "motivation"), f"motivation.{key}", positive=(key == "T"))
                      for key in ("R_A", "R_B", "r", "T")}
    sim = _sim(_get(doc, "sim", "", {}), load_env_defaults(), overrides)
    return ScenarioConfig(scenario=scenario, sim=sim, motivation=motivation, source=source)


def load_scenario(path: str, overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """Load and validate a scenario JSON file"""
    if not os.path.isfile(path):
        raise ConfigError("--config", f"no such file: {path}")
    try:
        with open(path, "r") as jf:
            doc = json.load(jf)
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON in {path}: {e}")
    return scenario_from_dict(doc, overrides, source=path)


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Configure risk-sharing engine defaults")
    parser.add_argument("--paths", type=int, default=None, help="Default number of Monte Carlo paths (default: 10000)")
    parser.add_argument("--steps", type=int, default=None, help="Default number of time steps (default: 100)")
    parser.add_argument("--seed", type=int, default=None, help="Default random seed (default: 42)")
    parser.add_argument("--threads", type=int, default=None, help="Default worker threads (default: 1)")
    parser.add_argument("--log-level", type=str, default=None, help="Default log level (default: INFO)")
    parser.add_argument("--show", action="store_true", help="Show current configuration")
    parser.add_argument("--reset", action="store_true", help="Reset to default configuration")
    return parser.parse_args(argv)


def show_config(config: Dict[str, str]):
    """Display the current configuration in a readable format"""
    print("\n=== Risk-Sharing Engine Configuration ===")
    print(f"Monte Carlo paths: {config['RS_ENGINE_PATHS']}")
    print(f"Time steps: {config['RS_ENGINE_STEPS']}")
    print(f"Seed: {config['RS_ENGINE_SEED']}")
    print(f"Threads: {config['RS_ENGINE_THREADS']}")
    print(f"Log level: {config['RS_ENGINE_LOG_LEVEL']}")
    print("=========================================\n")


def main(argv=None) -> int:
    args = parse_args(argv)

    # Create config file if it doesn't exist
    if not os.path.exists(CONFIG_FILE):
        open(CONFIG_FILE, "a").close()

    config = dict(DEFAULTS) if args.reset else load_env_defaults()
    updates = {
        "RS_ENGINE_PATHS": args.paths,
        "RS_ENGINE_STEPS": args.steps,
        "RS_ENGINE_SEED": args.seed,
        "RS_ENGINE_THREADS": args.threads,
        "RS_ENGINE_LOG_LEVEL": args.log_level,
    }
    config.update({key: str(value) for key, value in updates.items() if value is not None})
    for key, value in config.items():
        set_key(CONFIG_FILE, key, value)

    if args.show or args.reset or any(value is not None for value in updates.values()):
        show_config(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
