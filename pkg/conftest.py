"""
Shared fixtures: scenarios are built from the JSON files in configs/ with
dotted-path changes applied, and simulated on small grids.
"""
import copy
import json
import os

import pytest

from config import scenario_from_dict
from sde_engine import simulate_clean_price

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")


def scenario_doc(name: str) -> dict:
    with open(os.path.join(CONFIG_DIR, f"{name}.json")) as f:
        return json.load(f)


def set_path(doc: dict, dotted: str, value):
    """doc["a"]["b"] = value for dotted == "a.b"; None removes the key"""
    *parents, leaf = dotted.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
    if value is None:
        node.pop(leaf, None)
    else:
        node[leaf] = copy.deepcopy(value)


def build_config(name: str = "example1", changes: dict = None, n_paths: int = 2048, n_steps: int = 20,
                 seed: int = 42, threads: int = 1):
    doc = scenario_doc(name)
    for dotted, value in (changes or {}).items():
        set_path(doc, dotted, value)
    return scenario_from_dict(doc, {"n_paths": n_paths, "n_steps": n_steps, "seed": seed, "threads": threads})


@pytest.fixture
def make_config():
    """build_config as a fixture"""
    return build_config


@pytest.fixture
def simulated():
    """(config, MarketPaths) for a named scenario"""
    def run(name: str = "example1", changes: dict = None, **sim):
        config = build_config(name, changes, **sim)
        return config, simulate_clean_price(config.scenario, config.sim)
    return run


@pytest.fixture
def write_config(tmp_path):
    """Write a changed scenario to a temporary JSON file and return its path"""
    def write(name: str = "example1", changes: dict = None, filename: str = "scenario.json") -> str:
        doc = scenario_doc(name)
        for dotted, value in (changes or {}).items():
            set_path(doc, dotted, value)
        path = tmp_path / filename
        path.write_text(json.dumps(doc))
        return str(path)
    return write
