"""
Shared fixtures: a fast analysis config and small simulated passes.
"""

from pathlib import Path

import pytest
import yaml

from src.quantum_uplink.models.event_stream import generate_pass
from src.quantum_uplink.models.scenario import scenario_from_dict
from src.quantum_uplink.utils.config import Config

REPO_CONFIG_DIR = Path(__file__).resolve().parents[1] / "config"


@pytest.fixture(scope="session")
def fast_config(tmp_path_factory) -> Config:
    """Repository config with a narrow coarse search, so tests stay quick."""
    data = yaml.safe_load((REPO_CONFIG_DIR / "config.yaml").read_text())
    data["analysis"]["search_span_s"] = 0.01
    data["analysis"]["correlation_chunk_s"] = 1.0
    data["sweep"]["workers"] = 1
    data["scenarios"]["directory"] = str(REPO_CONFIG_DIR / "scenarios")
    path = tmp_path_factory.mktemp("config") / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return Config(str(path))


def small_bell_dict(**overrides) -> dict:
    data = {
        "name": "small_bell",
        "seed": 7,
        "station": {"background_cps": 1000.0},
        "link": {"fixed_attenuation_db": 30.0},
        "source": {"kind": "eps", "pair_generation_rate_cps": 2.0e6, "visibility": 0.95},
        "clock": {"offset_ms": 3.21, "drift": 2.0e-8},
        "generation": {"max_window_s": 4.0},
    }
    data.update(overrides)
    return data


def small_qkd_dict(**overrides) -> dict:
    data = {
        "name": "small_qkd",
        "seed": 11,
        "station": {"background_cps": 1000.0},
        "link": {"fixed_attenuation_db": 30.0},
        "source": {"kind": "fps"},
        "clock": {"offset_ms": -4.56},
        "settings": {"space_angle_sets_deg": [[0.0, 45.0]]},
        "generation": {"max_window_s": 4.0},
    }
    data.update(overrides)
    return data


@pytest.fixture(scope="session")
def small_bell_scenario():
    return scenario_from_dict(small_bell_dict())


@pytest.fixture(scope="session")
def small_qkd_scenario():
    return scenario_from_dict(small_qkd_dict())


@pytest.fixture(scope="session")
def bell_pass(small_bell_scenario):
    return generate_pass(small_bell_scenario)


@pytest.fixture(scope="session")
def qkd_pass(small_qkd_scenario):
    return generate_pass(small_qkd_scenario)
