# Quantum Uplink Package Tests

import logging
import math

import numpy as np
import pytest

from src.quantum_uplink.utils.config import Config
from src.quantum_uplink.utils.data_processor import (
    dumps_json,
    parse_list,
    parse_sweep,
    read_json,
    write_json,
)
from src.quantum_uplink.utils.logger import get_logger, setup_logging
from src.quantum_uplink.utils.parallel import ordered_map
from src.quantum_uplink.utils.seeding import rng_for


def test_package_import():
    """Test package imports."""
    import src.quantum_uplink as quantum_uplink

    assert quantum_uplink.__version__ == "1.0.0"
    assert callable(quantum_uplink.run_simulation)
    assert "analyze_streams" in quantum_uplink.__all__


def test_config_accessors(fast_config):
    """Config getters convert to SI units."""
    assert fast_config.get_coincidence_window() == pytest.approx(0.8e-9)
    assert fast_config.get_fine_bin() == pytest.approx(10e-12)
    assert fast_config.get_gate() == pytest.approx(1e-9)
    assert fast_config.get_min_events("qkd") == 10000
    assert fast_config.get_workers() == 1
    assert fast_config.get("analysis.no_such_key", 3) == 3
    assert fast_config.get_scenario_dir().is_dir()
    assert "analysis" in fast_config.as_dict()


def test_config_missing_file(tmp_path):
    with pytest.raises(RuntimeError):
        Config(str(tmp_path / "absent.yaml"))


def test_parse_sweep():
    np.testing.assert_allclose(parse_sweep("0.1:0.5:0.1"), [0.1, 0.2, 0.3, 0.4, 0.5])
    np.testing.assert_allclose(parse_sweep("20:20:1"), [20.0])
    for bad in ("1:2", "a:b:c", "1:2:0", "2:1:0.5"):
        with pytest.raises(ValueError):
            parse_sweep(bad)
    assert parse_list("100, 1000,") == [100.0, 1000.0]


def test_json_handles_numpy_and_non_finite(tmp_path):
    data = {"snr": np.float64(2.5), "bounds": (1, math.inf), "missing": math.nan, "n": np.int64(3)}
    text = dumps_json(data)
    assert text.endswith("\n")
    path = write_json(tmp_path / "r.json", data)
    assert read_json(path) == {"snr": 2.5, "bounds": [1, "inf"], "missing": "nan", "n": 3}


def test_named_substreams_are_independent():
    a = rng_for(1, "ground").random(4)
    np.testing.assert_array_equal(a, rng_for(1, "ground").random(4))
    assert not np.array_equal(a, rng_for(1, "space").random(4))
    assert not np.array_equal(a, rng_for(2, "ground").random(4))


def test_ordered_map_keeps_order():
    assert ordered_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]


def test_loggers_share_package_namespace():
    assert get_logger("src.quantum_uplink.core.pipeline").name == "quantum_uplink.core.pipeline"
    assert get_logger("elsewhere").name == "quantum_uplink.elsewhere"
    logger = setup_logging("debug")
    assert logger.level == logging.DEBUG
    setup_logging("WARNING")
    assert len(logger.handlers) == 1


if __name__ == "__main__":
    pytest.main([__file__])
