"""
Quantum Uplink Package
Simulation and analysis toolkit for an entangled-photon or faint-pulse
quantum uplink from an optical ground station to the ISS.
"""

__version__ = "1.0.0"

# Closed-form physics and the coincidence engine
from .core import (
    attenuation_db,
    chsh_S,
    match_pairs,
    snr_analytic,
    synth_pass,
    usable_window,
    xcorr_offset,
)

# Scenario, source and stream models
from .models import Scenario, TimeTagStream, generate_pass, load_scenario

# End-to-end processing
from .core.pipeline import PassReport, analyze_streams, run_simulation

__all__ = [
    "attenuation_db",
    "chsh_S",
    "match_pairs",
    "snr_analytic",
    "synth_pass",
    "usable_window",
    "xcorr_offset",
    "Scenario",
    "TimeTagStream",
    "generate_pass",
    "load_scenario",
    "PassReport",
    "analyze_streams",
    "run_simulation",
]
