"""Source, detector and scenario models, time-tag containers and the event generator."""

from .source_models import DetectorSpec, EpsSpec, FpsSpec, expected_remote_rates
from .timetag import PulseLog, TimeTagStream, read_stream, write_stream
from .scenario import Scenario, load_scenario
from .event_stream import SimulatedPass, generate_eps_pass, generate_fps_pass, generate_pass

__all__ = [
    "DetectorSpec",
    "EpsSpec",
    "FpsSpec",
    "expected_remote_rates",
    "PulseLog",
    "TimeTagStream",
    "read_stream",
    "write_stream",
    "Scenario",
    "load_scenario",
    "SimulatedPass",
    "generate_eps_pass",
    "generate_fps_pass",
    "generate_pass",
]
