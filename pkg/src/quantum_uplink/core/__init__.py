"""Closed-form physics, correlation engine and statistics."""

from .orbit_geometry import DelayModel, PassProfile, slant_range, synth_pass, usable_window
from .link_budget import LinkParams, attenuation_db, attenuation_curve
from .qkd_analysis import binary_entropy, decoy_key_rate, shor_preskill_rate, sift
from .feasibility import fig5_sweep, snr_analytic
from .coincidence import ClockSolution, match_pairs, refine_offset, track_drift, xcorr_offset
from .bell_analysis import chsh_S, correlation_E, required_coincidences

__all__ = [
    "DelayModel",
    "PassProfile",
    "slant_range",
    "synth_pass",
    "usable_window",
    "LinkParams",
    "attenuation_db",
    "attenuation_curve",
    "binary_entropy",
    "decoy_key_rate",
    "shor_preskill_rate",
    "sift",
    "fig5_sweep",
    "snr_analytic",
    "ClockSolution",
    "match_pairs",
    "refine_offset",
    "track_drift",
    "xcorr_offset",
    "chsh_S",
    "correlation_E",
    "required_coincidences",
]
