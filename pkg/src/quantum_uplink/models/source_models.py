"""
Source and Detector Models
==========================

Parametric models of the entangled photon source (EPS), the decoy-state faint
pulse source (FPS) and the single-photon detectors, with expected local and
remote detection rates.
"""

import math
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import DomainError

BellState = Literal["phi_plus", "singlet"]
INTENSITY_CLASSES = ("signal", "decoy", "vacuum")


class EpsSpec(BaseModel):
    """Entangled photon pair source."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["eps"] = "eps"
    pair_generation_rate_cps: float = Field(default=2.0e7, ge=0.0)
    coupling_efficiency: float = Field(default=0.5, ge=0.0, le=1.0)
    visibility: float = Field(default=0.95, ge=0.0, le=1.0)
    state: BellState = "phi_plus"


class FpsSpec(BaseModel):
    """Faint pulse source for decoy-state BB84."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["fps"] = "fps"
    rep_rate_pps: float = Field(default=1.0e8, gt=0.0)
    mu_signal: float = Field(default=0.5, gt=0.0, le=1.0)
    mu_decoy: float = Field(default=0.1, gt=0.0)
    signal_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    decoy_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    vacuum_fraction: float = Field(default=0.25, ge=0.0, le=1.0)
    intrinsic_error: float = Field(default=0.01, ge=0.0, le=0.5)

    @model_validator(mode="after")
    def _check_intensities(self) -> "FpsSpec":
        if not self.mu_decoy < self.mu_signal:
            raise ValueError("need 0 < mu_decoy < mu_signal")
        total = self.signal_fraction + self.decoy_fraction + self.vacuum_fraction
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"intensity fractions must sum to 1, got {total}")
        return self

    def intensities(self) -> Dict[str, float]:
        return {"signal": self.mu_signal, "decoy": self.mu_decoy, "vacuum": 0.0}

    def fractions(self) -> Dict[str, float]:
        return {
            "signal": self.signal_fraction,
            "decoy": self.decoy_fraction,
            "vacuum": self.vacuum_fraction,
        }


class DetectorSpec(BaseModel):
    """Single-photon detector chain (same model on both ends)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    efficiency: float = Field(default=0.5, ge=0.0, le=1.0)
    dark_cps: float = Field(default=500.0, ge=0.0)
    n_detectors: int = Field(default=4, ge=1)
    timing_jitter_sigma_ns: float = Field(default=0.1, ge=0.0)
    fov_mrad: float = Field(default=1.0, gt=0.0)
    dead_time_ns: float = Field(default=0.0, ge=0.0)

    @property
    def dark_total_cps(self) -> float:
        return self.n_detectors * self.dark_cps


SourceSpec = Union[EpsSpec, FpsSpec]


@dataclass(frozen=True)
class LocalRates:
    singles_per_arm: float
    pairs_detected: float


@dataclass(frozen=True)
class RemoteRates:
    """Detection rates at the ISS receiver, cps."""

    singles: float
    coincidences_or_sifted: float


def transmittance(attenuation_db: float) -> float:
    """Linear channel transmittance 10^(-A/10); an infinite attenuation gives 0."""
    if attenuation_db < 0:
        raise DomainError(f"attenuation must be non-negative, got {attenuation_db}")
    if math.isinf(attenuation_db):
        return 0.0
    return 10.0 ** (-attenuation_db / 10.0)


def eps_local_rates(spec: EpsSpec) -> LocalRates:
    """Local singles per arm and detected pairs at the transmitter."""
    singles = spec.pair_generation_rate_cps * spec.coupling_efficiency
    pairs = spec.pair_generation_rate_cps * spec.coupling_efficiency**2
    return LocalRates(singles_per_arm=singles, pairs_detected=pairs)


def multi_pair_rate(spec: EpsSpec) -> float:
    """Uplink-arm photons whose twin is not detected locally, cps at the source."""
    return eps_local_rates(spec).singles_per_arm * (1.0 - spec.coupling_efficiency)


def fps_local_rate(spec: FpsSpec, detector: Optional[DetectorSpec] = None) -> float:
    """Local monitor detection rate of the faint pulse source, cps."""
    detector = detector or DetectorSpec()
    fractions = spec.fractions()
    return spec.rep_rate_pps * sum(
        fractions[name] * (1.0 - math.exp(-mu * detector.efficiency))
        for name, mu in spec.intensities().items()
    )


def fps_pulse_detection_rate(spec: FpsSpec, attenuation_db: float) -> float:
    """
    Signal detections per second at the receiver when each pulse of class i
    clicks with probability 1 - exp(-mu_i * T), detector efficiency inside T.
    """
    t = transmittance(attenuation_db)
    fractions = spec.fractions()
    return spec.rep_rate_pps * sum(
        fractions[name] * -math.expm1(-mu * t)
        for name, mu in spec.intensities().items()
    )


def expected_remote_rates(
    source: SourceSpec,
    attenuation_db: float,
    detector: Optional[DetectorSpec] = None,
) -> RemoteRates:
    """
    Expected detection rates at the remote (space) receiver.

    EPS: singles = uplink-arm singles x T, coincidences = singles x coupling.
    FPS: detections = local monitor rate x T.
    """
    t = transmittance(attenuation_db)
    if isinstance(source, EpsSpec):
        singles = eps_local_rates(source).singles_per_arm * t
        return RemoteRates(
            singles=singles,
            coincidences_or_sifted=singles * source.coupling_efficiency,
        )
    detections = fps_local_rate(source, detector) * t
    return RemoteRates(singles=detections, coincidences_or_sifted=detections)


def outcome_probabilities(
    theta_ground_deg, theta_space_deg, visibility: float, state: BellState = "phi_plus"
) -> np.ndarray:
    """
    Probability that the space outcome equals the ground outcome.

    E(a, b) = +/- V cos 2(a - b) for phi_plus / singlet; P(same) = (1 + E) / 2.
    """
    delta = np.radians(np.asarray(theta_ground_deg, dtype=float) - theta_space_deg)
    correlation = visibility * np.cos(2.0 * delta)
    if state == "singlet":
        correlation = -correlation
    return 0.5 * (1.0 + correlation)
