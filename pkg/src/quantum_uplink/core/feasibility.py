"""
Feasibility Model
=================

Closed-form SNR, visibility, QBER and key-rate predictions over attenuation and
background grids.

Accidentals count the local singles against every uncorrelated space count in
one coincidence window: A = S_local * (background + darks + uncorrelated) * tau_c.

The SNR-visibility mapping V = SNR / (SNR + 2) is the one for which the CHSH
threshold V = 1/sqrt(2) falls exactly on SNR_min = 2 / (sqrt(2) - 1). A peak over
flat accidentals gives V_eff = V_source * SNR / (SNR + 1) instead, which is what
the Monte Carlo measures; effective_visibility() reports that second form.
"""

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import DomainError
from ..models.source_models import (
    DetectorSpec,
    EpsSpec,
    FpsSpec,
    eps_local_rates,
    expected_remote_rates,
    multi_pair_rate,
    transmittance,
)
from ..utils.parallel import ordered_map
from .link_budget import LinkParams, attenuation_curve
from .qkd_analysis import (
    DEFAULT_EC_EFFICIENCY,
    DEFAULT_SIFTING_FACTOR,
    SHOR_PRESKILL_QBER_LIMIT,
    decoy_key_rate,
    decoy_observables,
)

# 0.8 ns puts the 40 dB point at SNR ~18 for 1 kcps and ~5 for 10 kcps background
DEFAULT_TAU_C_S = 0.8e-9


class NoiseBudget(BaseModel):
    """Uncorrelated count rates at the space receiver."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    background_cps: float = Field(default=1000.0, ge=0.0)
    dark_total_cps: float = Field(default=2000.0, ge=0.0)
    uncorrelated_signal_cps: float = Field(default=0.0, ge=0.0)
    tau_c_s: float = Field(default=DEFAULT_TAU_C_S, gt=0.0)

    @property
    def total_cps(self) -> float:
        return self.background_cps + self.dark_total_cps + self.uncorrelated_signal_cps


@dataclass(frozen=True)
class SnrResult:
    snr: float
    signal_coinc: float
    accidental_coinc: float
    visibility: float
    qber: float

    @property
    def above_bell_threshold(self) -> bool:
        return self.snr > bell_snr_threshold()

    @property
    def below_qber_limit(self) -> bool:
        return self.qber < SHOR_PRESKILL_QBER_LIMIT

    def as_dict(self) -> dict:
        data = asdict(self)
        data["above_bell_threshold"] = self.above_bell_threshold
        data["below_qber_limit"] = self.below_qber_limit
        return data


def bell_snr_threshold() -> float:
    """Minimum SNR for a CHSH violation, 2 / (sqrt(2) - 1)."""
    return 2.0 / (math.sqrt(2.0) - 1.0)


def visibility_from_snr(snr: float) -> float:
    if snr < 0 or math.isnan(snr):
        raise DomainError(f"SNR must be non-negative, got {snr}")
    if math.isinf(snr):
        return 1.0
    return snr / (snr + 2.0)


def qber_from_snr(snr: float, intrinsic_error: float = 0.0) -> float:
    """QBER = (1 - V) / 2, plus e_d * V for intrinsic misalignment."""
    visibility = visibility_from_snr(snr)
    return (1.0 - visibility) / 2.0 + intrinsic_error * visibility


def effective_visibility(source_visibility: float, measured_snr: float) -> float:
    """Visibility of a correlation peak riding on flat accidentals."""
    if math.isinf(measured_snr):
        return source_visibility
    return source_visibility * measured_snr / (measured_snr + 1.0)


def noise_budget_for(
    eps: EpsSpec,
    detector: DetectorSpec,
    background_cps: float,
    attenuation_db: float,
    tau_c_s: float = DEFAULT_TAU_C_S,
) -> NoiseBudget:
    """Noise budget whose uncorrelated signal is the multi-pair light reaching the ISS."""
    return NoiseBudget(
        background_cps=background_cps,
        dark_total_cps=detector.dark_total_cps,
        uncorrelated_signal_cps=multi_pair_rate(eps) * transmittance(attenuation_db),
        tau_c_s=tau_c_s,
    )


def snr_analytic(
    eps: EpsSpec, detector: DetectorSpec, attenuation_db: float, noise: NoiseBudget
) -> SnrResult:
    """
    Expected coincidence SNR of an EPS uplink.

    Returns:
        SnrResult; a noiseless channel reports snr = inf
    """
    signal = expected_remote_rates(eps, attenuation_db, detector).coincidences_or_sifted
    accidental = eps_local_rates(eps).singles_per_arm * noise.total_cps * noise.tau_c_s
    if accidental == 0.0:
        snr = math.inf if signal > 0 else 0.0
    else:
        snr = signal / accidental
    visibility = visibility_from_snr(snr)
    return SnrResult(
        snr=snr,
        signal_coinc=signal,
        accidental_coinc=accidental,
        visibility=visibility,
        qber=(1.0 - visibility) / 2.0,
    )


def fig5_sweep(
    attenuations: Iterable[float],
    backgrounds: Iterable[float],
    eps: Optional[EpsSpec] = None,
    fps: Optional[FpsSpec] = None,
    detector: Optional[DetectorSpec] = None,
    tau_c_s: float = DEFAULT_TAU_C_S,
    gate_s: float = 1e-9,
    f: float = DEFAULT_EC_EFFICIENCY,
    sifting_factor: float = DEFAULT_SIFTING_FACTOR,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Bell SNR and decoy key rate over an attenuation x background grid.

    Returns:
        DataFrame `attenuation_db,background_cps,snr,visibility,qber,
        key_rate_per_pulse,key_rate_cps` in grid order
    """
    attenuations = [float(a) for a in attenuations]
    backgrounds = [float(b) for b in backgrounds]
    if not attenuations or not backgrounds:
        raise DomainError("attenuation and background grids must be non-empty")
    eps = eps or EpsSpec()
    fps = fps or FpsSpec()
    detector = detector or DetectorSpec()

    def evaluate(cell) -> dict:
        attenuation, background = cell
        noise = noise_budget_for(eps, detector, background, attenuation, tau_c_s)
        result = snr_analytic(eps, detector, attenuation, noise)
        y0 = (background + detector.dark_total_cps) * gate_s
        key = decoy_key_rate(
            decoy_observables(transmittance(attenuation), fps, y0, f=f), sifting_factor
        )
        return {
            "attenuation_db": attenuation,
            "background_cps": background,
            "snr": result.snr,
            "visibility": result.visibility,
            "qber": result.qber,
            "key_rate_per_pulse": key.rate_per_pulse,
            "key_rate_cps": key.rate_cps,
        }

    grid = list(itertools.product(attenuations, backgrounds))
    return pd.DataFrame(ordered_map(evaluate, grid, workers))


def _snr_column(background: float) -> str:
    label = int(background) if float(background).is_integer() else background
    return f"snr_{label}cps"


def snr_sweep_over_apertures(
    d_t_values: Iterable[float],
    backgrounds: Iterable[float],
    params: Optional[LinkParams] = None,
    eps: Optional[EpsSpec] = None,
    detector: Optional[DetectorSpec] = None,
    tau_c_s: float = DEFAULT_TAU_C_S,
    workers: int = 1,
) -> pd.DataFrame:
    """Zenith aperture sweep with one SNR column per background level."""
    eps = eps or EpsSpec()
    detector = detector or DetectorSpec()
    curve = attenuation_curve(d_t_values, params, workers=workers)
    backgrounds: List[float] = [float(b) for b in backgrounds]
    for background in backgrounds:
        curve[_snr_column(background)] = [
            snr_analytic(
                eps,
                detector,
                attenuation,
                noise_budget_for(eps, detector, background, attenuation, tau_c_s),
            ).snr
            for attenuation in curve["total_db"]
        ]
    return curve
