"""
Uplink Link Budget
==================

Attenuation of the ground-to-ISS channel as a function of transmitter aperture,
slant range and atmospheric/pointing parameters.

Geometric loss uses the Gaussian far-field small-collection form
eta = D_R^2 / (2 (theta_eff L)^2), clamped at 1, with
theta_eff = sqrt((k lambda / D_T)^2 + (lambda / r0)^2 + jitter^2).
Detector quantum efficiency is part of system_loss_db.
"""

import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import DomainError
from ..utils.parallel import ordered_map
from .orbit_geometry import PassProfile


class LinkParams(BaseModel):
    """Optical parameters of the uplink (calibrated defaults)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    wavelength_m: float = Field(default=810e-9, gt=0.0)
    d_t_m: float = Field(default=0.20, gt=0.0)
    d_r_m: float = Field(default=0.143, gt=0.0)
    diffraction_coefficient: float = Field(default=1.22, gt=0.0)
    fried_r0_m: float = Field(default=0.12, gt=0.0)
    pointing_jitter_rad: float = Field(default=3e-6, ge=0.0)
    system_loss_db: float = Field(default=2.5, ge=0.0)
    margin_db: float = Field(default=5.0, ge=0.0)
    atm_transmission_zenith: float = Field(default=0.7, gt=0.0, le=1.0)
    fixed_attenuation_db: Optional[float] = Field(default=None, ge=0.0)


@dataclass(frozen=True)
class LinkBudget:
    """Attenuation in dB split into its non-negative terms."""

    geometric_db: float
    atmospheric_db: float
    system_db: float
    margin_db: float
    effective_divergence: float

    @property
    def total_db(self) -> float:
        return self.geometric_db + self.atmospheric_db + self.system_db + self.margin_db

    @property
    def transmittance(self) -> float:
        return 10.0 ** (-self.total_db / 10.0)

    def as_dict(self) -> dict:
        data = asdict(self)
        data["total_db"] = self.total_db
        return data


def effective_divergence(params: LinkParams) -> float:
    """Effective far-field divergence half-angle, rad."""
    diffraction = params.diffraction_coefficient * params.wavelength_m / params.d_t_m
    turbulence = params.wavelength_m / params.fried_r0_m
    return math.sqrt(diffraction**2 + turbulence**2 + params.pointing_jitter_rad**2)


def _loss_db(efficiency: float) -> float:
    # clamp -0.0 to 0.0
    return max(0.0, -10.0 * math.log10(efficiency))


def attenuation_db(
    slant_range_km: float, elevation_deg: float, params: LinkParams
) -> LinkBudget:
    """
    Link budget for one line of sight.

    Args:
        slant_range_km: Distance station to ISS, km
        elevation_deg: Elevation of the line of sight, degrees
        params: Optical link parameters

    Returns:
        LinkBudget whose terms sum to the total attenuation
    """
    if slant_range_km <= 0:
        raise DomainError(f"slant range must be positive, got {slant_range_km}")
    if not 0.0 < elevation_deg <= 90.0:
        raise DomainError(f"elevation must lie in (0, 90] degrees, got {elevation_deg}")

    theta = effective_divergence(params)
    beam = theta * slant_range_km * 1e3
    eta_geo = min(1.0, params.d_r_m**2 / (2.0 * beam**2))

    airmass = 1.0 / math.sin(math.radians(elevation_deg))
    eta_atm = params.atm_transmission_zenith**airmass

    return LinkBudget(
        geometric_db=_loss_db(eta_geo),
        atmospheric_db=_loss_db(eta_atm),
        system_db=params.system_loss_db,
        margin_db=params.margin_db,
        effective_divergence=theta,
    )


def channel_attenuation_db(
    slant_range_km: float, elevation_deg: float, params: LinkParams
) -> float:
    """Total attenuation, honouring a pinned fixed_attenuation_db."""
    if params.fixed_attenuation_db is not None:
        return float(params.fixed_attenuation_db)
    return attenuation_db(slant_range_km, elevation_deg, params).total_db


def attenuation_profile(profile: PassProfile, params: LinkParams) -> np.ndarray:
    """Total attenuation (dB) at each sample of a pass; NaN below the horizon."""
    out = np.full(len(profile), np.nan)
    for i, (distance, elevation) in enumerate(
        zip(profile.slant_range_km, profile.elevation_deg)
    ):
        if elevation > 0.0:
            out[i] = channel_attenuation_db(distance, elevation, params)
    return out


def attenuation_curve(
    d_t_values: Iterable[float],
    params: Optional[LinkParams] = None,
    slant_range_km: float = 400.0,
    elevation_deg: float = 90.0,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Sweep the transmitter aperture.

    Returns:
        DataFrame `D_T_m,total_db,geometric_db,atmospheric_db,system_db,margin_db`
        in sweep order
    """
    values: List[float] = [float(v) for v in d_t_values]
    if not values:
        raise DomainError("aperture sweep is empty")
    params = params or LinkParams()

    def evaluate(d_t: float) -> dict:
        budget = attenuation_db(
            slant_range_km, elevation_deg, params.model_copy(update={"d_t_m": d_t})
        )
        return {
            "D_T_m": d_t,
            "total_db": budget.total_db,
            "geometric_db": budget.geometric_db,
            "atmospheric_db": budget.atmospheric_db,
            "system_db": budget.system_db,
            "margin_db": budget.margin_db,
        }

    return pd.DataFrame(ordered_map(evaluate, values, workers))
