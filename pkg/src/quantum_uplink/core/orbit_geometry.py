"""
ISS Pass Geometry
=================

Slant range, nadir angle and footprint of an ISS pass over an optical ground
station, plus the usable quantum-link window under the Cupola/NightPOD pointing
constraints.

Spherical Earth, circular orbit. The station sits at sea level; its altitude is
carried for reports only.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import DomainError
from ..utils.logger import get_logger

logger = get_logger(__name__)

EARTH_RADIUS_KM = 6371.0
ISS_ALTITUDE_KM = 400.0
GM_EARTH_KM3_S2 = 398600.4418
NIGHTPOD_SAFETY_HALF_TILT_DEG = 18.0

ArrayLike = Union[float, np.ndarray]


class GroundStation(BaseModel):
    """Optical ground station."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "OGS"
    altitude_m: float = Field(default=0.0, ge=0.0)
    background_cps: float = Field(default=1000.0, ge=0.0)


class LinkWindowConstraints(BaseModel):
    """Pointing constraints that bound the usable part of a pass."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    min_elevation_deg: float = Field(default=51.0, gt=0.0, lt=90.0)
    max_nadir_angle_deg: float = Field(default=36.0, gt=0.0, lt=90.0)
    max_window_incidence_deg: float = Field(default=10.0, gt=0.0, lt=90.0)
    max_duration_s: float = Field(default=70.0, gt=0.0)
    enforce_window_incidence: bool = False
    nightpod_safety_limit: bool = False

    def nadir_bound(self) -> Tuple[float, str]:
        """Tightest nadir-angle limit and the name of the constraint setting it."""
        bound, name = self.max_nadir_angle_deg, "max_nadir_angle"
        if self.nightpod_safety_limit and NIGHTPOD_SAFETY_HALF_TILT_DEG < bound:
            bound, name = NIGHTPOD_SAFETY_HALF_TILT_DEG, "nightpod_safety_limit"
        if self.enforce_window_incidence and self.max_window_incidence_deg < bound:
            bound, name = self.max_window_incidence_deg, "max_window_incidence"
        return bound, name


@dataclass(frozen=True)
class LinkWindow:
    """Contiguous usable interval of a pass (pass time, seconds)."""

    t_start: float
    t_end: float
    start_constraint: str
    end_constraint: str

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def as_dict(self) -> dict:
        return {
            "t_start_s": self.t_start,
            "t_end_s": self.t_end,
            "duration_s": self.duration,
            "start_constraint": self.start_constraint,
            "end_constraint": self.end_constraint,
        }


def _check_elevation(elevation: np.ndarray) -> None:
    if np.any(~np.isfinite(elevation)) or np.any(elevation < 0.0) or np.any(elevation > 90.0):
        raise DomainError(f"elevation must lie in [0, 90] degrees, got {elevation}")


def _scalar_or_array(value: np.ndarray, like) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


def slant_range(
    elevation_deg: ArrayLike,
    h_km: float = ISS_ALTITUDE_KM,
    re_km: float = EARTH_RADIUS_KM,
) -> ArrayLike:
    """
    Line-of-sight distance from the station to the spacecraft.

    Args:
        elevation_deg: Elevation above the horizon, degrees
        h_km: Orbit altitude, km
        re_km: Earth radius, km

    Returns:
        Slant range in km
    """
    elevation = np.asarray(elevation_deg, dtype=float)
    _check_elevation(elevation)
    if h_km < 0 or re_km <= 0:
        raise DomainError(f"need h >= 0 and Re > 0, got h={h_km}, Re={re_km}")

    s = np.sin(np.radians(elevation))
    distance = np.sqrt((re_km * s) ** 2 + 2.0 * re_km * h_km + h_km**2) - re_km * s
    # zenith: the closed form leaves a rounding residue
    distance = np.where(elevation == 90.0, h_km, distance)
    return _scalar_or_array(distance, elevation_deg)


def nadir_angle(
    elevation_deg: ArrayLike,
    h_km: float = ISS_ALTITUDE_KM,
    re_km: float = EARTH_RADIUS_KM,
) -> ArrayLike:
    """Angle between the ISS nadir direction and the line of sight, degrees."""
    elevation = np.asarray(elevation_deg, dtype=float)
    _check_elevation(elevation)
    if h_km <= 0 or re_km <= 0:
        raise DomainError(f"need h > 0 and Re > 0, got h={h_km}, Re={re_km}")

    sin_nadir = re_km * np.cos(np.radians(elevation)) / (re_km + h_km)
    angle = np.degrees(np.arcsin(np.clip(sin_nadir, 0.0, 1.0)))
    angle = np.where(elevation == 90.0, 0.0, angle)
    return _scalar_or_array(angle, elevation_deg)


def elevation_for_nadir(
    nadir_deg: float, h_km: float = ISS_ALTITUDE_KM, re_km: float = EARTH_RADIUS_KM
) -> float:
    """Elevation at which the line of sight is nadir_deg off nadir."""
    cos_elevation = np.sin(np.radians(nadir_deg)) * (re_km + h_km) / re_km
    if not 0.0 <= cos_elevation <= 1.0:
        raise DomainError(f"nadir angle {nadir_deg} deg is beyond the horizon")
    return float(np.degrees(np.arccos(cos_elevation)))


def footprint_diameter(slant_range_km: float, fov_rad: float) -> float:
    """Diameter in meters of the receiver field of view projected on the ground."""
    if slant_range_km < 0 or fov_rad < 0:
        raise DomainError("slant range and field of view must be non-negative")
    return slant_range_km * 1e3 * fov_rad


def angular_rate(h_km: float = ISS_ALTITUDE_KM, re_km: float = EARTH_RADIUS_KM) -> float:
    """Mean motion of a circular orbit, rad/s."""
    return float(np.sqrt(GM_EARTH_KM3_S2 / (re_km + h_km) ** 3))


@dataclass(frozen=True)
class PassProfile:
    """Sampled overhead pass; t = 0 is the closest approach."""

    t_s: np.ndarray
    elevation_deg: np.ndarray
    slant_range_km: np.ndarray
    nadir_angle_deg: np.ndarray
    max_elevation: float
    altitude_km: float = ISS_ALTITUDE_KM
    earth_radius_km: float = EARTH_RADIUS_KM
    cross_track_angle_rad: float = 0.0
    angular_rate_rad_s: float = 0.0

    def __len__(self) -> int:
        return len(self.t_s)

    def _central_angle(self, t: ArrayLike) -> np.ndarray:
        cos_gamma = np.cos(self.cross_track_angle_rad) * np.cos(
            self.angular_rate_rad_s * np.asarray(t, dtype=float)
        )
        return np.arccos(np.clip(cos_gamma, -1.0, 1.0))

    def slant_range_at(self, t: ArrayLike) -> ArrayLike:
        """Exact slant range (km) at pass time t, also valid below the horizon."""
        r = self.earth_radius_km + self.altitude_km
        re = self.earth_radius_km
        gamma = self._central_angle(t)
        distance = np.sqrt(re**2 + r**2 - 2.0 * re * r * np.cos(gamma))
        return _scalar_or_array(distance, t)

    def elevation_at(self, t: ArrayLike) -> ArrayLike:
        """Elevation (degrees) at pass time t, clipped at the horizon."""
        r = self.earth_radius_km + self.altitude_km
        gamma = self._central_angle(t)
        elevation = np.degrees(
            np.arctan2(r * np.cos(gamma) - self.earth_radius_km, r * np.sin(gamma))
        )
        return _scalar_or_array(np.clip(elevation, 0.0, 90.0), t)

    def to_frame(self) -> pd.DataFrame:
        """Profile as `t_s,elevation_deg,slant_range_km,nadir_angle_deg`."""
        return pd.DataFrame(
            {
                "t_s": self.t_s,
                "elevation_deg": self.elevation_deg,
                "slant_range_km": self.slant_range_km,
                "nadir_angle_deg": self.nadir_angle_deg,
            }
        )


def synth_pass(
    max_elevation: float,
    h_km: float = ISS_ALTITUDE_KM,
    sample_dt: float = 0.1,
    re_km: float = EARTH_RADIUS_KM,
) -> PassProfile:
    """
    Generate a symmetric horizon-to-horizon pass peaking at max_elevation.

    The station is offset from the ground track by the Earth-central angle that
    gives the requested peak; along the track cos(gamma) = cos(beta) cos(omega t).

    Args:
        max_elevation: Peak elevation in degrees, (0, 90]
        h_km: Orbit altitude, km
        sample_dt: Sampling interval, seconds
        re_km: Earth radius, km

    Returns:
        PassProfile sampled every sample_dt with t = 0 at the peak
    """
    if not 0.0 < max_elevation <= 90.0:
        raise DomainError(f"max_elevation must lie in (0, 90], got {max_elevation}")
    if sample_dt <= 0:
        raise DomainError(f"sample_dt must be positive, got {sample_dt}")

    omega = angular_rate(h_km, re_km)
    beta = np.radians(90.0 - max_elevation - nadir_angle(max_elevation, h_km, re_km))
    gamma_horizon = np.arccos(re_km / (re_km + h_km))
    half_duration = np.arccos(np.cos(gamma_horizon) / np.cos(beta)) / omega

    n_half = int(np.floor(half_duration / sample_dt + 1e-9))
    t = np.arange(-n_half, n_half + 1) * sample_dt

    skeleton = PassProfile(
        t_s=t,
        elevation_deg=np.zeros(0),
        slant_range_km=np.zeros(0),
        nadir_angle_deg=np.zeros(0),
        max_elevation=float(max_elevation),
        altitude_km=h_km,
        earth_radius_km=re_km,
        cross_track_angle_rad=float(beta),
        angular_rate_rad_s=omega,
    )
    elevation = np.asarray(skeleton.elevation_at(t), dtype=float)
    elevation[n_half] = max_elevation

    profile = PassProfile(
        t_s=t,
        elevation_deg=elevation,
        slant_range_km=np.asarray(slant_range(elevation, h_km, re_km)),
        nadir_angle_deg=np.asarray(nadir_angle(elevation, h_km, re_km)),
        max_elevation=float(max_elevation),
        altitude_km=h_km,
        earth_radius_km=re_km,
        cross_track_angle_rad=float(beta),
        angular_rate_rad_s=omega,
    )
    logger.debug(
        "Synthesized pass: peak %.2f deg, %d samples over %.1f s",
        max_elevation,
        len(t),
        t[-1] - t[0],
    )
    return profile


def _edge_label(masks: dict, index: int, n: int) -> str:
    if index < 0 or index >= n:
        return "pass_edge"
    failing = [name for name, mask in masks.items() if not mask[index]]
    return "+".join(failing) if failing else "pass_edge"


def usable_window(
    profile: PassProfile, constraints: Optional[LinkWindowConstraints] = None
) -> Optional[LinkWindow]:
    """
    Maximal contiguous interval satisfying every pointing constraint.

    The interval is truncated to max_duration, centred on closest approach.
    Returns None when fewer than two consecutive samples qualify.
    """
    constraints = constraints or LinkWindowConstraints()
    nadir_limit, nadir_name = constraints.nadir_bound()

    masks = {
        "min_elevation": profile.elevation_deg >= constraints.min_elevation_deg,
        nadir_name: profile.nadir_angle_deg <= nadir_limit,
    }
    ok = np.logical_and.reduce(list(masks.values()))
    n = len(ok)
    if not ok.any():
        return None

    # runs of True: [starts[i], ends[i]] inclusive
    padded = np.concatenate(([False], ok, [False])).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    starts, ends = edges[0::2], edges[1::2] - 1
    lengths = ends - starts
    best = int(np.argmax(lengths))
    if lengths[best] < 1:
        return None

    i0, i1 = int(starts[best]), int(ends[best])
    start_label = _edge_label(masks, i0 - 1, n)
    end_label = _edge_label(masks, i1 + 1, n)
    t = profile.t_s

    if t[i1] - t[i0] > constraints.max_duration_s:
        half = constraints.max_duration_s / 2.0
        centre = float(np.clip(0.0, t[i0] + half, t[i1] - half))
        eps = 1e-9
        i0 = int(np.searchsorted(t, centre - half - eps, side="left"))
        i1 = int(np.searchsorted(t, centre + half + eps, side="right")) - 1
        start_label = end_label = "max_duration"

    window = LinkWindow(
        t_start=float(t[i0]),
        t_end=float(t[i1]),
        start_constraint=start_label,
        end_constraint=end_label,
    )
    logger.debug(
        "Usable window %.1f s .. %.1f s (%.1f s), bounded by %s / %s",
        window.t_start,
        window.t_end,
        window.duration,
        start_label,
        end_label,
    )
    return window


SPEED_OF_LIGHT_KM_S = 299792.458


@dataclass(frozen=True)
class DelayModel:
    """
    Ephemeris-predicted one-way propagation delay on a stream timebase.

    Stream time t corresponds to pass time t + t0_pass.
    """

    profile: PassProfile
    t0_pass: float
    time_bias_s: float = 0.0

    def delay(self, stream_t: ArrayLike) -> ArrayLike:
        """Delay in seconds for light emitted at stream_t."""
        distance = self.profile.slant_range_at(np.asarray(stream_t, dtype=float) + self.t0_pass)
        return _scalar_or_array(np.asarray(distance) / SPEED_OF_LIGHT_KM_S + self.time_bias_s, stream_t)

    def rate(self, stream_t: ArrayLike, step: float = 0.5) -> ArrayLike:
        """d(delay)/dt, dimensionless."""
        t = np.asarray(stream_t, dtype=float)
        return _scalar_or_array(
            (np.asarray(self.delay(t + step)) - np.asarray(self.delay(t - step))) / (2.0 * step),
            stream_t,
        )
