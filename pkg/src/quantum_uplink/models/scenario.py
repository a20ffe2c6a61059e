"""
Scenario Model
==============

A scenario aggregates every physical parameter of one simulated pass. Scenario
files are YAML with the unit in every key name; unknown keys are rejected.
"""

from pathlib import Path
from typing import Annotated, List, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..core.link_budget import LinkParams
from ..core.orbit_geometry import (
    EARTH_RADIUS_KM,
    ISS_ALTITUDE_KM,
    GroundStation,
    LinkWindow,
    LinkWindowConstraints,
    PassProfile,
    synth_pass,
    usable_window,
)
from ..exceptions import EmptyWindowError, ScenarioError
from ..utils.config import Config, get_config
from .source_models import DetectorSpec, EpsSpec, FpsSpec


class PassSpec(BaseModel):
    """Parameters of the synthetic overhead pass."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_elevation_deg: float = Field(default=90.0, gt=0.0, le=90.0)
    altitude_km: float = Field(default=ISS_ALTITUDE_KM, gt=0.0)
    earth_radius_km: float = Field(default=EARTH_RADIUS_KM, gt=0.0)
    sample_dt_s: float = Field(default=0.1, gt=0.0)


class ClockModel(BaseModel):
    """Space clock relative to the ground clock."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    offset_ms: float = 0.0
    drift: float = Field(default=0.0, ge=-1e-6, le=1e-6)
    jitter_sigma_ns: float = Field(default=0.0, ge=0.0)
    epoch_s: float = Field(default=2.0, gt=0.0)

    @property
    def offset_s(self) -> float:
        return self.offset_ms * 1e-3

    @model_validator(mode="after")
    def _check_offset(self) -> "ClockModel":
        if abs(self.offset_s) >= self.epoch_s:
            raise ValueError("|offset| must stay below epoch_s so timestamps stay non-negative")
        return self


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser on uint64 arrays."""
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


class MeasurementSettings(BaseModel):
    """
    Analyzer angles. The ground basis is a passive 50:50 choice between the two
    ground angles; the space basis is a passive choice within the active angle
    set, and the extra half-wave plate cycles the active set.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    ground_angles_deg: List[float] = Field(default_factory=lambda: [0.0, 45.0])
    space_angle_sets_deg: List[List[float]] = Field(default_factory=lambda: [[22.5, 67.5]])
    hwp_segment_s: float = Field(default=1.0, gt=0.0)
    per_event_switching: bool = False
    switch_period_ns: float = Field(default=100.0, gt=0.0)

    @field_validator("ground_angles_deg")
    @classmethod
    def _two_ground_angles(cls, value: List[float]) -> List[float]:
        if len(value) != 2 or not all(0.0 <= a < 180.0 for a in value):
            raise ValueError("need two ground angles in [0, 180)")
        return value

    @field_validator("space_angle_sets_deg")
    @classmethod
    def _space_sets(cls, value: List[List[float]]) -> List[List[float]]:
        if not value or any(len(s) != 2 or not all(0.0 <= a < 180.0 for a in s) for s in value):
            raise ValueError("need one or more pairs of space angles in [0, 180)")
        return value

    def space_set_index(self, ground_time_ps: np.ndarray, seed: int = 0) -> np.ndarray:
        """
        Active space angle set for events stamped at ground_time_ps.

        Segment mode cycles sets every hwp_segment_s. Per-event mode redraws the set
        every switch_period_ns from a public schedule keyed by the scenario seed.
        """
        t = np.asarray(ground_time_ps, dtype=np.int64)
        n_sets = len(self.space_angle_sets_deg)
        if n_sets == 1:
            return np.zeros(t.shape, dtype=np.intp)
        if self.per_event_switching:
            period = max(1, int(round(self.switch_period_ns * 1e3)))
            slot = (t // period).astype(np.uint64)
            return (_mix64(slot ^ np.uint64(seed)) % np.uint64(n_sets)).astype(np.intp)
        period = max(1, int(round(self.hwp_segment_s * 1e12)))
        return ((t // period) % n_sets).astype(np.intp)

    def ground_angle(self, basis: np.ndarray) -> np.ndarray:
        return np.asarray(self.ground_angles_deg)[np.asarray(basis, dtype=np.intp)]

    def space_angle(self, set_index: np.ndarray, basis: np.ndarray) -> np.ndarray:
        sets = np.asarray(self.space_angle_sets_deg)
        return sets[np.asarray(set_index, dtype=np.intp), np.asarray(basis, dtype=np.intp)]


class NoiseSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    coincidence_window_ns: Optional[float] = Field(default=None, gt=0.0)
    gate_ns: Optional[float] = Field(default=None, gt=0.0)
    multi_pair_noise: bool = True


class GenerationSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    chunk_s: float = Field(default=1.0, gt=0.0)
    max_events: float = Field(default=1e9, gt=0.0)
    max_window_s: Optional[float] = Field(default=None, gt=0.0)


SourceField = Annotated[Union[EpsSpec, FpsSpec], Field(discriminator="kind")]


class Scenario(BaseModel):
    """Everything needed to simulate and analyse one pass."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    name: str = "scenario"
    description: str = ""
    seed: int = Field(default=0, ge=0, lt=2**64)
    station: GroundStation = Field(default_factory=GroundStation)
    pass_: PassSpec = Field(default_factory=PassSpec, alias="pass")
    constraints: LinkWindowConstraints = Field(default_factory=LinkWindowConstraints)
    link: LinkParams = Field(default_factory=LinkParams)
    source: SourceField = Field(default_factory=EpsSpec)
    detectors: DetectorSpec = Field(default_factory=DetectorSpec)
    noise: NoiseSettings = Field(default_factory=NoiseSettings)
    clock: ClockModel = Field(default_factory=ClockModel)
    settings: MeasurementSettings = Field(default_factory=MeasurementSettings)
    generation: GenerationSettings = Field(default_factory=GenerationSettings)

    @property
    def protocol(self) -> str:
        return "bell" if isinstance(self.source, EpsSpec) else "qkd"

    def profile(self) -> PassProfile:
        return synth_pass(
            self.pass_.max_elevation_deg,
            self.pass_.altitude_km,
            self.pass_.sample_dt_s,
            self.pass_.earth_radius_km,
        )

    def window(self, profile: Optional[PassProfile] = None) -> LinkWindow:
        """Usable window, optionally shortened by generation.max_window_s."""
        if profile is None:
            profile = self.profile()
        window = usable_window(profile, self.constraints)
        if window is None:
            raise EmptyWindowError(
                f"pass peaking at {self.pass_.max_elevation_deg} deg never satisfies "
                f"elevation >= {self.constraints.min_elevation_deg} deg and nadir <= "
                f"{self.constraints.nadir_bound()[0]} deg"
            )
        limit = self.generation.max_window_s
        if limit is not None and window.duration > limit:
            centre = 0.5 * (window.t_start + window.t_end)
            window = LinkWindow(
                t_start=centre - limit / 2.0,
                t_end=centre + limit / 2.0,
                start_constraint="max_window_s",
                end_constraint="max_window_s",
            )
        return window

    def coincidence_window_s(self, config: Optional[Config] = None) -> float:
        if self.noise.coincidence_window_ns is not None:
            return self.noise.coincidence_window_ns * 1e-9
        return (config or get_config()).get_coincidence_window()

    def gate_s(self, config: Optional[Config] = None) -> float:
        if self.noise.gate_ns is not None:
            return self.noise.gate_ns * 1e-9
        return (config or get_config()).get_gate()

    def to_yaml(self) -> str:
        data = self.model_dump(mode="json", by_alias=True)
        return yaml.safe_dump(data, sort_keys=False)


def resolve_scenario_path(name_or_path: Union[str, Path], config: Optional[Config] = None) -> Path:
    """A file path, or the name of a bundled scenario."""
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = (config or get_config()).get_scenario_dir()
    for candidate in (bundled / path.name, bundled / f"{path.name}.yaml"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"scenario {name_or_path!s} not found (also looked in {bundled})")


def scenario_from_dict(data: dict) -> Scenario:
    try:
        return Scenario.model_validate(data or {})
    except ValidationError as e:
        raise ScenarioError(f"invalid scenario: {e}") from e


def load_scenario(name_or_path: Union[str, Path], config: Optional[Config] = None) -> Scenario:
    """
    Load a scenario file.

    Raises:
        FileNotFoundError: no such file or bundled scenario
        ScenarioError: YAML or validation failure
    """
    path = resolve_scenario_path(name_or_path, config)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ScenarioError(f"cannot parse {path}: {e}") from e
    return scenario_from_dict(data)
