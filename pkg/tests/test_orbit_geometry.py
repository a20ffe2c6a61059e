"""
Tests for pass geometry and link-window selection.
"""

import numpy as np
import pytest

from src.quantum_uplink.core.orbit_geometry import (
    DelayModel,
    LinkWindowConstraints,
    elevation_for_nadir,
    footprint_diameter,
    nadir_angle,
    slant_range,
    synth_pass,
    usable_window,
)
from src.quantum_uplink.exceptions import DomainError


def test_slant_range_zenith_is_altitude():
    """At zenith the line of sight is the orbit altitude."""
    assert slant_range(90.0) == pytest.approx(400.0)
    assert slant_range(90.0, h_km=350.0) == pytest.approx(350.0)


def test_slant_range_grows_towards_horizon():
    elevations = np.array([90.0, 60.0, 30.0, 10.0, 0.0])
    distances = slant_range(elevations)
    assert np.all(np.diff(distances) > 0)
    # horizon: sqrt(2 Re h + h^2)
    assert distances[-1] == pytest.approx(np.sqrt(2 * 6371.0 * 400.0 + 400.0**2))


def test_slant_range_rejects_invalid_elevation():
    with pytest.raises(DomainError):
        slant_range(-1.0)
    with pytest.raises(DomainError):
        slant_range(91.0)


def test_nadir_angle_limits():
    assert nadir_angle(90.0) == 0.0
    assert nadir_angle(0.0) == pytest.approx(np.degrees(np.arcsin(6371.0 / 6771.0)))


def test_nadir_36_degrees_matches_elevation_bound():
    """The 36 deg NightPod limit sits at about 51.3 deg elevation."""
    elevation = elevation_for_nadir(36.0)
    assert elevation == pytest.approx(51.34, abs=0.05)
    assert nadir_angle(elevation) == pytest.approx(36.0, abs=1e-6)


def test_footprint_diameter():
    # 1 mrad over 400 km
    assert footprint_diameter(400.0, 1e-3) == pytest.approx(400.0)
    with pytest.raises(DomainError):
        footprint_diameter(-1.0, 1e-3)


def test_synth_pass_is_symmetric_and_peaks_at_max_elevation():
    profile = synth_pass(70.0, sample_dt=0.5)
    mid = len(profile) // 2
    assert profile.t_s[mid] == 0.0
    assert profile.elevation_deg[mid] == pytest.approx(70.0)
    np.testing.assert_allclose(profile.elevation_deg, profile.elevation_deg[::-1], atol=1e-9)
    assert profile.elevation_deg.max() == pytest.approx(70.0)
    assert profile.slant_range_km.min() == pytest.approx(slant_range(70.0))


def test_synth_pass_rejects_bad_arguments():
    with pytest.raises(DomainError):
        synth_pass(0.0)
    with pytest.raises(DomainError):
        synth_pass(45.0, sample_dt=0.0)


def test_profile_frame_columns():
    df = synth_pass(80.0, sample_dt=1.0).to_frame()
    assert list(df.columns) == ["t_s", "elevation_deg", "slant_range_km", "nadir_angle_deg"]


def test_overhead_window_is_bounded_by_elevation():
    window = usable_window(synth_pass(90.0))
    assert window is not None
    assert window.t_start == pytest.approx(-window.t_end)
    assert window.duration <= 70.0 + 1e-9
    assert window.start_constraint != "pass_edge"


def test_window_incidence_gives_worst_case_window():
    """Enforcing the 10 deg window incidence leaves about 20 s of pass."""
    constraints = LinkWindowConstraints(enforce_window_incidence=True)
    window = usable_window(synth_pass(90.0), constraints)
    assert window is not None
    assert 17.0 < window.duration < 22.0
    assert window.start_constraint == "max_window_incidence"
    assert window.end_constraint == "max_window_incidence"


def test_max_duration_truncates_around_closest_approach():
    constraints = LinkWindowConstraints(max_duration_s=10.0)
    window = usable_window(synth_pass(90.0), constraints)
    assert window.duration == pytest.approx(10.0)
    assert window.start_constraint == "max_duration"
    assert window.t_start == pytest.approx(-5.0)


def test_low_pass_has_no_window():
    assert usable_window(synth_pass(40.0)) is None


def test_window_dict():
    window = usable_window(synth_pass(90.0))
    data = window.as_dict()
    assert data["duration_s"] == pytest.approx(window.duration)
    assert set(data) == {"t_start_s", "t_end_s", "duration_s", "start_constraint", "end_constraint"}


def test_delay_model_tracks_slant_range():
    profile = synth_pass(90.0)
    model = DelayModel(profile, t0_pass=-10.0)
    # stream t = 10 s is the closest approach
    assert model.delay(10.0) == pytest.approx(400.0 / 299792.458)
    assert model.rate(10.0) == pytest.approx(0.0, abs=1e-12)
    # approaching: delay shrinks
    assert model.rate(0.0) < 0.0
    assert abs(model.rate(0.0)) < 1e-4


if __name__ == "__main__":
    pytest.main([__file__])
