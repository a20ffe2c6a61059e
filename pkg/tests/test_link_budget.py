"""
Tests for the uplink attenuation budget.
"""

import numpy as np
import pytest

from src.quantum_uplink.core.link_budget import (
    LinkParams,
    attenuation_curve,
    attenuation_db,
    attenuation_profile,
    channel_attenuation_db,
    effective_divergence,
)
from src.quantum_uplink.core.orbit_geometry import synth_pass
from src.quantum_uplink.exceptions import DomainError


def test_zenith_budget_is_about_40_db():
    """Default ISS uplink at zenith loses about 40 dB."""
    budget = attenuation_db(400.0, 90.0, LinkParams())
    assert budget.total_db == pytest.approx(39.97, abs=0.05)
    assert budget.atmospheric_db == pytest.approx(-10 * np.log10(0.7))
    assert budget.system_db == 2.5
    assert budget.margin_db == 5.0


def test_terms_sum_to_total():
    budget = attenuation_db(800.0, 30.0, LinkParams())
    terms = budget.geometric_db + budget.atmospheric_db + budget.system_db + budget.margin_db
    assert budget.total_db == pytest.approx(terms)
    assert budget.transmittance == pytest.approx(10 ** (-budget.total_db / 10))
    assert budget.as_dict()["total_db"] == pytest.approx(budget.total_db)


def test_attenuation_grows_with_range_and_lower_elevation():
    params = LinkParams()
    near = attenuation_db(400.0, 90.0, params).total_db
    far = attenuation_db(600.0, 90.0, params).total_db
    low = attenuation_db(400.0, 40.0, params).total_db
    assert far > near
    assert low > near


def test_geometric_term_never_negative():
    """A receiver larger than the beam collects everything."""
    budget = attenuation_db(0.001, 90.0, LinkParams(d_r_m=10.0))
    assert budget.geometric_db == 0.0


def test_turbulence_dominates_large_apertures():
    params = LinkParams(d_t_m=2.0)
    theta = effective_divergence(params)
    turbulence = params.wavelength_m / params.fried_r0_m
    assert theta > turbulence
    assert theta < 1.2 * np.hypot(turbulence, params.pointing_jitter_rad)


def test_invalid_geometry_is_rejected():
    with pytest.raises(DomainError):
        attenuation_db(0.0, 90.0, LinkParams())
    with pytest.raises(DomainError):
        attenuation_db(400.0, 0.0, LinkParams())


def test_fixed_attenuation_overrides_budget():
    params = LinkParams(fixed_attenuation_db=35.0)
    assert channel_attenuation_db(1200.0, 20.0, params) == 35.0


def test_profile_attenuation_minimum_at_closest_approach():
    profile = synth_pass(90.0, sample_dt=1.0)
    curve = attenuation_profile(profile, LinkParams())
    finite = np.isfinite(curve)
    assert np.nanargmin(curve) == len(profile) // 2
    assert np.isnan(curve[~finite]).all()


def test_aperture_sweep_order_and_monotonicity():
    values = [0.05, 0.1, 0.2, 0.4]
    df = attenuation_curve(values, workers=2)
    assert list(df["D_T_m"]) == values
    assert list(df.columns) == [
        "D_T_m", "total_db", "geometric_db", "atmospheric_db", "system_db", "margin_db"
    ]
    assert (np.diff(df["total_db"]) < 0).all()


def test_empty_sweep_is_rejected():
    with pytest.raises(DomainError):
        attenuation_curve([])


if __name__ == "__main__":
    pytest.main([__file__])
