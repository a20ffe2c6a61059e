"""
Tests for source and detector rate models.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.quantum_uplink.exceptions import DomainError
from src.quantum_uplink.models.source_models import (
    DetectorSpec,
    EpsSpec,
    FpsSpec,
    eps_local_rates,
    expected_remote_rates,
    fps_local_rate,
    fps_pulse_detection_rate,
    multi_pair_rate,
    outcome_probabilities,
    transmittance,
)


def test_transmittance():
    assert transmittance(0.0) == 1.0
    assert transmittance(40.0) == pytest.approx(1e-4)
    assert transmittance(math.inf) == 0.0
    with pytest.raises(DomainError):
        transmittance(-3.0)


def test_eps_reference_rates():
    """20 Mcps pairs at 50% coupling: 10 Mcps singles, 1000 + 500 cps at 40 dB."""
    eps = EpsSpec()
    local = eps_local_rates(eps)
    assert local.singles_per_arm == pytest.approx(1e7)
    assert local.pairs_detected == pytest.approx(5e6)
    remote = expected_remote_rates(eps, 40.0)
    assert remote.singles == pytest.approx(1000.0)
    assert remote.coincidences_or_sifted == pytest.approx(500.0)
    assert multi_pair_rate(eps) == pytest.approx(5e6)


def test_fps_rates_follow_intensities():
    fps = FpsSpec()
    local = fps_local_rate(fps)
    expected = 1e8 * (0.5 * (1 - math.exp(-0.25)) + 0.25 * (1 - math.exp(-0.05)))
    assert local == pytest.approx(expected)
    remote = expected_remote_rates(fps, 40.0)
    assert remote.singles == pytest.approx(local * 1e-4)
    # receiver-side model: mu T per pulse
    assert fps_pulse_detection_rate(fps, 40.0) == pytest.approx(2750.0, rel=1e-3)


def test_strong_signal_pulse_reaches_4_kcps():
    """A signal-only mu = 1 source gives about 4 kcps through a 44 dB channel."""
    fps = FpsSpec(mu_signal=1.0, mu_decoy=0.1, signal_fraction=1.0, decoy_fraction=0.0, vacuum_fraction=0.0)
    assert fps_pulse_detection_rate(fps, 44.0) == pytest.approx(3981, rel=1e-2)


def test_fps_fractions_must_sum_to_one():
    with pytest.raises(ValidationError):
        FpsSpec(signal_fraction=0.5, decoy_fraction=0.5, vacuum_fraction=0.5)
    with pytest.raises(ValidationError):
        FpsSpec(mu_signal=0.1, mu_decoy=0.2)


def test_specs_are_frozen_and_strict():
    with pytest.raises(ValidationError):
        EpsSpec(unknown_key=1.0)
    with pytest.raises(ValidationError):
        EpsSpec(visibility=1.2)
    assert DetectorSpec().dark_total_cps == pytest.approx(2000.0)


def test_outcome_probabilities():
    assert outcome_probabilities(0.0, 0.0, 1.0) == pytest.approx(1.0)
    assert outcome_probabilities(0.0, 90.0, 1.0) == pytest.approx(0.0)
    assert outcome_probabilities(0.0, 45.0, 1.0) == pytest.approx(0.5)
    assert outcome_probabilities(0.0, 0.0, 1.0, "singlet") == pytest.approx(0.0)
    p = outcome_probabilities(np.array([0.0, 45.0]), 22.5, 0.9)
    np.testing.assert_allclose(p, 0.5 * (1 + 0.9 * np.cos(np.radians([-45.0, 45.0]))))


if __name__ == "__main__":
    pytest.main([__file__])
