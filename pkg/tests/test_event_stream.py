"""
Tests for the Monte Carlo pass generator.
"""

import numpy as np
import pytest

from src.quantum_uplink.core.bell_analysis import correlation_E
from src.quantum_uplink.exceptions import ScenarioError
from src.quantum_uplink.models.event_stream import (
    ChannelModel,
    emission_time_of,
    generate_eps_pass,
    generate_fps_pass,
    generate_pass,
)
from src.quantum_uplink.models.scenario import scenario_from_dict
from src.quantum_uplink.models.source_models import outcome_probabilities
from src.quantum_uplink.models.timetag import INTENSITY_CODES, PulseLog
from tests.conftest import small_bell_dict, small_qkd_dict


def _within(value, expected, n_sigma=5.0):
    return abs(value - expected) <= n_sigma * np.sqrt(expected)


def test_eps_pass_counts(bell_pass):
    ground, space, truth = bell_pass
    duration = truth.duration_s
    assert duration == pytest.approx(4.0)
    assert _within(len(ground), 1e6 * duration)
    # twins: 1 Mcps singles x 0.5 coupling x 30 dB
    assert _within(truth.counts["twins"], 500.0 * duration)
    assert _within(truth.counts["background"], 1000.0 * duration)
    assert _within(truth.counts["dark"], 2000.0 * duration)
    assert len(space) == sum(truth.counts[k] for k in ("twins", "uncorrelated", "background", "dark"))


def test_eps_streams_are_sorted_and_labelled(bell_pass):
    ground, space, truth = bell_pass
    assert ground.segment == "ground" and space.segment == "space"
    assert ground.is_sorted() and space.is_sorted()
    assert ground.channels.max() <= 3 and space.channels.max() <= 3
    assert truth.protocol == "bell"
    assert truth.offset_s == pytest.approx(3.21e-3)
    assert truth.drift == pytest.approx(2e-8)
    assert truth.mean_attenuation_db == pytest.approx(30.0)


def test_space_clock_runs_ahead_by_offset(bell_pass):
    """Space tags start roughly one epoch plus offset plus light time after zero."""
    ground, space, truth = bell_pass
    first_ground = ground.times_ps[0] * 1e-12
    first_space = space.times_ps[0] * 1e-12
    assert first_ground == pytest.approx(truth.epoch_s, abs=1e-3)
    assert first_space == pytest.approx(truth.epoch_s + truth.offset_s + 1.3e-3, abs=2e-3)


def test_same_seed_gives_identical_streams():
    scenario = scenario_from_dict(small_bell_dict(generation={"max_window_s": 1.0}))
    first = generate_pass(scenario)
    second = generate_pass(scenario)
    assert first.ground == second.ground
    assert first.space == second.space
    other = generate_pass(scenario, seed=scenario.seed + 1)
    assert other.ground != first.ground


def test_event_budget_guard():
    scenario = scenario_from_dict(small_bell_dict(generation={"max_window_s": 1.0, "max_events": 1000.0}))
    with pytest.raises(ScenarioError):
        generate_pass(scenario)


def test_generators_check_source_kind(small_bell_scenario, small_qkd_scenario):
    with pytest.raises(ScenarioError):
        generate_fps_pass(small_bell_scenario)
    with pytest.raises(ScenarioError):
        generate_eps_pass(small_qkd_scenario)


def test_dead_time_separates_same_channel_events():
    scenario = scenario_from_dict(
        small_bell_dict(
            detectors={"dead_time_ns": 50.0},
            generation={"max_window_s": 1.0},
        )
    )
    ground = generate_pass(scenario).ground
    for channel in range(4):
        times = ground.times_ps[ground.channels == channel]
        assert np.diff(times).min() >= 50_000


def test_fps_pass_structure(qkd_pass):
    log, space, truth = qkd_pass
    assert isinstance(log, PulseLog)
    assert truth.protocol == "qkd"
    assert sum(log.sent_counts.values()) == int(np.floor(truth.duration_s * 1e8))
    assert np.all(np.diff(log.times_ps) > 0)
    # slots sit on the 10 ns pulse grid
    assert np.all((log.times_ps - log.times_ps[0]) % 10_000 == 0)
    assert len(log) >= truth.counts["signal"]


def test_fps_click_classes_follow_intensity(qkd_pass):
    _, _, truth = qkd_pass
    signal, decoy, vacuum = (truth.counts[f"signal_{name}"] for name in INTENSITY_CODES)
    assert vacuum == 0
    # fraction x mu: (0.5 x 0.5) / (0.25 x 0.1)
    assert signal / decoy == pytest.approx(10.0, rel=0.1)
    assert _within(signal + decoy, 1e8 * 4.0 * 1e-3 * (0.5 * 0.5 + 0.25 * 0.1))


def test_emission_time_inverts_clock_and_delay(small_qkd_scenario):
    profile = small_qkd_scenario.profile()
    window = small_qkd_scenario.window(profile)
    channel = ChannelModel(small_qkd_scenario, profile, window)
    emission = np.array([2.0, 3.5, 5.0])
    arrival = emission + channel.delay(emission)
    space_t = arrival + 0.01 + 1e-7 * arrival
    np.testing.assert_allclose(emission_time_of(space_t, channel, 0.01, 1e-7), emission, atol=1e-12)


def test_qkd_generation_is_deterministic():
    scenario = scenario_from_dict(small_qkd_dict(generation={"max_window_s": 1.0}))
    first, second = generate_pass(scenario), generate_pass(scenario)
    np.testing.assert_array_equal(first.ground.times_ps, second.ground.times_ps)
    assert first.space == second.space


@pytest.fixture(scope="module")
def noiseless_pass():
    """Twins only: every space tag pairs with the ground tag of its emission."""
    scenario = scenario_from_dict(
        small_bell_dict(
            station={"background_cps": 0.0},
            detectors={"dark_cps": 0.0},
            noise={"multi_pair_noise": False},
            link={"fixed_attenuation_db": 20.0},
            generation={"max_window_s": 2.0},
        )
    )
    ground, space, truth = generate_pass(scenario)
    profile = scenario.profile()
    channel = ChannelModel(scenario, profile, scenario.window(profile))
    emission = emission_time_of(space.times_s(), channel, truth.offset_s, truth.drift)
    emission_ps = _ps(emission)
    right = np.clip(np.searchsorted(ground.times_ps, emission_ps), 1, len(ground) - 1)
    left = right - 1
    closer_left = np.abs(emission_ps - ground.times_ps[left]) <= np.abs(emission_ps - ground.times_ps[right])
    partner = np.where(closer_left, left, right)
    return scenario, channel, ground, space, truth, partner


def _ps(t):
    return np.rint(np.asarray(t) * 1e12).astype(np.int64)


def test_twin_correlations_follow_the_source_model(noiseless_pass):
    scenario, _, ground, space, _, partner = noiseless_pass
    settings, source = scenario.settings, scenario.source
    assert len(space) > 8_000
    g_channel, s_channel = ground.channels[partner], space.channels
    a = settings.ground_angle(g_channel >> 1)
    b = settings.space_angle(settings.space_set_index(ground.times_ps[partner]), s_channel >> 1)
    checked = 0
    for theta_a in settings.ground_angles_deg:
        for theta_b in settings.space_angle_sets_deg[0]:
            chosen = (a == theta_a) & (b == theta_b)
            g_out, s_out = g_channel[chosen] & 1, s_channel[chosen] & 1
            counts = [np.count_nonzero((g_out == i) & (s_out == j)) for i in (0, 1) for j in (0, 1)]
            measured, sigma = correlation_E(counts)
            p_same = outcome_probabilities(theta_a, theta_b, source.visibility, source.state)
            expected = 2.0 * float(p_same) - 1.0
            assert abs(measured - expected) < 5.0 * sigma
            checked += 1
    assert checked == 4


def test_detections_spread_evenly_over_channels(noiseless_pass):
    _, _, ground, space, _, _ = noiseless_pass
    for stream in (ground, space):
        counts = np.bincount(stream.channels, minlength=4)
        assert len(counts) == 4
        for count in counts:
            assert abs(count - 0.25 * len(stream)) < 5.0 * np.sqrt(len(stream) * 0.25 * 0.75)
        basis_zero = np.count_nonzero(stream.basis == 0)
        assert abs(basis_zero - 0.5 * len(stream)) < 5.0 * np.sqrt(len(stream) * 0.25)


def test_twins_arrive_after_their_emission(noiseless_pass):
    _, channel, ground, space, truth, partner = noiseless_pass
    arrival = (space.times_s() - truth.offset_s) / (1.0 + truth.drift)
    ground_t = ground.times_s()[partner]
    flight = arrival - ground_t
    assert np.all(flight > 0.0)
    # light time from 400 km up, within timing jitter
    assert np.all(np.abs(flight - channel.delay(ground_t)) < 1e-9)
    assert 1.3e-3 < flight.min() and flight.max() < 3.0e-3


def test_fps_sent_counts_match_the_pulse_log_classes():
    """With every slot revealed, the logged classes are exactly the pulses sent."""
    scenario = scenario_from_dict(
        small_qkd_dict(
            station={"background_cps": 2.0e5},
            link={"fixed_attenuation_db": 0.0},
            source={"kind": "fps", "rep_rate_pps": 1.0e4},
            generation={"max_window_s": 1.0},
        )
    )
    log, _, truth = generate_pass(scenario)
    n_pulses = int(np.floor(truth.duration_s * 1.0e4))
    assert len(log) == n_pulses
    assert sum(log.sent_counts.values()) == n_pulses
    for name, code in INTENSITY_CODES.items():
        assert np.count_nonzero(log.intensity_class == code) == log.sent_counts[name]
        assert truth.counts[f"signal_{name}"] <= log.sent_counts[name]


if __name__ == "__main__":
    pytest.main([__file__])
