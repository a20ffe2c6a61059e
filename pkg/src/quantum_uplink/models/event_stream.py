"""
Monte Carlo Event Streams
=========================

Photon-level generation of ground and space time-tag streams for one pass.

Timebase: stream time 0 is `clock.epoch_s` seconds before the usable window
opens, so pass time = stream time + t0_pass. The space clock reads
t_space = t_arrival + offset + drift * t_arrival (+ jitter), with the arrival time
on the ground timebase and t_arrival = t_emission + slant_range / c.

All randomness comes from named sub-streams of the scenario seed, so identical
(scenario, seed) pairs give bit-identical streams.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np

from ..core.link_budget import channel_attenuation_db
from ..core.orbit_geometry import DelayModel, LinkWindow, PassProfile
from ..exceptions import ScenarioError
from ..utils.logger import get_logger
from ..utils.seeding import rng_for
from .scenario import Scenario
from .source_models import (
    EpsSpec,
    FpsSpec,
    eps_local_rates,
    multi_pair_rate,
    outcome_probabilities,
    transmittance,
)
from .timetag import INTENSITY_CODES, PulseLog, TimeTagStream, make_channels

logger = get_logger(__name__)

PS = 1e12
_FIXUP_SPAN = 64


@dataclass(frozen=True)
class SimulationTruth:
    """Ground truth of a generated pass, for tests and reports."""

    protocol: str
    window: LinkWindow
    t0_pass_s: float
    epoch_s: float
    duration_s: float
    offset_s: float
    drift: float
    mean_attenuation_db: float
    counts: Dict[str, int] = field(default_factory=dict)
    sent_counts: Dict[str, int] = field(default_factory=dict)


class SimulatedPass(NamedTuple):
    ground: Union[TimeTagStream, PulseLog]
    space: TimeTagStream
    truth: SimulationTruth


class ChannelModel:
    """Transmittance and propagation delay along the pass, on the stream timebase."""

    def __init__(self, scenario: Scenario, profile: PassProfile, window: LinkWindow):
        self.t0_pass = window.t_start - scenario.clock.epoch_s
        self.delay_model = DelayModel(profile, self.t0_pass)
        fixed = scenario.link.fixed_attenuation_db

        inside = (profile.t_s >= window.t_start - 1.0) & (profile.t_s <= window.t_end + 1.0)
        self._knots = profile.t_s[inside]
        if fixed is not None:
            self._transmittance = np.full(len(self._knots), transmittance(fixed))
        else:
            self._transmittance = np.array(
                [
                    transmittance(channel_attenuation_db(r, e, scenario.link))
                    for r, e in zip(profile.slant_range_km[inside], profile.elevation_deg[inside])
                ]
            )
        in_window = (self._knots >= window.t_start) & (self._knots <= window.t_end)
        self.t_max = float(self._transmittance.max()) if len(self._knots) else 0.0
        window_t = self._transmittance[in_window]
        mean_t = float(window_t.mean()) if window_t.size else 0.0
        self.mean_attenuation_db = -10.0 * math.log10(mean_t) if mean_t > 0 else math.inf

    def transmittance(self, stream_t: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(stream_t) + self.t0_pass, self._knots, self._transmittance)

    def delay(self, stream_t: np.ndarray) -> np.ndarray:
        """One-way propagation delay (s) for light emitted at stream_t."""
        return np.asarray(self.delay_model.delay(np.asarray(stream_t, dtype=float)))


def _uniform_times(rng: np.random.Generator, n: int, start: float, length: float) -> np.ndarray:
    """Sorted uniform points on [start, start + length) from normalised exponential gaps."""
    if n == 0:
        return np.empty(0)
    cumulative = np.cumsum(rng.standard_exponential(n + 1))
    return start + length * cumulative[:-1] / cumulative[-1]


def _thin(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Indices in [0, n) each kept independently with probability p."""
    if n == 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n, dtype=np.int64)
    expected = n * p
    size = int(expected + 6.0 * math.sqrt(expected) + 16)
    positions = np.cumsum(rng.geometric(p, size)) - 1
    while positions[-1] < n:
        more = np.cumsum(rng.geometric(p, size)) + positions[-1]
        positions = np.concatenate([positions, more])
    return positions[positions < n]


def _to_ps(t: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(t) * PS).astype(np.int64)


def _space_clock(t_arrival: np.ndarray, offset: float, drift: float) -> np.ndarray:
    return t_arrival + offset + drift * t_arrival


def _jitter(rng: np.random.Generator, t: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0.0 or len(t) == 0:
        return t
    return t + rng.normal(0.0, sigma, len(t))


def _fix_boundaries(times: np.ndarray, arrays: List[np.ndarray], boundaries: List[int]) -> None:
    """Re-sort small neighbourhoods around chunk joins, in place."""
    for b in boundaries:
        lo, hi = max(0, b - _FIXUP_SPAN), min(len(times), b + _FIXUP_SPAN)
        window = times[lo:hi]
        if np.all(np.diff(window) >= 0):
            continue
        order = np.argsort(window, kind="stable")
        times[lo:hi] = window[order]
        for a in arrays:
            a[lo:hi] = a[lo:hi][order]
    if np.any(np.diff(times) < 0):
        order = np.argsort(times, kind="stable")
        times[:] = times[order]
        for a in arrays:
            a[:] = a[order]


def _apply_dead_time(times_ps: np.ndarray, channels: np.ndarray, dead_ps: int) -> np.ndarray:
    """Keep-mask dropping events closer than dead_ps to the previous event on their channel."""
    keep = np.ones(len(times_ps), dtype=bool)
    if dead_ps <= 0:
        return keep
    for ch in range(4):
        idx = np.flatnonzero(channels == ch)
        if idx.size > 1:
            keep[idx[1:][np.diff(times_ps[idx]) < dead_ps]] = False
    return keep


def _guard(expected_events: float, scenario: Scenario) -> None:
    if expected_events > scenario.generation.max_events:
        raise ScenarioError(
            f"expected {expected_events:.3g} events exceeds generation.max_events="
            f"{scenario.generation.max_events:.3g}"
        )


def _space_noise(
    scenario: Scenario,
    channel: ChannelModel,
    seed: int,
    duration: float,
    multi_pair_cps: float,
) -> Dict[str, tuple]:
    """Uncorrelated uplink photons, background and dark counts on the space clock."""
    clock = scenario.clock
    epoch = clock.epoch_s
    parts: Dict[str, tuple] = {}

    rng = rng_for(seed, "multi_pair")
    if multi_pair_cps > 0.0 and channel.t_max > 0.0:
        n = rng.poisson(multi_pair_cps * channel.t_max * duration)
        emission = _uniform_times(rng, n, epoch, duration)
        keep = rng.random(n) < channel.transmittance(emission) / channel.t_max
        emission = emission[keep]
        arrival = emission + channel.delay(emission)
        parts["uncorrelated"] = (
            _space_clock(arrival, clock.offset_s, clock.drift),
            rng.integers(0, 4, len(emission), dtype=np.uint8),
        )

    a0 = epoch + float(channel.delay(np.array([epoch]))[0])
    a1 = epoch + duration + float(channel.delay(np.array([epoch + duration]))[0])
    rng = rng_for(seed, "background")
    n = rng.poisson(scenario.station.background_cps * (a1 - a0))
    arrival = _uniform_times(rng, n, a0, a1 - a0)
    parts["background"] = (
        _space_clock(arrival, clock.offset_s, clock.drift),
        rng.integers(0, 4, n, dtype=np.uint8),
    )

    rng = rng_for(seed, "dark")
    dark_t, dark_ch = [], []
    for ch in range(scenario.detectors.n_detectors):
        n = rng.poisson(scenario.detectors.dark_cps * (a1 - a0))
        dark_t.append(_uniform_times(rng, n, a0, a1 - a0))
        dark_ch.append(np.full(n, ch % 4, dtype=np.uint8))
    parts["dark"] = (
        _space_clock(np.concatenate(dark_t), clock.offset_s, clock.drift),
        np.concatenate(dark_ch),
    )
    return parts


def _assemble_space(parts: Dict[str, tuple]) -> tuple:
    times = np.concatenate([p[0] for p in parts.values()]) if parts else np.empty(0)
    channels = (
        np.concatenate([p[1] for p in parts.values()]) if parts else np.empty(0, np.uint8)
    )
    times_ps = _to_ps(times)
    order = np.argsort(times_ps, kind="stable")
    return TimeTagStream(times_ps[order], channels[order], "space"), {
        name: len(p[0]) for name, p in parts.items()
    }


def _setup(scenario: Scenario, seed: Optional[int]):
    seed = scenario.seed if seed is None else int(seed)
    profile = scenario.profile()
    window = scenario.window(profile)
    channel = ChannelModel(scenario, profile, window)
    return seed, profile, window, channel


def generate_eps_pass(scenario: Scenario, seed: Optional[int] = None) -> SimulatedPass:
    """
    Ground and space streams of an entangled-photon uplink pass.

    Ground detections form a Poisson process at the local singles rate. Each one's
    twin reaches the ISS with probability coupling x T(t) and is analysed in a
    passively chosen basis of the active space angle set, agreeing with the ground
    outcome with probability (1 + E) / 2.

    Raises:
        EmptyWindowError: the pass has no usable window
        ScenarioError: the expected event count exceeds generation.max_events
    """
    eps = scenario.source
    if not isinstance(eps, EpsSpec):
        raise ScenarioError("generate_eps_pass needs an EPS source")
    seed, profile, window, channel = _setup(scenario, seed)
    clock, det, settings = scenario.clock, scenario.detectors, scenario.settings
    epoch, duration = clock.epoch_s, window.duration

    rate_ground = eps_local_rates(eps).singles_per_arm
    _guard(rate_ground * duration, scenario)
    sigma_ground = det.timing_jitter_sigma_ns * 1e-9
    sigma_space = math.hypot(det.timing_jitter_sigma_ns, clock.jitter_sigma_ns) * 1e-9
    p_max = eps.coupling_efficiency * channel.t_max

    rng_ground = rng_for(seed, "ground")
    rng_ground_jitter = rng_for(seed, "ground_jitter")
    rng_uplink = rng_for(seed, "uplink")
    rng_space_jitter = rng_for(seed, "space_jitter")

    ground_t: List[np.ndarray] = []
    ground_ch: List[np.ndarray] = []
    twin_t: List[np.ndarray] = []
    twin_ch: List[np.ndarray] = []
    n_twins_paired = 0
    dead_ps = int(round(det.dead_time_ns * 1e3))

    n_chunks = max(1, math.ceil(duration / scenario.generation.chunk_s - 1e-9))
    for k in range(n_chunks):
        c0 = epoch + k * scenario.generation.chunk_s
        length = min(scenario.generation.chunk_s, epoch + duration - c0)
        n = int(rng_ground.poisson(rate_ground * length))
        emission = _uniform_times(rng_ground, n, c0, length)
        g_basis = rng_ground.integers(0, 2, n, dtype=np.uint8)
        g_outcome = rng_ground.integers(0, 2, n, dtype=np.uint8)
        g_ps = _to_ps(_jitter(rng_ground_jitter, emission, sigma_ground))
        order = np.argsort(g_ps, kind="stable")
        g_ps, emission = g_ps[order], emission[order]
        g_basis, g_outcome = g_basis[order], g_outcome[order]
        g_channels = make_channels(g_basis, g_outcome)
        keep = _apply_dead_time(g_ps, g_channels, dead_ps)

        idx = _thin(rng_uplink, n, p_max)
        if idx.size:
            accept = rng_uplink.random(idx.size) < channel.transmittance(emission[idx]) / channel.t_max
            idx = idx[accept]
        set_index = settings.space_set_index(g_ps[idx], seed)
        s_basis = rng_uplink.integers(0, 2, idx.size, dtype=np.uint8)
        p_same = outcome_probabilities(
            settings.ground_angle(g_basis[idx]),
            settings.space_angle(set_index, s_basis),
            eps.visibility,
            eps.state,
        )
        same = rng_uplink.random(idx.size) < p_same
        s_outcome = np.where(same, g_outcome[idx], 1 - g_outcome[idx]).astype(np.uint8)
        arrival = emission[idx] + channel.delay(emission[idx])
        twin_t.append(
            _jitter(rng_space_jitter, _space_clock(arrival, clock.offset_s, clock.drift), sigma_space)
        )
        twin_ch.append(make_channels(s_basis, s_outcome))
        n_twins_paired += int(np.count_nonzero(keep[idx]))

        ground_t.append(g_ps[keep])
        ground_ch.append(g_channels[keep])

    boundaries = list(np.cumsum([len(t) for t in ground_t])[:-1])
    times = np.concatenate(ground_t)
    channels = np.concatenate(ground_ch)
    _fix_boundaries(times, [channels], boundaries)
    ground = TimeTagStream(times, channels, "ground")

    multi = multi_pair_rate(eps) if scenario.noise.multi_pair_noise else 0.0
    parts = {"twins": (np.concatenate(twin_t), np.concatenate(twin_ch))}
    parts.update(_space_noise(scenario, channel, seed, duration, multi))
    space, part_counts = _assemble_space(parts)

    counts = {"ground": len(ground), "space": len(space), "twins_paired": n_twins_paired}
    counts.update(part_counts)
    truth = SimulationTruth(
        protocol="bell",
        window=window,
        t0_pass_s=channel.t0_pass,
        epoch_s=epoch,
        duration_s=duration,
        offset_s=clock.offset_s,
        drift=clock.drift,
        mean_attenuation_db=channel.mean_attenuation_db,
        counts=counts,
    )
    logger.info(
        "EPS pass: %d ground, %d space events (%d twins) over %.1f s",
        len(ground),
        len(space),
        counts["twins"],
        duration,
    )
    return SimulatedPass(ground, space, truth)


def emission_time_of(
    space_t: np.ndarray, channel: ChannelModel, offset: float, drift: float, iterations: int = 3
) -> np.ndarray:
    """Invert the space clock and the propagation delay (fixed point)."""
    arrival = (np.asarray(space_t) - offset) / (1.0 + drift)
    emission = arrival - channel.delay(arrival)
    for _ in range(iterations - 1):
        emission = arrival - channel.delay(emission)
    return emission


def generate_fps_pass(scenario: Scenario, seed: Optional[int] = None) -> SimulatedPass:
    """
    Transmitter pulse log and space stream of a decoy-state BB84 pass.

    A pulse of class i clicks at the ISS with probability 1 - exp(-mu_i T(t));
    same-basis clicks flip with probability e_d. Noise clicks are reconciled with
    the pulse slot nearest to them.
    """
    fps = scenario.source
    if not isinstance(fps, FpsSpec):
        raise ScenarioError("generate_fps_pass needs an FPS source")
    seed, profile, window, channel = _setup(scenario, seed)
    clock, det = scenario.clock, scenario.detectors
    epoch, duration = clock.epoch_s, window.duration

    rep = fps.rep_rate_pps
    n_pulses = int(math.floor(duration * rep))
    names = list(INTENSITY_CODES)
    fractions = fps.fractions()
    p_class = np.array([fractions[n] for n in names])
    mu = np.array([fps.intensities()[n] for n in names])
    p_max = float(-np.expm1(-mu.max() * channel.t_max))
    _guard(n_pulses * p_max, scenario)
    sigma_space = math.hypot(det.timing_jitter_sigma_ns, clock.jitter_sigma_ns) * 1e-9

    rng_detect = rng_for(seed, "fps_detect")
    rng_space_jitter = rng_for(seed, "space_jitter")
    per_chunk = max(1, int(round(scenario.generation.chunk_s * rep)))
    empty_u8 = np.empty(0, dtype=np.uint8)
    slots, classes, bits, tx_basis = [np.empty(0, np.int64)], [empty_u8], [empty_u8], [empty_u8]
    candidate_slots, candidate_classes = [np.empty(0, np.int64)], [empty_u8]
    space_t, space_ch = [np.empty(0)], [empty_u8]
    for start in range(0, n_pulses if p_max > 0 else 0, per_chunk):
        count = min(per_chunk, n_pulses - start)
        k = start + _thin(rng_detect, count, p_max)
        emission = epoch + k / rep
        cls = rng_detect.choice(3, size=k.size, p=p_class).astype(np.uint8)
        candidate_slots.append(k)
        candidate_classes.append(cls)
        p_click = -np.expm1(-mu[cls] * channel.transmittance(emission))
        accept = rng_detect.random(k.size) < p_click / p_max
        k, emission, cls = k[accept], emission[accept], cls[accept]

        bit = rng_detect.integers(0, 2, k.size, dtype=np.uint8)
        basis = rng_detect.integers(0, 2, k.size, dtype=np.uint8)
        rx_basis = rng_detect.integers(0, 2, k.size, dtype=np.uint8)
        flip = rng_detect.random(k.size) < fps.intrinsic_error
        random_bit = rng_detect.integers(0, 2, k.size, dtype=np.uint8)
        outcome = np.where(rx_basis == basis, bit ^ flip.astype(np.uint8), random_bit).astype(np.uint8)

        arrival = emission + channel.delay(emission)
        space_t.append(
            _jitter(rng_space_jitter, _space_clock(arrival, clock.offset_s, clock.drift), sigma_space)
        )
        space_ch.append(make_channels(rx_basis, outcome))
        slots.append(k)
        classes.append(cls)
        bits.append(bit)
        tx_basis.append(basis)

    parts = {"signal": (np.concatenate(space_t), np.concatenate(space_ch))}
    noise = _space_noise(scenario, channel, seed, duration, 0.0)
    parts.update(noise)
    space, part_counts = _assemble_space(parts)

    # reveal the pulse slot nearest to every noise click
    noise_t = np.concatenate([p[0] for p in noise.values()])
    noise_k = np.rint(
        (emission_time_of(noise_t, channel, clock.offset_s, clock.drift) - epoch) * rep
    ).astype(np.int64)
    noise_k = np.unique(noise_k[(noise_k >= 0) & (noise_k < n_pulses)])

    # one class per pulse: candidates keep theirs, the rest are drawn once here
    cand_k = np.concatenate(candidate_slots)
    cand_cls = np.concatenate(candidate_classes)
    pos = np.clip(np.searchsorted(cand_k, noise_k), 0, max(cand_k.size - 1, 0))
    known = cand_k[pos] == noise_k if cand_k.size else np.zeros(noise_k.size, dtype=bool)
    rng_reveal = rng_for(seed, "fps_reveal")
    noise_cls = np.empty(noise_k.size, dtype=np.uint8)
    noise_cls[known] = cand_cls[pos[known]]
    noise_cls[~known] = rng_reveal.choice(3, size=int(np.count_nonzero(~known)), p=p_class)
    slots.append(noise_k)
    classes.append(noise_cls)
    bits.append(rng_reveal.integers(0, 2, noise_k.size, dtype=np.uint8))
    tx_basis.append(rng_reveal.integers(0, 2, noise_k.size, dtype=np.uint8))

    undrawn = n_pulses - cand_k.size - int(np.count_nonzero(~known))
    sent = (
        np.bincount(cand_cls, minlength=3)
        + np.bincount(noise_cls[~known], minlength=3)
        + rng_for(seed, "fps_pulses").multinomial(undrawn, p_class)
    )
    sent_counts = {name: int(c) for name, c in zip(names, sent)}

    all_slots = np.concatenate(slots)
    unique_slots, first = np.unique(all_slots, return_index=True)
    epoch_ps = int(round(epoch * PS))
    log = PulseLog(
        times_ps=epoch_ps + np.rint(unique_slots * (PS / rep)).astype(np.int64),
        intensity_class=np.concatenate(classes)[first],
        bits=np.concatenate(bits)[first],
        basis=np.concatenate(tx_basis)[first],
        sent_counts=sent_counts,
        rep_rate_pps=rep,
    )

    signal_classes = np.concatenate(classes[:-1])
    counts = {"pulse_log": len(log), "space": len(space)}
    counts.update(part_counts)
    for name, code in INTENSITY_CODES.items():
        counts[f"signal_{name}"] = int(np.count_nonzero(signal_classes == code))
    truth = SimulationTruth(
        protocol="qkd",
        window=window,
        t0_pass_s=channel.t0_pass,
        epoch_s=epoch,
        duration_s=duration,
        offset_s=clock.offset_s,
        drift=clock.drift,
        mean_attenuation_db=channel.mean_attenuation_db,
        counts=counts,
        sent_counts=sent_counts,
    )
    logger.info(
        "FPS pass: %d pulses sent, %d space clicks (%d signal) over %.1f s",
        n_pulses,
        len(space),
        counts["signal"],
        duration,
    )
    return SimulatedPass(log, space, truth)


def generate_pass(scenario: Scenario, seed: Optional[int] = None) -> SimulatedPass:
    """Dispatch on the scenario's source type."""
    if isinstance(scenario.source, EpsSpec):
        return generate_eps_pass(scenario, seed)
    return generate_fps_pass(scenario, seed)
