"""
Pass Pipeline
=============

End-to-end processing of one pass: clock synchronisation, coincidence matching
and the protocol analysis (CHSH for entangled-photon passes, sifting and decoy
key rate for faint-pulse passes), collected into a PassReport.

`run_simulation` generates the streams first; `analyze_streams` works on any
streams, so analysing the files written by a simulation reproduces the
in-process report exactly.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Union

import numpy as np

from ..exceptions import InsufficientCountsError, InsufficientSegmentsError, NoCorrelationError
from ..models.event_stream import ChannelModel, SimulatedPass, generate_pass
from ..models.scenario import Scenario
from ..models.source_models import EpsSpec, FpsSpec, transmittance
from ..models.timetag import INTENSITY_CODES, PulseLog, TimeTagStream
from ..utils.config import Config, get_config
from ..utils.data_processor import dumps_json
from ..utils.logger import get_logger
from .bell_analysis import ChshResult, SettingCounts, chsh_from_pairs, key_pairs_mask
from .coincidence import (
    ClockSolution,
    CoincidenceSet,
    CorrelationHistogram,
    match_pairs,
    refine_offset,
    track_drift,
    xcorr_offset,
)
from .feasibility import bell_snr_threshold, noise_budget_for, snr_analytic
from .orbit_geometry import DelayModel
from .qkd_analysis import (
    SHOR_PRESKILL_QBER_LIMIT,
    KeyRateResult,
    SiftedKey,
    decoy_key_rate,
    decoy_observables,
    events_sufficient,
    key_rate_bbm92,
    observables_from_counts,
    sift,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class AnalysisSettings:
    """Tunables of the synchronisation and analysis chain, SI units."""

    search_span: float = 1.0
    coarse_bin: float = 100e-9
    correlation_chunk: float = 2.0
    fine_bin: float = 10e-12
    segment_length: float = 1.0
    track_bin: float = 1e-9
    track_half_width: float = 300e-9
    max_drift: float = 1e-7
    significance_threshold: float = 6.0
    sideband_offsets: tuple = ()
    maximize_combination: bool = False
    error_correction_efficiency: float = 1.16
    sifting_factor: float = 0.5
    min_events: Dict[str, int] = field(default_factory=lambda: {"bell": 1000, "qkd": 10000})

    @classmethod
    def from_config(cls, config: Optional[Config] = None) -> "AnalysisSettings":
        config = config or get_config()
        return cls(
            search_span=config.get_search_span(),
            coarse_bin=config.get_coarse_bin(),
            correlation_chunk=config.get_correlation_chunk(),
            fine_bin=config.get_fine_bin(),
            segment_length=config.get_segment_length(),
            track_bin=config.get_track_bin(),
            track_half_width=config.get_track_half_width(),
            max_drift=config.get_max_drift(),
            significance_threshold=config.get_significance_threshold(),
            sideband_offsets=tuple(config.get_sideband_offsets()),
            maximize_combination=config.maximize_combination(),
            error_correction_efficiency=config.get_error_correction_efficiency(),
            sifting_factor=config.get_sifting_factor(),
            min_events={p: config.get_min_events(p) for p in ("bell", "qkd")},
        )


@dataclass
class PassReport:
    """Everything reported about one analysed pass."""

    schema_version: str
    scenario: str
    seed: int
    protocol: str
    window: Dict[str, Any]
    counts: Dict[str, int]
    synchronisation: Dict[str, Any]
    coincidences: Dict[str, Any]
    bell: Optional[Dict[str, Any]] = None
    qkd: Optional[Dict[str, Any]] = None
    flags: Dict[str, bool] = field(default_factory=dict)
    resolved_config: Dict[str, Any] = field(default_factory=dict)
    resolved_scenario: Dict[str, Any] = field(default_factory=dict)
    timing: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        """Machine-readable report; timing is kept out so reruns compare equal."""
        return {
            "schema_version": self.schema_version,
            "scenario": self.scenario,
            "seed": self.seed,
            "protocol": self.protocol,
            "window": self.window,
            "counts": self.counts,
            "synchronisation": self.synchronisation,
            "coincidences": self.coincidences,
            "bell": self.bell,
            "qkd": self.qkd,
            "flags": self.flags,
            "config": self.resolved_config,
            "resolved_scenario": self.resolved_scenario,
        }

    def to_json(self) -> str:
        return dumps_json(self.as_dict())

    def to_text(self) -> str:
        lines = [
            f"Pass report ({self.protocol}) for scenario '{self.scenario}', seed {self.seed}",
            f"schema {self.schema_version}",
            "",
            f"window: {self.window.get('duration_s', float('nan')):.2f} s "
            f"[{self.window.get('start_constraint', '?')} .. {self.window.get('end_constraint', '?')}]",
            "counts: " + ", ".join(f"{k}={v}" for k, v in self.counts.items()),
            f"clock offset: {self.synchronisation['clock']['offset0_s']:.12f} s, "
            f"drift {self.synchronisation['clock']['drift']:.3e}",
            f"coincidences: {self.coincidences['pairs']} pairs, measured SNR "
            f"{self.coincidences['measured_snr']:.2f} +/- {self.coincidences['snr_error']:.2f}",
        ]
        if self.bell is not None:
            if self.bell.get("analytic_snr") is not None:
                lines.append(f"analytic SNR: {self.bell['analytic_snr']:.2f}")
            chsh = self.bell.get("chsh")
            if chsh:
                lines.append(
                    f"CHSH S = {chsh['S']:.4f} +/- {chsh['sigma_S']:.4f} "
                    f"({chsh['n_sigma']:+.2f} sigma), N = {chsh['N']:g}"
                )
            if self.bell.get("qber") is not None:
                lines.append(f"key-basis QBER: {self.bell['qber']:.4f}")
        if self.qkd is not None:
            lines.append(
                f"QBER (signal): {self.qkd['qber']:.4f} "
                f"[{self.qkd['qber_interval'][0]:.4f}, {self.qkd['qber_interval'][1]:.4f}], "
                f"model {self.qkd['model_e_mu']:.4f}"
            )
            key = self.qkd["key_rate"]
            lines.append(
                f"decoy key rate: {key['rate_cps']:.1f} bit/s ({key['rate_per_pulse']:.3e} per pulse)"
            )
        lines.append("")
        lines.append("flags:")
        lines.extend(f"  {name}: {'yes' if value else 'no'}" for name, value in self.flags.items())
        return "\n".join(lines) + "\n"


@dataclass
class PipelineResult:
    report: PassReport
    histogram: CorrelationHistogram
    clock: ClockSolution
    coincidences: CoincidenceSet
    setting_counts: Optional[SettingCounts] = None
    chsh: Optional[ChshResult] = None
    sifted: Optional[SiftedKey] = None
    key_rate: Optional[KeyRateResult] = None
    simulated: Optional[SimulatedPass] = None


def synchronise(
    ground: TimeTagStream,
    space: TimeTagStream,
    settings: AnalysisSettings,
    delay: Optional[DelayModel] = None,
) -> tuple:
    """
    Coarse search, then drift tracking (or a single fine refinement when the
    space stream is too short for two segments).

    Raises:
        NoCorrelationError: no significant coarse peak
    """
    histogram = xcorr_offset(
        ground,
        space,
        search_span=settings.search_span,
        coarse_bin=settings.coarse_bin,
        chunk=settings.correlation_chunk,
        delay=delay,
        significance_threshold=settings.significance_threshold,
    )
    if not histogram.found:
        raise NoCorrelationError(
            f"no correlation peak within +/-{settings.search_span:g} s "
            f"(best significance {histogram.significance:.1f} < {settings.significance_threshold:g})"
        )
    try:
        clock = track_drift(
            ground,
            space,
            histogram.offset,
            segment_length=settings.segment_length,
            bin_width=settings.track_bin,
            half_width=settings.track_half_width,
            delay=delay,
            significance_threshold=settings.significance_threshold,
            max_drift=settings.max_drift,
        )
    except InsufficientSegmentsError as e:
        logger.warning("drift tracking unavailable (%s); using a constant offset", e)
        clock = ClockSolution.constant(
            refine_offset(
                ground,
                space,
                histogram.offset,
                fine_bin=settings.fine_bin,
                half_width=settings.track_half_width,
                delay=delay,
                significance_threshold=settings.significance_threshold,
            )
        )
    return histogram, clock


def _bell_section(
    coincidences: CoincidenceSet,
    scenario: Scenario,
    settings: AnalysisSettings,
    seed: int,
    tau_c: float,
    mean_attenuation_db: float,
) -> tuple:
    chsh, counts = None, None
    try:
        chsh, counts = chsh_from_pairs(
            coincidences, scenario.settings, seed, maximize_combination=settings.maximize_combination
        )
    except InsufficientCountsError as e:
        logger.warning("CHSH unavailable: %s", e)

    eps = scenario.source if isinstance(scenario.source, EpsSpec) else EpsSpec()
    analytic = None
    if not math.isnan(mean_attenuation_db):
        analytic = snr_analytic(
            eps,
            scenario.detectors,
            mean_attenuation_db,
            noise_budget_for(
                eps, scenario.detectors, scenario.station.background_cps, mean_attenuation_db, tau_c
            ),
        )

    section: Dict[str, Any] = {
        "analytic_snr": analytic.snr if analytic else None,
        "analytic": analytic.as_dict() if analytic else None,
        "chsh": chsh.as_dict() if chsh else None,
        "qber": None,
    }
    mask = key_pairs_mask(coincidences, scenario.settings, seed)
    if mask is not None and mask.any():
        g, s = coincidences.ground_channel[mask], coincidences.space_channel[mask]
        key = sift(g >> 1, g & 1, s >> 1, s & 1)
        section["qber"] = key.qber
        section["qber_interval"] = list(key.qber_interval)
        section["sifted_bits"] = key.n
        rate = key.n / coincidences.duration_s if coincidences.duration_s > 0 else 0.0
        section["bbm92_key_rate_cps"] = key_rate_bbm92(min(key.qber, 0.5), rate, 1.0)
    return section, chsh, counts


def _qkd_section(
    log: PulseLog,
    coincidences: CoincidenceSet,
    scenario: Scenario,
    settings: AnalysisSettings,
    gate_s: float,
    mean_attenuation_db: float,
) -> tuple:
    fps = scenario.source if isinstance(scenario.source, FpsSpec) else FpsSpec()
    cls = log.intensity_class[coincidences.ground_index]
    tx_basis = log.basis[coincidences.ground_index]
    tx_bits = log.bits[coincidences.ground_index]
    rx_basis = coincidences.space_channel >> 1
    rx_bits = coincidences.space_channel & 1

    detected, sifted, errors = {}, {}, {}
    for name, code in INTENSITY_CODES.items():
        in_class = cls == code
        same = in_class & (tx_basis == rx_basis)
        detected[name] = int(np.count_nonzero(in_class))
        sifted[name] = int(np.count_nonzero(same))
        errors[name] = int(np.count_nonzero(same & (tx_bits != rx_bits)))

    signal = cls == INTENSITY_CODES["signal"]
    key = sift(tx_basis[signal], tx_bits[signal], rx_basis[signal], rx_bits[signal])
    obs = observables_from_counts(
        fps, log.sent_counts, detected, sifted, errors, settings.error_correction_efficiency
    )
    rate = decoy_key_rate(obs, settings.sifting_factor)

    y0_model = (scenario.station.background_cps + scenario.detectors.dark_total_cps) * gate_s
    model = decoy_observables(transmittance(mean_attenuation_db), fps, y0_model)
    section = {
        "detected": detected,
        "sifted": sifted,
        "errors": errors,
        "sent": dict(log.sent_counts),
        "qber": key.qber,
        "qber_interval": list(key.qber_interval),
        "sifted_signal_bits": key.n,
        "model_e_mu": model.e_mu,
        "model_q_mu": model.q_mu,
        "measured_q_mu": obs.q_mu,
        "measured_y0": obs.y0,
        "key_rate": rate.as_dict(),
    }
    return section, key, rate


def _delay_and_attenuation(scenario: Optional[Scenario], use_delay: bool) -> tuple:
    if scenario is None:
        return None, math.nan, {}
    profile = scenario.profile()
    window = scenario.window(profile)
    channel = ChannelModel(scenario, profile, window)
    delay = channel.delay_model if use_delay else None
    return delay, channel.mean_attenuation_db, window.as_dict()


def analyze_streams(
    ground: Union[TimeTagStream, PulseLog],
    space: TimeTagStream,
    scenario: Optional[Scenario] = None,
    config: Optional[Config] = None,
    tau_c: Optional[float] = None,
    seed: Optional[int] = None,
    use_delay_model: bool = True,
) -> PipelineResult:
    """
    Synchronise, match and analyse a ground/space stream pair.

    A PulseLog ground side selects the decoy-state analysis; a TimeTagStream the
    CHSH analysis. With a scenario the ephemeris delay model, measurement
    settings and source parameters are restored; without one, no delay model is
    applied and the default settings are assumed.

    Raises:
        NoCorrelationError: the streams show no correlation peak
    """
    config = config or get_config()
    settings = AnalysisSettings.from_config(config)
    resolved = scenario or Scenario(source=FpsSpec() if isinstance(ground, PulseLog) else EpsSpec())
    seed = resolved.seed if seed is None else int(seed)
    protocol = "qkd" if isinstance(ground, PulseLog) else "bell"
    timing: Dict[str, float] = {}

    start = time.perf_counter()
    delay, mean_attenuation_db, window = _delay_and_attenuation(scenario, use_delay_model)
    ground_stream = ground.as_stream() if isinstance(ground, PulseLog) else ground
    if tau_c is None:
        tau_c = resolved.gate_s(config) if protocol == "qkd" else resolved.coincidence_window_s(config)

    histogram, clock = synchronise(ground_stream, space, settings, delay)
    timing["synchronisation_s"] = time.perf_counter() - start

    start = time.perf_counter()
    coincidences = match_pairs(
        ground_stream, space, clock, tau_c, delay=delay, sideband_offsets=settings.sideband_offsets or None
    )
    timing["matching_s"] = time.perf_counter() - start

    start = time.perf_counter()
    result_kwargs: Dict[str, Any] = {}
    bell_section = qkd_section = None
    flags: Dict[str, bool] = {}
    if protocol == "bell":
        bell_section, chsh, counts = _bell_section(
            coincidences, resolved, settings, seed, tau_c, mean_attenuation_db
        )
        result_kwargs.update(chsh=chsh, setting_counts=counts)
        flags["measured_snr_above_bell_threshold"] = coincidences.measured_snr > bell_snr_threshold()
        flags["events_sufficient"] = events_sufficient(coincidences.n_pairs, "bell", settings.min_events)
        flags["chsh_violation_3sigma"] = bool(chsh is not None and chsh.n_sigma > 3.0)
        if bell_section["qber"] is not None:
            flags["qber_below_limit"] = bell_section["qber"] < SHOR_PRESKILL_QBER_LIMIT
    else:
        qkd_section, key, rate = _qkd_section(
            ground, coincidences, resolved, settings, tau_c, mean_attenuation_db
        )
        result_kwargs.update(sifted=key, key_rate=rate)
        flags["events_sufficient"] = events_sufficient(coincidences.n_pairs, "qkd", settings.min_events)
        flags["qber_below_limit"] = key.qber < SHOR_PRESKILL_QBER_LIMIT
        flags["key_rate_positive"] = rate.positive
    timing["analysis_s"] = time.perf_counter() - start

    report = PassReport(
        schema_version=config.get_schema_version(),
        scenario=resolved.name,
        seed=seed,
        protocol=protocol,
        window=window,
        counts={
            "ground": len(ground_stream),
            "space": len(space),
            "matched": coincidences.n_pairs,
        },
        synchronisation={
            "coarse": histogram.as_dict(),
            "clock": clock.as_dict(),
            "delay_model": delay is not None,
        },
        coincidences=coincidences.as_dict(),
        bell=bell_section,
        qkd=qkd_section,
        flags=flags,
        resolved_config=config.as_dict(),
        resolved_scenario=resolved.model_dump(mode="json", by_alias=True),
        timing=timing,
    )
    return PipelineResult(
        report=report, histogram=histogram, clock=clock, coincidences=coincidences, **result_kwargs
    )


def run_simulation(
    scenario: Scenario, config: Optional[Config] = None, seed: Optional[int] = None
) -> PipelineResult:
    """Generate a pass from the scenario and analyse it in-process."""
    start = time.perf_counter()
    simulated = generate_pass(scenario, seed)
    generation_s = time.perf_counter() - start
    result = analyze_streams(simulated.ground, simulated.space, scenario, config, seed=seed)
    result.simulated = simulated
    result.report.timing = {"generation_s": generation_s, **result.report.timing}
    return result
