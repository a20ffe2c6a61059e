"""
Coincidence Engine
==================

Recovers the ground/space clock relation from time tags and extracts matched
pairs.

Offsets are modelled on the ground arrival timebase: a photon that arrives at
ground-clock time a carries the space timestamp a + offset(a). Space timestamps
are mapped back to ground emission time by fixed-point inversion of the clock
and of the optional ephemeris delay model, so ground streams are only ever
searched (int64 picoseconds), never shifted or copied.

Stages:
    xcorr_offset   coarse FFT (or sort-merge) histogram over +/- search_span
    refine_offset  fine histogram and floor-corrected centroid
    track_drift    per-segment refinement and linear fit
    match_pairs    nearest-neighbour matching plus sideband accidentals
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import fft as sp_fft

from ..exceptions import CorrelationLostError, DomainError, InsufficientSegmentsError
from ..models.timetag import TimeTagStream
from ..utils.logger import get_logger
from .orbit_geometry import DelayModel

logger = get_logger(__name__)

PS = 1e12
DEFAULT_SIGNIFICANCE = 6.0
DEFAULT_SIDEBAND_OFFSETS = tuple(s * o * 1e-6 for o in (5.0, 7.5, 10.0, 12.5, 15.0) for s in (-1, 1))
_DIRECT_PAIR_BUDGET = 2e7
_FLOOR_EXCLUDE_BINS = 3
_GROUND_SLICE = 10_000_000


@dataclass(frozen=True)
class ClockSolution:
    """
    Space-minus-ground clock offset as a function of ground arrival time.

    With two or more knots, offset_at() interpolates between knots and falls
    back to the linear fit outside them.
    """

    offset0: float
    drift: float = 0.0
    knots_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    knots_offset: np.ndarray = field(default_factory=lambda: np.empty(0))
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def constant(cls, offset: float, drift: float = 0.0) -> "ClockSolution":
        return cls(offset0=float(offset), drift=float(drift))

    def offset_at(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        linear = self.offset0 + self.drift * t
        if len(self.knots_t) < 2:
            return linear
        inside = (t >= self.knots_t[0]) & (t <= self.knots_t[-1])
        return np.where(inside, np.interp(t, self.knots_t, self.knots_offset), linear)

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residuals))) if len(self.residuals) else 0.0

    def as_dict(self) -> dict:
        return {
            "offset0_s": self.offset0,
            "drift": self.drift,
            "n_knots": int(len(self.knots_t)),
            "max_abs_residual_s": self.max_abs_residual,
        }


ClockLike = Union[float, ClockSolution]


def _as_clock(clock: ClockLike) -> ClockSolution:
    return clock if isinstance(clock, ClockSolution) else ClockSolution.constant(clock)


def map_space_to_ground(
    space_t: np.ndarray,
    clock: ClockLike,
    delay: Optional[DelayModel] = None,
    iterations: int = 3,
) -> np.ndarray:
    """Ground-time emission estimate (seconds) for space timestamps (seconds)."""
    clock = _as_clock(clock)
    space_t = np.asarray(space_t, dtype=float)
    arrival = space_t - clock.offset_at(space_t)
    for _ in range(iterations - 1):
        arrival = space_t - clock.offset_at(arrival)
    if delay is None:
        return arrival
    emission = arrival - np.asarray(delay.delay(arrival))
    for _ in range(iterations - 1):
        emission = arrival - np.asarray(delay.delay(emission))
    return emission


def _delay_slope(delay: Optional[DelayModel], t: Union[float, np.ndarray]) -> np.ndarray:
    """1 + d(delay)/dt, converts a residual in emission time into an offset correction."""
    if delay is None:
        return np.ones_like(np.asarray(t, dtype=float))
    return 1.0 + np.asarray(delay.rate(np.asarray(t, dtype=float)))


def _to_ps(t: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(t) * PS).astype(np.int64)


def _pairs_within(
    ground_ps: np.ndarray, mapped_ps: np.ndarray, half_width_ps: int
) -> Tuple[np.ndarray, np.ndarray]:
    """(space, ground) index pairs with |mapped - ground| <= half_width_ps."""
    lo = np.searchsorted(ground_ps, mapped_ps - half_width_ps, side="left")
    hi = np.searchsorted(ground_ps, mapped_ps + half_width_ps, side="right")
    n = hi - lo
    total = int(n.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    space_idx = np.repeat(np.arange(len(mapped_ps), dtype=np.int64), n)
    starts = np.cumsum(n) - n
    ground_idx = np.arange(total, dtype=np.int64) - np.repeat(starts - lo, n)
    return space_idx, ground_idx


def _peak_statistics(counts: np.ndarray) -> Tuple[int, float, float, float]:
    """Peak index, floor mean, floor sigma and significance of a lag histogram."""
    peak = int(np.argmax(counts))
    mask = np.ones(len(counts), dtype=bool)
    mask[max(0, peak - _FLOOR_EXCLUDE_BINS) : peak + _FLOOR_EXCLUDE_BINS + 1] = False
    floor = counts[mask] if mask.any() else counts
    floor_mean = float(floor.mean())
    floor_sigma = max(float(floor.std()), math.sqrt(max(floor_mean, 0.0)), 1.0)
    single = (float(counts[peak]) - floor_mean) / floor_sigma
    # a peak straddling a bin edge is scored on the adjacent pair as well
    neighbours = [counts[peak - 1] if peak > 0 else 0.0, counts[peak + 1] if peak + 1 < len(counts) else 0.0]
    pair = float(counts[peak] + max(neighbours))
    paired = (pair - 2.0 * floor_mean) / (math.sqrt(2.0) * floor_sigma)
    return peak, floor_mean, floor_sigma, max(single, paired)


@dataclass(frozen=True)
class CorrelationHistogram:
    """
    Coarse cross-correlation of ground and space time tags.

    counts[i] holds pairs whose space-minus-ground bin difference is
    lag_index_min + i, measured after mapping space tags with `guess`.
    """

    bin_width: float
    lag_index_min: int
    counts: np.ndarray
    peak_bin: int
    peak_counts: float
    floor_mean: float
    floor_sigma: float
    significance: float
    threshold: float
    guess: float
    offset: float
    reference_time: float
    method: str

    @property
    def found(self) -> bool:
        return self.significance >= self.threshold

    @property
    def lags(self) -> np.ndarray:
        return (self.lag_index_min + np.arange(len(self.counts))) * self.bin_width

    @property
    def peak_lag(self) -> float:
        return (self.lag_index_min + self.peak_bin) * self.bin_width

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"lag_s": self.guess + self.lags, "counts": self.counts})

    def as_dict(self) -> dict:
        return {
            "offset_s": self.offset,
            "bin_width_s": self.bin_width,
            "peak_counts": self.peak_counts,
            "floor_mean": self.floor_mean,
            "floor_sigma": self.floor_sigma,
            "significance": self.significance,
            "found": self.found,
            "method": self.method,
        }


def _histogram_direct(
    ground_ps: np.ndarray, space_bins: np.ndarray, origin_ps: int, bin_ps: int, k: int
) -> np.ndarray:
    counts = np.zeros(2 * k + 1, dtype=np.int64)
    # space bin b pairs with ground bins b - k .. b + k
    lo = np.searchsorted(ground_ps, origin_ps + (space_bins - k) * bin_ps, side="left")
    hi = np.searchsorted(ground_ps, origin_ps + (space_bins + k + 1) * bin_ps, side="left")
    n = hi - lo
    step = max(1, int(_DIRECT_PAIR_BUDGET // max(1, n.mean() if len(n) else 1)))
    for start in range(0, len(space_bins), step):
        block = slice(start, start + step)
        nb = n[block]
        total = int(nb.sum())
        if total == 0:
            continue
        starts = np.cumsum(nb) - nb
        g_idx = np.arange(total, dtype=np.int64) - np.repeat(starts - lo[block], nb)
        g_bins = (ground_ps[g_idx] - origin_ps) // bin_ps
        lag = np.repeat(space_bins[block], nb) - g_bins
        counts += np.bincount(lag + k, minlength=2 * k + 1)[: 2 * k + 1]
    return counts


def _histogram_fft(
    ground_ps: np.ndarray, space_bins: np.ndarray, origin_ps: int, bin_ps: int, k: int, n_bins: int
) -> np.ndarray:
    space_occ = np.bincount(space_bins, minlength=n_bins).astype(np.float32)
    ground_occ = np.zeros(n_bins, dtype=np.float32)
    for start in range(0, len(ground_ps), _GROUND_SLICE):
        part = (ground_ps[start : start + _GROUND_SLICE] - origin_ps) // bin_ps
        ground_occ += np.bincount(part, minlength=n_bins)[:n_bins].astype(np.float32)
    # lags inside +/- k never wrap for this length
    size = sp_fft.next_fast_len(n_bins, real=True)
    spectrum = sp_fft.rfft(space_occ, size) * np.conj(sp_fft.rfft(ground_occ, size))
    circular = sp_fft.irfft(spectrum, size)
    lags = np.arange(-k, k + 1)
    return np.clip(np.rint(circular[lags % size]), 0, None).astype(np.int64)


def xcorr_offset(
    ground: TimeTagStream,
    space: TimeTagStream,
    search_span: float = 1.0,
    coarse_bin: float = 100e-9,
    chunk: float = 2.0,
    guess: float = 0.0,
    delay: Optional[DelayModel] = None,
    significance_threshold: float = DEFAULT_SIGNIFICANCE,
    method: str = "auto",
) -> CorrelationHistogram:
    """
    Coarse offset search.

    The first `chunk` seconds of the space stream are mapped to ground time with
    `guess` and histogrammed against the ground stream over lags within
    +/- search_span. A histogram without a significant peak comes back with
    found == False.

    Args:
        method: "fft", "direct" or "auto" (direct when the number of candidate
            pairs is small)
    """
    if len(ground) == 0 or len(space) == 0:
        raise DomainError("cross-correlation needs non-empty ground and space streams")
    if search_span <= 0 or coarse_bin <= 0 or chunk <= 0:
        raise DomainError("search span, bin width and chunk length must be positive")
    if method not in ("auto", "fft", "direct"):
        raise ValueError(f"unknown correlation method {method!r}")

    space_t = space.times_s()
    in_chunk = space_t < space_t[0] + chunk
    mapped = map_space_to_ground(space_t[in_chunk], guess, delay)
    mapped_ps = _to_ps(mapped)

    bin_ps = max(1, int(round(coarse_bin * PS)))
    k = int(math.ceil(search_span / coarse_bin - 1e-9))
    origin_ps = int(mapped_ps[0]) - (k + 1) * bin_ps
    space_bins = (mapped_ps - origin_ps) // bin_ps
    n_bins = int(space_bins[-1]) + k + 2

    g_lo = np.searchsorted(ground.times_ps, origin_ps, side="left")
    g_hi = np.searchsorted(ground.times_ps, origin_ps + n_bins * bin_ps, side="left")
    ground_ps = ground.times_ps[g_lo:g_hi]

    candidates = len(mapped_ps) * len(ground_ps) * (2 * k + 1) / max(n_bins, 1)
    if method == "auto":
        method = "direct" if candidates <= _DIRECT_PAIR_BUDGET else "fft"
    if method == "direct":
        counts = _histogram_direct(ground_ps, space_bins, origin_ps, bin_ps, k)
    else:
        counts = _histogram_fft(ground_ps, space_bins, origin_ps, bin_ps, k, n_bins)

    peak, floor_mean, floor_sigma, significance = _peak_statistics(counts.astype(float))
    # sub-bin lag from the floor-subtracted centroid of the peak neighbourhood
    window = np.arange(max(0, peak - 1), min(len(counts), peak + 2))
    excess = np.clip(counts[window] - floor_mean, 0.0, None)
    lag_index = float(np.sum(window * excess) / excess.sum()) if excess.sum() > 0 else float(peak)
    residual = (lag_index - k) * coarse_bin
    reference_time = float(np.mean(mapped))
    offset = guess + residual * float(_delay_slope(delay, reference_time))

    histogram = CorrelationHistogram(
        bin_width=coarse_bin,
        lag_index_min=-k,
        counts=counts,
        peak_bin=peak,
        peak_counts=float(counts[peak]),
        floor_mean=floor_mean,
        floor_sigma=floor_sigma,
        significance=significance,
        threshold=significance_threshold,
        guess=guess,
        offset=offset,
        reference_time=reference_time,
        method=method,
    )
    logger.info(
        "coarse correlation (%s): offset %.9f s, significance %.1f (%d space tags in chunk)",
        method,
        offset,
        significance,
        len(mapped_ps),
    )
    return histogram


def _centroid(
    residual_ps: np.ndarray, centre_ps: float, half_width_ps: float, floor_per_ps: float, iterations: int
) -> Tuple[float, int]:
    """Floor-corrected centroid of residuals within half_width_ps of centre."""
    n_inside = 0
    for _ in range(iterations):
        inside = np.abs(residual_ps - centre_ps) <= half_width_ps
        n_inside = int(np.count_nonzero(inside))
        n_floor = floor_per_ps * 2.0 * half_width_ps
        signal = n_inside - n_floor
        if signal <= 0:
            break
        centre_ps = float((residual_ps[inside].sum() - n_floor * centre_ps) / signal)
    return centre_ps, n_inside


@dataclass(frozen=True)
class _FinePeak:
    residual: float
    significance: float
    n_peak: int
    reference_time: float


def _fine_peak(
    ground: TimeTagStream,
    mapped: np.ndarray,
    bin_width: float,
    half_width: float,
    centroid_half_width: float,
    iterations: int,
) -> Optional[_FinePeak]:
    """Residual (seconds) of the correlation peak within +/- half_width of zero lag."""
    if len(mapped) == 0:
        return None
    mapped_ps = _to_ps(mapped)
    hw_ps = int(round(half_width * PS))
    space_idx, ground_idx = _pairs_within(ground.times_ps, mapped_ps, hw_ps)
    if len(space_idx) == 0:
        return None
    residual_ps = mapped_ps[space_idx] - ground.times_ps[ground_idx]

    bin_ps = max(1, int(round(bin_width * PS)))
    n_bins = 2 * int(math.ceil(hw_ps / bin_ps)) + 1
    half = n_bins // 2
    bins = np.clip(np.floor_divide(residual_ps + half * bin_ps + bin_ps // 2, bin_ps), 0, n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins).astype(float)

    box = max(1, int(round(2 * centroid_half_width * PS / bin_ps)) | 1)
    smoothed = np.convolve(counts, np.ones(box), mode="same")
    peak = int(np.argmax(smoothed))
    mask = np.ones(n_bins, dtype=bool)
    mask[max(0, peak - 2 * box) : peak + 2 * box + 1] = False
    per_bin = float(counts[mask].mean()) if mask.any() else 0.0
    floor_box = per_bin * box
    significance = (smoothed[peak] - floor_box) / max(math.sqrt(floor_box), 1.0)

    centre_ps, n_peak = _centroid(
        residual_ps.astype(float),
        float((peak - half) * bin_ps),
        centroid_half_width * PS,
        per_bin / bin_ps,
        iterations,
    )
    return _FinePeak(
        residual=centre_ps / PS,
        significance=float(significance),
        n_peak=n_peak,
        reference_time=float(np.mean(mapped)),
    )


def refine_offset(
    ground: TimeTagStream,
    space: TimeTagStream,
    coarse_offset: ClockLike,
    fine_bin: float = 10e-12,
    half_width: float = 200e-9,
    delay: Optional[DelayModel] = None,
    centroid_half_width: float = 1e-9,
    iterations: int = 3,
    significance_threshold: float = DEFAULT_SIGNIFICANCE,
) -> float:
    """
    Fine offset estimate (seconds) around a coarse one.

    A ClockSolution may be passed instead of a float, in which case its drift is
    kept and only offset0 moves.

    Raises:
        CorrelationLostError: no significant peak within +/- half_width
    """
    clock = _as_clock(coarse_offset)
    mapped = map_space_to_ground(space.times_s(), clock, delay)
    peak = _fine_peak(ground, mapped, fine_bin, half_width, centroid_half_width, iterations)
    if peak is None or peak.significance < significance_threshold:
        significance = 0.0 if peak is None else peak.significance
        raise CorrelationLostError(
            f"fine correlation peak lost within +/-{half_width * 1e9:.0f} ns "
            f"(significance {significance:.1f}); a drifting clock needs track_drift first"
        )
    offset = clock.offset0 + peak.residual * float(_delay_slope(delay, peak.reference_time))
    logger.info("refined offset %.12f s (significance %.1f)", offset, peak.significance)
    return offset


def _segment_knots(
    ground: TimeTagStream,
    segments: Sequence[np.ndarray],
    prediction,
    delay: Optional[DelayModel],
    bin_width: float,
    half_width: float,
    centroid_half_width: float,
    significance_threshold: float,
) -> Tuple[list, list]:
    knots_t, knots_offset = [], []
    for i, segment in enumerate(segments):
        predicted = prediction(knots_t, knots_offset)
        mapped = map_space_to_ground(segment, predicted, delay)
        peak = _fine_peak(ground, mapped, bin_width, half_width, centroid_half_width, 3)
        if peak is None or peak.significance < significance_threshold:
            logger.debug("segment %d: no significant peak", i)
            continue
        t_knot = peak.reference_time
        knots_t.append(t_knot)
        knots_offset.append(
            float(predicted.offset_at(t_knot))
            + peak.residual * float(_delay_slope(delay, t_knot))
        )
    return knots_t, knots_offset


def track_drift(
    ground: TimeTagStream,
    space: TimeTagStream,
    coarse_offset: ClockLike,
    segment_length: float = 1.0,
    bin_width: float = 1e-9,
    half_width: float = 300e-9,
    delay: Optional[DelayModel] = None,
    centroid_half_width: float = 1e-9,
    significance_threshold: float = DEFAULT_SIGNIFICANCE,
    max_drift: float = 1e-7,
) -> ClockSolution:
    """
    Piecewise clock solution from per-segment fine peaks.

    The first pass walks the segments in time order, searching each around the
    offset predicted by the knots found so far (the coarse offset until then),
    with a centroid window wide enough for a peak smeared by max_drift over one
    segment. The second pass re-centres every segment on the first-pass linear
    fit with the narrow centroid window.

    Raises:
        InsufficientSegmentsError: fewer than two segments with a significant peak
    """
    if segment_length <= 0:
        raise DomainError("segment length must be positive")
    space_t = space.times_s()
    if len(space_t) == 0:
        raise InsufficientSegmentsError("space stream is empty")
    clock = _as_clock(coarse_offset)
    n_segments = max(1, int(math.ceil((space_t[-1] - space_t[0]) / segment_length)))
    edges = np.searchsorted(space_t, space_t[0] + segment_length * np.arange(n_segments + 1))
    edges[-1] = len(space_t)
    segments = [space_t[edges[i] : edges[i + 1]] for i in range(n_segments)]
    segments = [s for s in segments if len(s)]

    def sequential(knots_t: list, knots_offset: list) -> ClockSolution:
        if len(knots_t) >= 2:
            drift, offset0 = np.polyfit(knots_t, knots_offset, 1)
            return ClockSolution(float(offset0), float(drift))
        if len(knots_t) == 1:
            return ClockSolution(knots_offset[0] - clock.drift * knots_t[0], clock.drift)
        return clock

    smear = abs(max_drift) * segment_length
    knots_t, knots_offset = _segment_knots(
        ground, segments, sequential, delay, bin_width, half_width,
        centroid_half_width + smear / 2.0, significance_threshold,
    )
    if len(knots_t) >= 2:
        drift, offset0 = np.polyfit(knots_t, knots_offset, 1)
        first_pass = ClockSolution(float(offset0), float(drift))
        refined_t, refined_offset = _segment_knots(
            ground, segments, lambda *_: first_pass, delay, bin_width, half_width,
            centroid_half_width, significance_threshold,
        )
        if len(refined_t) >= 2:
            knots_t, knots_offset = refined_t, refined_offset

    if len(knots_t) < 2:
        raise InsufficientSegmentsError(
            f"only {len(knots_t)} of {n_segments} segments show a significant peak"
        )
    t = np.asarray(knots_t)
    offsets = np.asarray(knots_offset)
    drift, offset0 = np.polyfit(t, offsets, 1)
    residuals = offsets - (offset0 + drift * t)
    solution = ClockSolution(
        offset0=float(offset0),
        drift=float(drift),
        knots_t=t,
        knots_offset=offsets,
        residuals=residuals,
    )
    logger.info(
        "drift tracking: %d/%d segments, drift %.3e, max residual %.3f ns",
        len(t),
        n_segments,
        drift,
        solution.max_abs_residual * 1e9,
    )
    return solution


@dataclass(frozen=True)
class CoincidenceSet:
    """Matched ground/space pairs, one ground and one space event each."""

    ground_index: np.ndarray
    space_index: np.ndarray
    dt: np.ndarray
    ground_time_ps: np.ndarray
    space_time_ps: np.ndarray
    ground_channel: np.ndarray
    space_channel: np.ndarray
    recovered_offset: float
    recovered_drift: float
    tau_c: float
    duration_s: float
    sideband_counts: Dict[float, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ground_index)

    @property
    def n_pairs(self) -> int:
        return len(self)

    @property
    def accidentals_per_window(self) -> float:
        """Mean sideband count, i.e. expected accidentals inside the matching window."""
        if not self.sideband_counts:
            return 0.0
        return float(np.mean(list(self.sideband_counts.values())))

    @property
    def accidental_estimate(self) -> float:
        """Accidental coincidence rate, cps."""
        return self.accidentals_per_window / self.duration_s if self.duration_s > 0 else 0.0

    @property
    def measured_snr(self) -> float:
        accidentals = self.accidentals_per_window
        if accidentals <= 0:
            return math.inf if self.n_pairs else 0.0
        return (self.n_pairs - accidentals) / accidentals

    @property
    def snr_error(self) -> float:
        accidentals = self.accidentals_per_window
        if accidentals <= 0 or not self.sideband_counts:
            return math.inf if self.n_pairs else 0.0
        n = float(self.n_pairs)
        var_accidentals = accidentals / len(self.sideband_counts)
        return math.sqrt(n / accidentals**2 + n**2 * var_accidentals / accidentals**4)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "ground_time_ps": self.ground_time_ps,
                "space_time_ps": self.space_time_ps,
                "dt_ps": np.rint(self.dt * PS).astype(np.int64),
                "ground_channel": self.ground_channel,
                "space_channel": self.space_channel,
            }
        )

    def as_dict(self) -> dict:
        return {
            "pairs": self.n_pairs,
            "recovered_offset_s": self.recovered_offset,
            "recovered_drift": self.recovered_drift,
            "tau_c_s": self.tau_c,
            "accidentals_per_window": self.accidentals_per_window,
            "accidental_estimate_cps": self.accidental_estimate,
            "measured_snr": self.measured_snr,
            "snr_error": self.snr_error,
        }


def _nearest(ground_ps: np.ndarray, mapped_ps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest ground index and signed difference mapped - ground for each mapped tag."""
    right = np.searchsorted(ground_ps, mapped_ps, side="left")
    left = np.clip(right - 1, 0, len(ground_ps) - 1)
    right = np.clip(right, 0, len(ground_ps) - 1)
    d_left = mapped_ps - ground_ps[left]
    d_right = mapped_ps - ground_ps[right]
    use_left = np.abs(d_left) <= np.abs(d_right)
    return np.where(use_left, left, right), np.where(use_left, d_left, d_right)


def _next_nearest(
    ground_ps: np.ndarray, mapped_ps: np.ndarray, taken: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Closest ground neighbour of each mapped tag other than its `taken` index."""
    last = len(ground_ps) - 1
    before = np.clip(taken - 1, 0, last)
    after = np.clip(taken + 1, 0, last)
    d_before = np.where(taken > 0, mapped_ps - ground_ps[before], np.iinfo(np.int64).max)
    d_after = np.where(taken < last, mapped_ps - ground_ps[after], np.iinfo(np.int64).max)
    use_before = np.abs(d_before) <= np.abs(d_after)
    return np.where(use_before, before, after), np.where(use_before, d_before, d_after)


def _count_within(ground_ps: np.ndarray, mapped_ps: np.ndarray, half_ps: int) -> int:
    if len(ground_ps) == 0 or len(mapped_ps) == 0:
        return 0
    _, diff = _nearest(ground_ps, mapped_ps)
    return int(np.count_nonzero(np.abs(diff) <= half_ps))


def match_pairs(
    ground: TimeTagStream,
    space: TimeTagStream,
    clock: ClockLike,
    tau_c: float,
    delay: Optional[DelayModel] = None,
    sideband_offsets: Optional[Sequence[float]] = None,
) -> CoincidenceSet:
    """
    Greedy nearest-neighbour matching within +/- tau_c / 2 after clock correction.

    When several space tags pick the same ground event, the earliest keeps it and
    the others fall back to their next-nearest ground event.
    Accidentals are counted the same way on the unpaired space tags displaced
    by each sideband offset.
    """
    if tau_c < 0:
        raise DomainError(f"coincidence window must be non-negative, got {tau_c}")
    clock = _as_clock(clock)
    offsets = DEFAULT_SIDEBAND_OFFSETS if sideband_offsets is None else tuple(sideband_offsets)
    duration = space.span_s
    empty = np.empty(0, dtype=np.int64)

    if tau_c == 0 or len(ground) == 0 or len(space) == 0:
        return CoincidenceSet(
            ground_index=empty,
            space_index=empty,
            dt=np.empty(0),
            ground_time_ps=empty,
            space_time_ps=empty,
            ground_channel=np.empty(0, np.uint8),
            space_channel=np.empty(0, np.uint8),
            recovered_offset=clock.offset0,
            recovered_drift=clock.drift,
            tau_c=tau_c,
            duration_s=duration,
            sideband_counts={o: 0 for o in offsets},
        )

    mapped_ps = _to_ps(map_space_to_ground(space.times_s(), clock, delay))
    half_ps = int(round(tau_c * PS / 2.0))
    g_near, d_near = _nearest(ground.times_ps, mapped_ps)
    hit = np.flatnonzero(np.abs(d_near) <= half_ps)
    g_hit, d_hit = g_near[hit], d_near[hit]
    g_idx, first = np.unique(g_hit, return_index=True)
    s_idx, diff = hit[first], d_hit[first]

    # a space tag that lost its ground event to an earlier one tries the next-nearest
    lost = np.ones(hit.size, dtype=bool)
    lost[first] = False
    if lost.any():
        s_lost = hit[lost]
        g_alt, d_alt = _next_nearest(ground.times_ps, mapped_ps[s_lost], g_hit[lost])
        ok = (np.abs(d_alt) <= half_ps) & ~np.isin(g_alt, g_idx)
        g_alt, first_alt = np.unique(g_alt[ok], return_index=True)
        s_idx = np.concatenate([s_idx, s_lost[ok][first_alt]])
        g_idx = np.concatenate([g_idx, g_alt])
        diff = np.concatenate([diff, d_alt[ok][first_alt]])

    order = np.argsort(s_idx, kind="stable")
    s_idx, g_idx, diff = s_idx[order], g_idx[order], diff[order]

    # sidebands count unpaired space tags only
    unpaired = np.ones(len(mapped_ps), dtype=bool)
    unpaired[s_idx] = False
    sidebands = {
        float(o): _count_within(ground.times_ps, mapped_ps[unpaired] + int(round(o * PS)), half_ps)
        for o in offsets
    }
    result = CoincidenceSet(
        ground_index=g_idx.astype(np.int64),
        space_index=s_idx.astype(np.int64),
        dt=diff / PS,
        ground_time_ps=ground.times_ps[g_idx],
        space_time_ps=space.times_ps[s_idx],
        ground_channel=ground.channels[g_idx],
        space_channel=space.channels[s_idx],
        recovered_offset=clock.offset0,
        recovered_drift=clock.drift,
        tau_c=tau_c,
        duration_s=duration,
        sideband_counts=sidebands,
    )
    logger.info(
        "matched %d pairs within %.2f ns, %.1f accidentals per window, SNR %.1f",
        result.n_pairs,
        tau_c * 1e9,
        result.accidentals_per_window,
        result.measured_snr,
    )
    return result


def write_coincidences(path, coincidences: CoincidenceSet) -> None:
    """CSV `ground_time_ps,space_time_ps,dt_ps,ground_channel,space_channel`."""
    coincidences.to_frame().to_csv(path, index=False)


def write_histogram(path, histogram: CorrelationHistogram) -> None:
    histogram.to_frame().to_csv(path, index=False)
