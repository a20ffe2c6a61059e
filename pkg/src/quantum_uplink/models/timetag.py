"""
Time-Tag Streams
================

Containers and file formats for detection records.

Binary layout (little endian): a 16-byte header `QTT1`, version u16, segment u8,
9 reserved bytes, then 9-byte records of time (u64 picoseconds) and channel (u8).
Channel = 2 * basis + outcome, basis 0 = H/V and 1 = +/-45 deg.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from ..exceptions import StreamFormatError

MAGIC = b"QTT1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHB9x")
RECORD_DTYPE = np.dtype([("time", "<u8"), ("channel", "u1")])
SEGMENTS = {"ground": 0, "space": 1}
CHANNEL_MAP = {
    0: ("H/V", 0),
    1: ("H/V", 1),
    2: ("+/-45", 0),
    3: ("+/-45", 1),
}
INTENSITY_CODES = {"signal": 0, "decoy": 1, "vacuum": 2}
PathLike = Union[str, Path]


def make_channels(basis: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    return (2 * np.asarray(basis, dtype=np.uint8) + np.asarray(outcome, dtype=np.uint8)).astype(
        np.uint8
    )


@dataclass(frozen=True)
class TimeTagStream:
    """Sorted detection records of one segment."""

    times_ps: np.ndarray
    channels: np.ndarray
    segment: str = "ground"

    def __post_init__(self):
        object.__setattr__(self, "times_ps", np.asarray(self.times_ps, dtype=np.int64))
        object.__setattr__(self, "channels", np.asarray(self.channels, dtype=np.uint8))
        if self.segment not in SEGMENTS:
            raise ValueError(f"unknown segment {self.segment!r}")
        if len(self.times_ps) != len(self.channels):
            raise ValueError("times and channels differ in length")

    def __len__(self) -> int:
        return len(self.times_ps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.segment == other.segment
            and np.array_equal(self.times_ps, other.times_ps)
            and np.array_equal(self.channels, other.channels)
        )

    @property
    def basis(self) -> np.ndarray:
        return self.channels >> 1

    @property
    def outcome(self) -> np.ndarray:
        return self.channels & 1

    @property
    def span_s(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.times_ps[-1] - self.times_ps[0]) * 1e-12

    def times_s(self) -> np.ndarray:
        return self.times_ps * 1e-12

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.times_ps) >= 0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time_ps": self.times_ps, "channel": self.channels})


def serialize_stream(stream: TimeTagStream) -> bytes:
    """Encode a stream in the binary time-tag format."""
    if len(stream) and stream.times_ps[0] < 0:
        raise ValueError("negative timestamps cannot be stored as unsigned picoseconds")
    records = np.empty(len(stream), dtype=RECORD_DTYPE)
    records["time"] = stream.times_ps
    records["channel"] = stream.channels
    header = HEADER.pack(MAGIC, FORMAT_VERSION, SEGMENTS[stream.segment])
    return header + records.tobytes()


def parse_stream(data: bytes) -> TimeTagStream:
    """
    Decode and validate a binary time-tag file.

    Raises:
        StreamFormatError: with the byte offset of the first violation
    """
    if len(data) < HEADER.size:
        raise StreamFormatError("truncated header", len(data))
    magic, version, segment_code = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}", 0)
    if version != FORMAT_VERSION:
        raise StreamFormatError(f"unsupported version {version}", 4)
    segments = {code: name for name, code in SEGMENTS.items()}
    if segment_code not in segments:
        raise StreamFormatError(f"unknown segment code {segment_code}", 6)

    body = len(data) - HEADER.size
    n_records, remainder = divmod(body, RECORD_DTYPE.itemsize)
    if remainder:
        offset = HEADER.size + n_records * RECORD_DTYPE.itemsize
        raise StreamFormatError(f"truncated record ({remainder} trailing bytes)", offset)

    records = np.frombuffer(data, dtype=RECORD_DTYPE, count=n_records, offset=HEADER.size)
    bad_channel = np.flatnonzero(records["channel"] >= 4)
    if bad_channel.size:
        i = int(bad_channel[0])
        raise StreamFormatError(
            f"channel {records['channel'][i]} out of range",
            HEADER.size + i * RECORD_DTYPE.itemsize + 8,
        )
    times = records["time"]
    if np.any(times > np.iinfo(np.int64).max):
        i = int(np.flatnonzero(times > np.iinfo(np.int64).max)[0])
        raise StreamFormatError("timestamp overflow", HEADER.size + i * RECORD_DTYPE.itemsize)
    times = times.astype(np.int64)
    unsorted = np.flatnonzero(np.diff(times) < 0)
    if unsorted.size:
        i = int(unsorted[0]) + 1
        raise StreamFormatError("records not sorted by time", HEADER.size + i * RECORD_DTYPE.itemsize)

    return TimeTagStream(
        times_ps=times, channels=records["channel"].copy(), segment=segments[segment_code]
    )


def write_stream(path: PathLike, stream: TimeTagStream) -> None:
    Path(path).write_bytes(serialize_stream(stream))


def read_stream(path: PathLike) -> TimeTagStream:
    return parse_stream(Path(path).read_bytes())


def write_stream_csv(path: PathLike, stream: TimeTagStream) -> None:
    """CSV alternative `time_ps,channel`."""
    stream.to_frame().to_csv(path, index=False)


def _read_csv(path: PathLike, columns) -> pd.DataFrame:
    """Load a CSV as text and check its header; data rows start at line 2."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise StreamFormatError(f"unreadable CSV: {e}", line=1) from e
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise StreamFormatError(f"missing columns {missing}", line=1)
    return frame


def _integer_column(frame: pd.DataFrame, name: str, low: int, high: int) -> np.ndarray:
    values = pd.to_numeric(frame[name].str.strip(), errors="coerce")
    bad = (values.isna() | (values % 1 != 0) | (values < low) | (values > high)).to_numpy()
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise StreamFormatError(
            f"{name} {frame[name].iloc[i]!r} is not an integer in [{low}, {high}]", line=i + 2
        )
    return values.to_numpy(np.int64)


def _check_time_order(times: np.ndarray, what: str) -> None:
    unsorted = np.flatnonzero(np.diff(times) < 0)
    if unsorted.size:
        raise StreamFormatError(f"{what} not sorted by time", line=int(unsorted[0]) + 3)


def read_stream_csv(path: PathLike, segment: str = "ground") -> TimeTagStream:
    """
    Read a `time_ps,channel` CSV.

    Raises:
        StreamFormatError: with the file line of the first malformed, out-of-range
            or out-of-order row
    """
    frame = _read_csv(path, ("time_ps", "channel"))
    times = _integer_column(frame, "time_ps", 0, np.iinfo(np.int64).max)
    channels = _integer_column(frame, "channel", 0, len(CHANNEL_MAP) - 1)
    _check_time_order(times, "records")
    return TimeTagStream(times, channels.astype(np.uint8), segment)


@dataclass(frozen=True)
class PulseLog:
    """
    Transmitter record of a faint-pulse pass.

    Only pulse slots revealed for reconciliation are listed (the slot nearest to
    every receiver click); sent_counts holds the pulses sent per intensity class.
    """

    times_ps: np.ndarray
    intensity_class: np.ndarray
    bits: np.ndarray
    basis: np.ndarray
    sent_counts: Dict[str, int] = field(default_factory=dict)
    rep_rate_pps: float = 1.0e8

    def __len__(self) -> int:
        return len(self.times_ps)

    def as_stream(self) -> TimeTagStream:
        """Ground-side view: channel = 2 * basis + bit."""
        return TimeTagStream(self.times_ps, make_channels(self.basis, self.bits), "ground")

    def to_frame(self) -> pd.DataFrame:
        names = {code: name for name, code in INTENSITY_CODES.items()}
        return pd.DataFrame(
            {
                "time_ps": self.times_ps,
                "intensity_class": [names[int(c)] for c in self.intensity_class],
                "bit": self.bits.astype(np.uint8),
                "basis": self.basis.astype(np.uint8),
            }
        )

    def meta(self) -> dict:
        return {"rep_rate_pps": self.rep_rate_pps, "sent_counts": dict(self.sent_counts)}


def write_pulse_log(path: PathLike, log: PulseLog) -> None:
    """Write `time_ps,intensity_class,bit,basis` plus a `.meta.json` sidecar."""
    path = Path(path)
    log.to_frame().to_csv(path, index=False)
    Path(f"{path}.meta.json").write_text(json.dumps(log.meta(), indent=2, sort_keys=True) + "\n")


def read_pulse_log(path: PathLike, meta_path: Optional[PathLike] = None) -> PulseLog:
    """
    Read a pulse log and its `.meta.json` sidecar.

    Raises:
        StreamFormatError: on a malformed row, an unknown intensity class or a
            sidecar without `rep_rate_pps` and `sent_counts`
    """
    path = Path(path)
    frame = _read_csv(path, ("time_ps", "intensity_class", "bit", "basis"))
    times = _integer_column(frame, "time_ps", 0, np.iinfo(np.int64).max)
    classes = frame["intensity_class"].str.strip().map(INTENSITY_CODES)
    unknown = np.flatnonzero(classes.isna().to_numpy())
    if unknown.size:
        i = int(unknown[0])
        raise StreamFormatError(
            f"unknown intensity class {frame['intensity_class'].iloc[i]!r}", line=i + 2
        )
    bits = _integer_column(frame, "bit", 0, 1)
    basis = _integer_column(frame, "basis", 0, 1)
    _check_time_order(times, "pulse log")

    meta_file = Path(meta_path or f"{path}.meta.json")
    try:
        meta = json.loads(meta_file.read_text())
        sent_counts = {str(k): int(v) for k, v in meta["sent_counts"].items()}
        rep_rate = float(meta["rep_rate_pps"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as e:
        raise StreamFormatError(f"bad pulse log sidecar {meta_file.name}: {e}", line=1) from e
    return PulseLog(
        times_ps=times,
        intensity_class=classes.to_numpy(np.uint8),
        bits=bits.astype(np.uint8),
        basis=basis.astype(np.uint8),
        sent_counts=sent_counts,
        rep_rate_pps=rep_rate,
    )
