"""
Tests for time-tag containers and the binary file format.
"""

import numpy as np
import pytest

from src.quantum_uplink.exceptions import StreamFormatError
from src.quantum_uplink.models.timetag import (
    HEADER,
    RECORD_DTYPE,
    PulseLog,
    TimeTagStream,
    make_channels,
    parse_stream,
    read_pulse_log,
    read_stream,
    read_stream_csv,
    serialize_stream,
    write_pulse_log,
    write_stream,
    write_stream_csv,
)


def _stream(segment="space") -> TimeTagStream:
    times = np.array([10, 1_000, 1_000, 2**40, 2**62], dtype=np.int64)
    channels = np.array([0, 3, 1, 2, 0], dtype=np.uint8)
    return TimeTagStream(times, channels, segment)


def test_channel_encoding():
    channels = make_channels(np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]))
    np.testing.assert_array_equal(channels, [0, 1, 2, 3])
    stream = TimeTagStream(np.arange(4), channels)
    np.testing.assert_array_equal(stream.basis, [0, 0, 1, 1])
    np.testing.assert_array_equal(stream.outcome, [0, 1, 0, 1])


def test_binary_file_preserves_stream(tmp_path):
    stream = _stream()
    path = tmp_path / "space.qtt"
    write_stream(path, stream)
    assert path.stat().st_size == HEADER.size + len(stream) * RECORD_DTYPE.itemsize
    assert read_stream(path) == stream


def test_csv_alternative(tmp_path):
    stream = _stream("ground")
    path = tmp_path / "ground.csv"
    write_stream_csv(path, stream)
    assert path.read_text().splitlines()[0] == "time_ps,channel"
    assert read_stream_csv(path, "ground") == stream


def test_bad_magic_reports_offset_zero():
    data = b"XXXX" + serialize_stream(_stream())[4:]
    with pytest.raises(StreamFormatError) as info:
        parse_stream(data)
    assert info.value.offset == 0


def test_truncated_record_offset():
    data = serialize_stream(_stream())[:-3]
    with pytest.raises(StreamFormatError) as info:
        parse_stream(data)
    assert info.value.offset == HEADER.size + 4 * RECORD_DTYPE.itemsize


def test_channel_out_of_range():
    data = bytearray(serialize_stream(_stream()))
    data[HEADER.size + 2 * RECORD_DTYPE.itemsize + 8] = 7
    with pytest.raises(StreamFormatError) as info:
        parse_stream(bytes(data))
    assert info.value.offset == HEADER.size + 2 * RECORD_DTYPE.itemsize + 8


def test_unsorted_records_are_rejected():
    stream = TimeTagStream(np.array([5, 3]), np.array([0, 0]))
    with pytest.raises(StreamFormatError) as info:
        parse_stream(serialize_stream(stream))
    assert info.value.offset == HEADER.size + RECORD_DTYPE.itemsize


def test_unknown_version_and_segment():
    data = bytearray(serialize_stream(_stream()))
    data[4] = 9
    with pytest.raises(StreamFormatError):
        parse_stream(bytes(data))
    data = bytearray(serialize_stream(_stream()))
    data[6] = 5
    with pytest.raises(StreamFormatError):
        parse_stream(bytes(data))


def test_empty_stream():
    stream = TimeTagStream(np.empty(0), np.empty(0), "ground")
    assert parse_stream(serialize_stream(stream)) == stream
    assert stream.span_s == 0.0


def test_stream_validation():
    with pytest.raises(ValueError):
        TimeTagStream(np.arange(3), np.zeros(2))
    with pytest.raises(ValueError):
        TimeTagStream(np.arange(3), np.zeros(3), "orbit")
    with pytest.raises(ValueError):
        serialize_stream(TimeTagStream(np.array([-1]), np.array([0])))


def test_pulse_log_files(tmp_path):
    log = PulseLog(
        times_ps=np.array([0, 10_000, 30_000], dtype=np.int64),
        intensity_class=np.array([0, 2, 1], dtype=np.uint8),
        bits=np.array([1, 0, 1], dtype=np.uint8),
        basis=np.array([0, 1, 1], dtype=np.uint8),
        sent_counts={"signal": 2, "decoy": 1, "vacuum": 1},
    )
    path = tmp_path / "ground_pulses.csv"
    write_pulse_log(path, log)
    assert path.read_text().splitlines()[1] == "0,signal,1,0"
    loaded = read_pulse_log(path)
    np.testing.assert_array_equal(loaded.intensity_class, log.intensity_class)
    assert loaded.sent_counts == log.sent_counts
    assert loaded.rep_rate_pps == log.rep_rate_pps
    np.testing.assert_array_equal(loaded.as_stream().channels, [1, 2, 3])


@pytest.mark.parametrize(
    "body, line",
    [
        ("1000,0\n3000,1\n2000,2\n", 4),
        ("1000,0\n2000,7\n", 3),
        ("1000,0\n2000,1.5\n", 3),
        ("1000,0\n2000\n", 3),
        ("x,0\n", 2),
        ("-1,0\n", 2),
    ],
    ids=["out_of_order", "channel_range", "fractional_channel", "short_row", "text_time", "negative_time"],
)
def test_stream_csv_rejects_bad_rows(tmp_path, body, line):
    path = tmp_path / "space.csv"
    path.write_text("time_ps,channel\n" + body)
    with pytest.raises(StreamFormatError) as info:
        read_stream_csv(path, "space")
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_stream_csv_needs_its_columns(tmp_path):
    path = tmp_path / "space.csv"
    path.write_text("time,channel\n1000,0\n")
    with pytest.raises(StreamFormatError) as info:
        read_stream_csv(path)
    assert info.value.line == 1
    path.write_text("")
    with pytest.raises(StreamFormatError):
        read_stream_csv(path)


def test_stream_csv_header_only_is_empty(tmp_path):
    path = tmp_path / "ground.csv"
    path.write_text("time_ps,channel\n")
    assert len(read_stream_csv(path)) == 0


def _pulse_log_file(tmp_path, rows, meta='{"rep_rate_pps": 1e8, "sent_counts": {"signal": 2}}'):
    path = tmp_path / "ground_pulses.csv"
    path.write_text("time_ps,intensity_class,bit,basis\n" + "\n".join(rows) + "\n")
    (tmp_path / "ground_pulses.csv.meta.json").write_text(meta)
    return path


@pytest.mark.parametrize(
    "rows, line",
    [
        (["0,signal,1,0", "10000,bright,0,1"], 3),
        (["0,signal,1,0", "10000,decoy,2,1"], 3),
        (["0,signal,1,0", "10000,decoy,0"], 3),
        (["20000,signal,1,0", "10000,decoy,0,1"], 3),
    ],
    ids=["unknown_class", "bit_range", "short_row", "out_of_order"],
)
def test_pulse_log_rejects_bad_rows(tmp_path, rows, line):
    with pytest.raises(StreamFormatError) as info:
        read_pulse_log(_pulse_log_file(tmp_path, rows))
    assert info.value.line == line


def test_pulse_log_rejects_bad_sidecar(tmp_path):
    path = _pulse_log_file(tmp_path, ["0,signal,1,0"], meta='{"sent_counts": {"signal": 1}}')
    with pytest.raises(StreamFormatError):
        read_pulse_log(path)
    path = _pulse_log_file(tmp_path, ["0,signal,1,0"], meta="not json")
    with pytest.raises(StreamFormatError):
        read_pulse_log(path)


if __name__ == "__main__":
    pytest.main([__file__])
