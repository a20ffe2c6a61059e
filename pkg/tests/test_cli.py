"""
Tests for the quantum-uplink command line: outputs and exit codes.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from src.quantum_uplink.cli import build_parser, main
from src.quantum_uplink.models.timetag import TimeTagStream, write_stream
from src.quantum_uplink.utils.data_processor import read_json
from tests.conftest import small_bell_dict, small_qkd_dict


@pytest.fixture
def cli(fast_config):
    """Run the CLI against the fast test config."""

    def run(*args: str) -> int:
        return main(["--config", fast_config.config_path, "--log-level", "WARNING", *args])

    return run


@pytest.fixture
def bell_yaml(tmp_path):
    path = tmp_path / "small_bell.yaml"
    path.write_text(yaml.safe_dump(small_bell_dict()))
    return path


def test_parser_knows_every_command():
    parser = build_parser()
    required = {
        "linkbudget": [],
        "feasibility": ["--fig5"],
        "pass": [],
        "simulate": ["--out", "run"],
        "analyze": ["--ground", "g.qtt", "--space", "s.qtt"],
        "report": ["--run", "run"],
    }
    for command, extra in required.items():
        assert parser.parse_args([command, *extra]).command == command


def test_usage_errors_exit_2(cli):
    assert main([]) == 2
    assert cli("linkbudget", "--dt-sweep", "0.5:0.1:0.1") == 2
    assert cli("feasibility", "--attenuation", "twenty") == 2
    assert cli("feasibility", "--fig5", "--backgrounds", "1,x") == 2
    assert cli("feasibility") == 2
    assert cli("feasibility", "--fig5", "--attenuation", "20:22:1") == 2


def test_linkbudget_csv(cli, tmp_path):
    out = tmp_path / "fig3.csv"
    assert cli("linkbudget", "--dt-sweep", "0.1:0.5:0.1", "--backgrounds", "100,1000", "--out", str(out)) == 0
    df = pd.read_csv(out)
    assert len(df) == 5
    assert {"D_T_m", "total_db", "snr_100cps", "snr_1000cps"} <= set(df.columns)
    assert (df["snr_100cps"] >= df["snr_1000cps"]).all()


def test_feasibility_csv_into_directory(cli, tmp_path):
    assert cli("feasibility", "--attenuation", "20:22:1", "--backgrounds", "100,1000",
               "--out", str(tmp_path)) == 0
    df = pd.read_csv(tmp_path / "feasibility.csv")
    assert len(df) == 6
    assert list(df.columns[:2]) == ["attenuation_db", "background_cps"]


def test_fig5_flag_selects_reference_grid(cli, tmp_path):
    out = tmp_path / "fig5.csv"
    assert cli("feasibility", "--fig5", "--backgrounds", "1000,10000", "--out", str(out)) == 0
    df = pd.read_csv(out)
    assert len(df) == 41 * 2
    assert df["attenuation_db"].min() == 20.0 and df["attenuation_db"].max() == 60.0
    at_40 = df[df["attenuation_db"] == 40.0].set_index("background_cps")["snr"]
    assert at_40[10000.0] > 4.83


def test_report_plots_sweeps(cli, tmp_path):
    assert cli("linkbudget", "--dt-sweep", "0.1:0.3:0.1", "--out", str(tmp_path)) == 0
    assert cli("feasibility", "--attenuation", "20:30:5", "--out", str(tmp_path)) == 0
    assert cli("report", "--run", str(tmp_path), "--plot") == 0
    assert (tmp_path / "linkbudget.png").stat().st_size > 0
    assert (tmp_path / "feasibility.png").stat().st_size > 0


def test_pass_profile(cli, tmp_path):
    out = tmp_path / "pass.csv"
    assert cli("pass", "--scenario", "iss_bell_default", "--out", str(out)) == 0
    df = pd.read_csv(out)
    assert {"t_s", "elevation_deg", "slant_range_km"} <= set(df.columns)
    assert df["elevation_deg"].max() == pytest.approx(90.0, abs=0.5)


def test_low_pass_exits_3(cli):
    assert cli("pass", "--scenario", "iss_bell_default", "--max-elevation", "30") == 3


def test_io_errors_exit_4(cli, tmp_path):
    assert cli("report", "--run", str(tmp_path / "missing")) == 4
    assert cli("report", "--run", str(tmp_path)) == 4
    assert main(["--config", str(tmp_path / "none.yaml"), "report", "--run", "."]) == 4
    assert cli("simulate", "--scenario", "no_such_scenario", "--out", str(tmp_path / "run")) == 4


def test_bad_time_tag_file_exits_5(cli, tmp_path):
    ground = tmp_path / "ground.qtt"
    write_stream(ground, TimeTagStream(np.arange(10, dtype=np.int64), np.zeros(10), "ground"))
    space = tmp_path / "space.qtt"
    space.write_bytes(b"not a time tag file")
    assert cli("analyze", "--ground", str(ground), "--space", str(space)) == 5


@pytest.mark.parametrize(
    "rows",
    [
        ["3000,0", "1000,1", "2000,7"],
        ["1000,0", "2000,7", "3000,1"],
        ["1000,0", "2000,1", "1500,2"],
        ["1000,0", "2000", "3000,1"],
        ["1000,0", "abc,1", "3000,1"],
        ["1000,0", "-5,1"],
    ],
    ids=["shuffled_with_channel_7", "channel_7", "out_of_order", "short_row", "bad_time", "negative_time"],
)
def test_bad_space_csv_exits_5(cli, tmp_path, rows):
    ground = tmp_path / "ground.qtt"
    write_stream(ground, TimeTagStream(np.arange(10, dtype=np.int64), np.zeros(10), "ground"))
    space = tmp_path / "space.csv"
    space.write_text("\n".join(["time_ps,channel", *rows]) + "\n")
    assert cli("analyze", "--ground", str(ground), "--space", str(space)) == 5


def test_pulse_log_with_unknown_class_exits_5(cli, tmp_path):
    ground = tmp_path / "ground_pulses.csv"
    ground.write_text("time_ps,intensity_class,bit,basis\n0,signal,1,0\n10000,bright,0,1\n")
    Path(f"{ground}.meta.json").write_text('{"rep_rate_pps": 1e8, "sent_counts": {"signal": 1}}')
    space = tmp_path / "space.qtt"
    write_stream(space, TimeTagStream(np.arange(10, dtype=np.int64), np.zeros(10), "space"))
    assert cli("analyze", "--ground", str(ground), "--space", str(space)) == 5


def test_uncorrelated_files_exit_6(cli, tmp_path):
    rng = np.random.default_rng(2)
    for name, n in (("ground", 400_000), ("space", 20_000)):
        times = np.sort(rng.integers(10**12, 3 * 10**12, n))
        write_stream(tmp_path / f"{name}.qtt", TimeTagStream(times, np.zeros(n), name))
    assert cli("analyze", "--ground", str(tmp_path / "ground.qtt"), "--space", str(tmp_path / "space.qtt")) == 6


def test_simulate_then_analyze_reproduces_report(cli, bell_yaml, tmp_path):
    run = tmp_path / "run"
    assert cli("simulate", "--scenario", str(bell_yaml), "--out", str(run)) == 0
    for name in ("ground.qtt", "space.qtt", "truth.json", "coincidences.csv", "correlation_histogram.csv",
                 "chsh.csv", "report.json", "report.txt", "timing.json", "scenario.resolved.yaml"):
        assert (run / name).exists(), name

    again = tmp_path / "again"
    assert cli(
        "analyze",
        "--ground", str(run / "ground.qtt"),
        "--space", str(run / "space.qtt"),
        "--scenario", str(run / "scenario.resolved.yaml"),
        "--out", str(again),
    ) == 0
    assert read_json(again / "report.json") == read_json(run / "report.json")
    assert cli("report", "--run", str(run)) == 0


def test_simulate_qkd_writes_pulse_log(cli, tmp_path):
    scenario = tmp_path / "small_qkd.yaml"
    scenario.write_text(yaml.safe_dump(small_qkd_dict()))
    run = tmp_path / "qkd"
    assert cli("simulate", "--scenario", str(scenario), "--seed", "12", "--out", str(run)) == 0
    assert (run / "ground_pulses.csv").exists()
    assert (run / "ground_pulses.csv.meta.json").exists()
    assert (run / "sifted_key.csv").exists()
    report = read_json(run / "report.json")
    assert report["seed"] == 12
    assert report["protocol"] == "qkd"

    again = tmp_path / "again"
    assert cli(
        "analyze",
        "--ground", str(run / "ground_pulses.csv"),
        "--space", str(run / "space.qtt"),
        "--scenario", str(run / "scenario.resolved.yaml"),
        "--out", str(again),
    ) == 0
    assert read_json(again / "report.json") == report


if __name__ == "__main__":
    pytest.main([__file__])
