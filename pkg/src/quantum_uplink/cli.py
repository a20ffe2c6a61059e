"""
Command-line interface.

    quantum-uplink linkbudget  --dt-sweep 0.1:0.5:0.05 --out fig3.csv
    quantum-uplink feasibility --fig5 --out fig5.csv
    quantum-uplink pass        --scenario iss_bell_default --out pass.csv
    quantum-uplink simulate    --scenario iss_bell_default --out runs/bell
    quantum-uplink analyze     --ground runs/bell/ground.qtt --space runs/bell/space.qtt
    quantum-uplink report      --run runs/bell --plot

Exit codes: 0 ok, 1 other toolkit error, 2 usage, 3 empty link window,
4 I/O, 5 time-tag format, 6 no correlation peak.
"""

import argparse
import sys
import time
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .core.feasibility import bell_snr_threshold, fig5_sweep, snr_sweep_over_apertures
from .core.orbit_geometry import footprint_diameter
from .core.pipeline import PipelineResult, analyze_streams, run_simulation
from .exceptions import EmptyWindowError, QuantumUplinkError
from .models.scenario import Scenario, load_scenario
from .models.source_models import FpsSpec
from .models.timetag import (
    PulseLog,
    read_pulse_log,
    read_stream,
    read_stream_csv,
    write_pulse_log,
    write_stream,
)
from .utils.config import Config, get_config, reload_config
from .utils.data_processor import (
    load_frame,
    parse_list,
    parse_sweep,
    read_json,
    save_frame,
    write_json,
)
from .utils.logger import get_logger, setup_logging

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 4

# attenuation grid of the reference SNR and key-rate figure, dB
FIG5_ATTENUATION_SWEEP = "20:60:1"

console = Console()
logger = get_logger(__name__)


def _scenario_arg(value: Optional[str], config: Config) -> Scenario:
    name = value or config.get("scenarios.default", "iss_bell_default")
    return load_scenario(name, config)


def cmd_linkbudget(args, config: Config) -> int:
    try:
        apertures = parse_sweep(args.dt_sweep)
        backgrounds = parse_list(args.backgrounds) if args.backgrounds else config.get_background_levels()
    except ValueError as e:
        args.parser.error(str(e))
    scenario = _scenario_arg(args.scenario, config) if args.scenario else Scenario()
    df = snr_sweep_over_apertures(
        apertures,
        backgrounds,
        scenario.link,
        scenario.source if not isinstance(scenario.source, FpsSpec) else None,
        scenario.detectors,
        scenario.coincidence_window_s(config),
        workers=args.workers or config.get_workers(),
    )
    _emit_frame(df, args.out, "aperture sweep", "linkbudget.csv")
    return EXIT_OK


def cmd_feasibility(args, config: Config) -> int:
    try:
        attenuations = parse_sweep(FIG5_ATTENUATION_SWEEP if args.fig5 else args.attenuation)
        backgrounds = parse_list(args.backgrounds) if args.backgrounds else config.get_background_levels()
    except ValueError as e:
        args.parser.error(str(e))
    df = fig5_sweep(
        attenuations,
        backgrounds,
        tau_c_s=config.get_coincidence_window(),
        gate_s=config.get_gate(),
        f=config.get_error_correction_efficiency(),
        sifting_factor=config.get_sifting_factor(),
        workers=args.workers or config.get_workers(),
    )
    console.print(f"CHSH SNR threshold: {bell_snr_threshold():.3f}")
    _emit_frame(df, args.out, "feasibility grid", "feasibility.csv")
    return EXIT_OK


def cmd_pass(args, config: Config) -> int:
    scenario = _scenario_arg(args.scenario, config)
    if args.max_elevation is not None:
        scenario = scenario.model_copy(
            update={"pass_": scenario.pass_.model_copy(update={"max_elevation_deg": args.max_elevation})}
        )
    profile = scenario.profile()
    window = scenario.window(profile)
    fov = scenario.detectors.fov_mrad * 1e-3
    table = Table(title=f"Link window, pass peaking at {scenario.pass_.max_elevation_deg:g} deg")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("start (s)", f"{window.t_start:.1f} [{window.start_constraint}]")
    table.add_row("end (s)", f"{window.t_end:.1f} [{window.end_constraint}]")
    table.add_row("duration (s)", f"{window.duration:.1f}")
    table.add_row("min slant range (km)", f"{float(np.min(profile.slant_range_km)):.1f}")
    table.add_row(
        "footprint at closest approach (m)",
        f"{footprint_diameter(float(np.min(profile.slant_range_km)), fov):.0f}",
    )
    console.print(table)
    _emit_frame(profile.to_frame(), args.out, "pass profile", "pass_profile.csv", echo=False)
    return EXIT_OK


def _write_run(out: Path, result: PipelineResult, scenario: Scenario) -> None:
    out.mkdir(parents=True, exist_ok=True)
    simulated = result.simulated
    if simulated is not None:
        if isinstance(simulated.ground, PulseLog):
            write_pulse_log(out / "ground_pulses.csv", simulated.ground)
        else:
            write_stream(out / "ground.qtt", simulated.ground)
        write_stream(out / "space.qtt", simulated.space)
        truth = simulated.truth
        write_json(
            out / "truth.json",
            {
                "window": truth.window.as_dict(),
                "t0_pass_s": truth.t0_pass_s,
                "offset_s": truth.offset_s,
                "drift": truth.drift,
                "mean_attenuation_db": truth.mean_attenuation_db,
                "counts": truth.counts,
                "sent_counts": truth.sent_counts,
            },
        )
    _write_analysis(out, result)
    (out / "scenario.resolved.yaml").write_text(scenario.to_yaml())


def _write_analysis(out: Path, result: PipelineResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_frame(result.coincidences.to_frame(), out / "coincidences.csv")
    save_frame(result.histogram.to_frame(), out / "correlation_histogram.csv")
    if result.chsh is not None:
        save_frame(pd.DataFrame([result.chsh.csv_row()]), out / "chsh.csv")
    if result.sifted is not None:
        save_frame(result.sifted.to_frame(), out / "sifted_key.csv")
    (out / "report.json").write_text(result.report.to_json())
    (out / "report.txt").write_text(result.report.to_text())
    write_json(out / "timing.json", result.report.timing)


def cmd_simulate(args, config: Config) -> int:
    scenario = _scenario_arg(args.scenario, config)
    if args.seed is not None:
        scenario = scenario.model_copy(update={"seed": args.seed})
    console.print(f"🛰️  Simulating scenario [bold]{scenario.name}[/bold] (seed {scenario.seed})")
    start = time.perf_counter()
    result = run_simulation(scenario, config)
    out = Path(args.out)
    _write_run(out, result, scenario)
    console.print(result.report.to_text(), markup=False)
    console.print(f"✅ Run written to {out} in {time.perf_counter() - start:.1f} s")
    return EXIT_OK


def _read_ground(path: Path):
    if path.suffix == ".csv":
        with path.open() as f:
            header = f.readline()
        if "intensity_class" in header:
            return read_pulse_log(path)
        return read_stream_csv(path, "ground")
    return read_stream(path)


def _read_space(path: Path):
    if path.suffix == ".csv":
        return read_stream_csv(path, "space")
    return read_stream(path)


def cmd_analyze(args, config: Config) -> int:
    ground = _read_ground(Path(args.ground))
    space = _read_space(Path(args.space))
    scenario = load_scenario(args.scenario, config) if args.scenario else None
    tau_c = args.tau * 1e-9 if args.tau is not None else None
    result = analyze_streams(ground, space, scenario, config, tau_c=tau_c)
    if args.out:
        _write_analysis(Path(args.out), result)
    console.print(result.report.to_text(), markup=False)
    return EXIT_OK


def _report_table(report: dict) -> Table:
    table = Table(title=f"{report['protocol'].upper()} pass report: {report['scenario']}")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("seed", str(report["seed"]))
    table.add_row("window (s)", f"{report['window'].get('duration_s', float('nan')):.2f}")
    for name, value in report["counts"].items():
        table.add_row(f"{name} events", str(value))
    coincidences = report["coincidences"]
    table.add_row("measured SNR", f"{float(coincidences['measured_snr']):.2f}")
    bell = report.get("bell")
    if bell and bell.get("chsh"):
        chsh = bell["chsh"]
        table.add_row("S", f"{chsh['S']:.4f} ± {chsh['sigma_S']:.4f}")
        table.add_row("violation (sigma)", f"{chsh['n_sigma']:.2f}")
    qkd = report.get("qkd")
    if qkd:
        table.add_row("QBER", f"{qkd['qber']:.4f}")
        table.add_row("key rate (bit/s)", f"{qkd['key_rate']['rate_cps']:.1f}")
    for name, value in report["flags"].items():
        table.add_row(name, "✅" if value else "❌")
    return table


def cmd_report(args, config: Config) -> int:
    run = Path(args.run)
    if not run.is_dir():
        raise FileNotFoundError(f"run directory {run} does not exist")
    report_path = run / "report.json"
    if report_path.exists():
        console.print(_report_table(read_json(report_path)))
    if args.plot:
        from .utils.plotting import plot_aperture_sweep, plot_feasibility

        rendered = 0
        for csv, plot in (("linkbudget.csv", plot_aperture_sweep), ("feasibility.csv", plot_feasibility)):
            if (run / csv).exists():
                path = plot(load_frame(run / csv), run / csv.replace(".csv", ".png"))
                console.print(f"📊 {path}")
                rendered += 1
        if not rendered:
            console.print("no linkbudget.csv or feasibility.csv to plot")
    elif not report_path.exists():
        raise FileNotFoundError(f"{report_path} not found")
    return EXIT_OK


def _emit_frame(
    df: pd.DataFrame, out: Optional[str], what: str, filename: str, echo: bool = True
) -> None:
    """Write to a CSV path, or into a directory under filename; echo to stdout otherwise."""
    if out:
        path = Path(out)
        if path.suffix != ".csv":
            path.mkdir(parents=True, exist_ok=True)
            path = path / filename
        save_frame(df, path)
        console.print(f"✅ {what} written to {path}")
    elif echo:
        console.print(df.to_csv(index=False), markup=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quantum-uplink",
        description="ISS quantum uplink simulator and analysis toolkit",
    )
    parser.add_argument("--config", help="path to config.yaml")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ...")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("linkbudget", help="attenuation versus transmitter aperture")
    p.add_argument("--dt-sweep", default="0.05:0.5:0.01", help="min:max:step in meters")
    p.add_argument("--backgrounds", help="comma-separated background levels, cps")
    p.add_argument("--scenario", help="take link, source and detectors from a scenario")
    p.add_argument("--out", help="CSV file or directory")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_linkbudget, parser=p)

    p = sub.add_parser("feasibility", help="SNR and key rate over attenuation x background")
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument(
        "--fig5", action="store_true", help=f"reference grid, attenuation {FIG5_ATTENUATION_SWEEP} dB"
    )
    grid.add_argument("--attenuation", help="custom grid, min:max:step in dB")
    p.add_argument("--backgrounds", help="comma-separated background levels, cps")
    p.add_argument("--out", help="CSV file or directory")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_feasibility, parser=p)

    p = sub.add_parser("pass", help="pass profile and usable link window")
    p.add_argument("--scenario")
    p.add_argument("--max-elevation", type=float)
    p.add_argument("--out", help="profile CSV file or directory")
    p.set_defaults(func=cmd_pass, parser=p)

    p = sub.add_parser("simulate", help="generate and analyse one pass")
    p.add_argument("--scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_simulate, parser=p)

    p = sub.add_parser("analyze", help="analyse recorded time-tag files")
    p.add_argument("--ground", required=True, help="ground .qtt/.csv or pulse log CSV")
    p.add_argument("--space", required=True, help="space .qtt or .csv")
    p.add_argument("--tau", type=float, help="coincidence window, ns")
    p.add_argument("--scenario", help="restore delay model and settings from a scenario")
    p.add_argument("--out", help="directory for the analysis outputs")
    p.set_defaults(func=cmd_analyze, parser=p)

    p = sub.add_parser("report", help="show a stored run report")
    p.add_argument("--run", required=True)
    p.add_argument("--plot", action="store_true", help="render PNGs from sweep CSVs in the run")
    p.set_defaults(func=cmd_report, parser=p)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        config = reload_config(args.config) if args.config else get_config()
    except (FileNotFoundError, RuntimeError) as e:
        console.print(f"❌ {e}", markup=False)
        return EXIT_IO
    setup_logging(args.log_level or config.get_log_level())

    try:
        return args.func(args, config)
    except SystemExit as e:
        # usage errors raised by a subcommand through parser.error
        return EXIT_USAGE if e.code else EXIT_OK
    except EmptyWindowError as e:
        console.print(f"❌ no usable link window: {e}", markup=False)
        return e.exit_code
    except QuantumUplinkError as e:
        console.print(f"❌ {type(e).__name__}: {e}", markup=False)
        return e.exit_code
    except OSError as e:
        console.print(f"❌ I/O error: {e}", markup=False)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
