"""Command-line interface: simulate rooms, sweep captures, localize, evaluate.

Exit codes are part of the contract so shell suites can assert outcomes:
0 success, 2 bad configuration or scenario, 3 insufficient activity in the
wear data, 4 malformed or mismatched input files. Every command's file output
is byte-identical to calling the library directly with the same inputs.
"""
from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path
from typing import Optional

import yaml

from .detect import OuiDatabase, active_detect, background_detect
from .errors import (
    BugsweepError,
    ConfigError,
    InputMismatchError,
    InsufficientActivityError,
    InsufficientDataError,
)
from .evaluate import run_suite
from .localize import AREA_FRACTION, GRID_CELL_M, audio_localize, localize
from .trace import (
    WINDOW_US,
    group_by_mac,
    normalize_mac,
    read_ground_truth,
    read_packets,
    write_ground_truth,
    write_packets,
    write_userpath,
)
from .worldsim import Scenario, apply_countermeasure, generate, scenario_from_dict

WINDOW_MS_BOUNDS = (10.0, 1000.0)
CELL_M_BOUNDS = (0.05, 1.0)


def _mac_slug(mac: str) -> str:
    return mac.replace(":", "-")


def _load_scenario_lined(path: str) -> Scenario:
    """Parse a scenario file, prefixing errors with the offending line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{path}: line {line}: {problem}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: line 1: scenario file must be a mapping")
    try:
        return scenario_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: line {_locate(text, str(exc))}: {exc}") from exc


def _locate(text: str, message: str) -> int:
    """Best-effort line number for a schema complaint: the first line
    containing any concrete token (key name, MAC, value) from the message."""
    lines = text.splitlines()
    for token in re.findall(r"[A-Za-z0-9_:.-]{3,}", message):
        for i, line in enumerate(lines, start=1):
            if token in line:
                return i
    return 1


def _check_bounds(name: str, value: float, lo: float, hi: float) -> None:
    if not (lo <= value <= hi):
        raise ConfigError(f"{name} must be within [{lo:g}, {hi:g}], got {value:g}")


def _mac_flag(value: str) -> str:
    try:
        return normalize_mac(value)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _read_input(reader, path: str):
    """File-level read failures count as input mismatches (exit 4), the same
    family as the parse errors the capture readers raise themselves."""
    try:
        return reader(path)
    except OSError as exc:
        raise InputMismatchError(f"{path}: {exc.strerror or exc}") from exc


def _window_us(args: argparse.Namespace) -> int:
    if args.window_ms is None:
        return WINDOW_US
    _check_bounds("--window-ms", args.window_ms, *WINDOW_MS_BOUNDS)
    return int(round(args.window_ms * 1000))


def _p_threshold(args: argparse.Namespace) -> Optional[float]:
    if args.p_value is None:
        return None
    if not (0.0 < args.p_value < 1.0):
        raise ConfigError(f"--p-value must be inside (0, 1), got {args.p_value:g}")
    return args.p_value


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    sc = _load_scenario_lined(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = generate(sc)
    written: list[str] = []
    for mac in sorted(result.traces):
        name = f"trace_{_mac_slug(mac)}.csv"
        write_packets(str(out / name), result.traces[mac].records)
        written.append(name)
    write_ground_truth(str(out / "ground_truth.csv"), result.ground_truth)
    write_userpath(str(out / "userpath.csv"), result.path)
    written += ["ground_truth.csv", "userpath.csv"]
    for cm in sc.countermeasures:
        shaped = apply_countermeasure(result.traces[cm.mac], cm.kind, cm.params, seed=sc.seed)
        name = f"trace_{_mac_slug(cm.mac)}_{cm.kind}.csv"
        write_packets(str(out / name), shaped.records)
        written.append(name)
    if args.figures:
        from .figures import save_path_figure

        save_path_figure(out / "userpath.png", result.path, sc.room, sc.sensors)
        written.append("userpath.png")
    print(f"wrote {len(written)} files to {out}")
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    window_us = _window_us(args)
    p_threshold = _p_threshold(args)
    records = []
    for path in args.traffic:
        records.extend(read_packets(path))
    traces = group_by_mac(records)
    if args.mac is not None:
        mac = _mac_flag(args.mac)
        if mac not in traces:
            raise InputMismatchError(f"{mac} does not appear in the traffic files")
        traces = {mac: traces[mac]}
    gt = read_ground_truth(args.imu)
    kwargs = {"window_us": window_us}
    if p_threshold is not None:
        kwargs["p_threshold"] = p_threshold
    if args.mode == "active":
        report = active_detect(traces, gt, **kwargs)
    else:
        report = background_detect(traces, gt, **kwargs)
    oui = OuiDatabase.load()
    if args.report:
        report.write(args.report, oui)
        if args.figures:
            from .figures import save_traffic_figure

            save_traffic_figure(
                Path(args.report).with_suffix(".png"),
                traces,
                gt,
                positives=report.positives(),
                window_us=window_us,
            )
    else:
        sys.stdout.write(report.render(oui))
    return 0


def cmd_localize(args: argparse.Namespace) -> int:
    sc = _load_scenario_lined(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    mac = _mac_flag(args.mac)
    placement = next((s for s in sc.sensors if s.mac == mac), None)
    if placement is None:
        raise ConfigError(f"{mac} is not a sensor in {args.scenario}")
    threshold = AREA_FRACTION if args.threshold is None else args.threshold
    if not (0.0 < threshold < 1.0):
        raise ConfigError(f"--threshold must be inside (0, 1), got {threshold:g}")
    cell_m = GRID_CELL_M if args.cell_m is None else args.cell_m
    _check_bounds("--cell-m", cell_m, *CELL_M_BOUNDS)
    if placement.kind == "audio":
        result = audio_localize(sc, mac, threshold=threshold, cell_m=cell_m)
    else:
        result = localize(sc, mac, threshold=threshold, cell_m=cell_m)
    if args.report:
        result.write(args.report)
        if args.figures:
            from .figures import save_room_figure

            save_room_figure(Path(args.report).with_suffix(".png"), result, sc.room)
    else:
        sys.stdout.write(result.render())
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    text, warnings = run_suite(args.suite_dir)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bugsweep",
        description="Find and localize hidden wireless sensors from traffic captures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate traces from a scenario file")
    p_sim.add_argument("--scenario", required=True, help="scenario YAML file")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.add_argument("--figures", action="store_true", help="also render figures")
    p_sim.set_defaults(func=cmd_simulate)

    p_det = sub.add_parser("detect", help="run a sweep phase over capture files")
    p_det.add_argument("--traffic", required=True, nargs="+", help="packet capture CSV files")
    p_det.add_argument("--imu", required=True, help="ground-truth (IMU/event) CSV file")
    p_det.add_argument("--mode", required=True, choices=("background", "active"))
    p_det.add_argument("--mac", default=None, help="restrict the sweep to one device")
    p_det.add_argument("--p-value", type=float, default=None, help="causality p threshold")
    p_det.add_argument("--window-ms", type=float, default=None, help="aggregation window (ms)")
    p_det.add_argument("--report", default=None, help="write the report here instead of stdout")
    p_det.add_argument("--figures", action="store_true", help="also render figures")
    p_det.set_defaults(func=cmd_detect)

    p_loc = sub.add_parser("localize", help="run the localization protocol in simulation")
    p_loc.add_argument("--scenario", required=True, help="scenario YAML file")
    p_loc.add_argument("--mac", required=True, help="the sensor to localize")
    p_loc.add_argument("--threshold", type=float, default=None, help="stop area fraction")
    p_loc.add_argument("--cell-m", type=float, default=None, help="grid cell size (m)")
    p_loc.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_loc.add_argument("--report", default=None, help="write the result here instead of stdout")
    p_loc.add_argument("--figures", action="store_true", help="also render figures")
    p_loc.set_defaults(func=cmd_localize)

    p_eval = sub.add_parser("evaluate", help="run seeded batteries from a suite directory")
    p_eval.add_argument("suite_dir", help="directory of batch YAML files")
    p_eval.add_argument("--report", default=None, help="write the tables here instead of stdout")
    p_eval.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InsufficientActivityError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InputMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except BugsweepError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
