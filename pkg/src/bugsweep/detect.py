"""Whole-capture detection pipeline: classify every transmitter, run the
causality test matching its class, and emit a per-device report.

Two entry points mirror the two sweep protocols:

* :func:`background_detect` — passive: the user goes about their day; needs
  at least a minute of wear data containing both motion and a natural stop.
* :func:`active_detect` — the deliberate still/active/still/active/still
  perturbation (~40 s); raw devices must additionally show elevated traffic
  during *both* active segments, which is what buys the lower false-positive
  rate of the active phase.

Verdict vocabulary (the ``verdict`` report column): ``monitoring`` /
``clear`` for raw devices, ``event`` / ``clear`` for burst devices,
``unverified`` for devices too quiet to test.
"""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .causality import P_THRESHOLD, discover_timeout, find_bursts, granger_sweep, motion_segments
from .errors import ConfigError, InputMismatchError, InsufficientActivityError
from .trace import (
    WINDOW_US,
    DeviceTrace,
    GroundTruthTrace,
    TimeSeries,
    deduplicate,
    normalize_mac,
    resample_ground_truth,
    suppress_iframes,
    windowize,
)

# A device transmitting in more than this fraction of windows is treated as a
# continuous ("raw") stream; at or below it, bursts make it an event device.
RAW_ACTIVE_FRACTION = 0.5

# Shortest capture over which the raw/event/silent split is meaningful.
CLASSIFY_MIN_S = 30.0

# Background sweeps need enough life in them to regress against.
BACKGROUND_MIN_S = 60.0

# The active perturbation script: still/active/still/active/still.
ACTIVE_SEGMENTS = 2
ACTIVE_STOPS = 3
ACTIVE_DURATION_S = (35.0, 45.0)

# Active-phase gate: a raw device counts as responding only if its mean rate
# during every active segment clears the still-phase mean by this many
# standard errors. A level gate would miss sensors near their range limit,
# where the activity signal is small but still far from noise.
ACTIVE_GATE_Z = 2.0

DEVICE_CLASSES = ("raw", "event", "silent")
OUI_CATEGORIES = ("camera", "assistant", "motion", "rf", "other")


# ---------------------------------------------------------------------------
# Vendor lookup
# ---------------------------------------------------------------------------


class OuiDatabase:
    """24-bit MAC-prefix → (vendor, category) table.

    Unknown prefixes resolve to ``("unknown", "other")`` and are remembered in
    :attr:`discovered` (first-seen order) so a sweep can report hardware worth
    researching by hand.
    """

    def __init__(self, entries: Optional[dict[str, tuple[str, str]]] = None) -> None:
        self.entries: dict[str, tuple[str, str]] = dict(entries or {})
        self.discovered: list[str] = []

    @classmethod
    def load(cls, path: Optional[str | Path] = None) -> "OuiDatabase":
        """Read ``xx:xx:xx,vendor,category`` lines ('#' comments allowed).
        Without a path, the bundled table is used."""
        if path is None:
            text = (
                importlib.resources.files("bugsweep")
                .joinpath("data/oui.csv")
                .read_text(encoding="utf-8")
            )
        else:
            text = Path(path).read_text(encoding="utf-8")
        entries: dict[str, tuple[str, str]] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ConfigError(f"oui table line {lineno}: expected prefix,vendor,category")
            prefix, vendor, category = (p.strip() for p in parts)
            prefix = prefix.lower().replace("-", ":")
            if len(prefix.split(":")) != 3:
                raise ConfigError(f"oui table line {lineno}: prefix must be three octets")
            if category not in OUI_CATEGORIES:
                raise ConfigError(
                    f"oui table line {lineno}: unknown category {category!r}"
                )
            entries[prefix] = (vendor, category)
        return cls(entries)

    def lookup(self, mac: str) -> tuple[str, str]:
        """Vendor and category for a full MAC (malformed MACs are rejected)."""
        prefix = normalize_mac(mac)[:8]
        hit = self.entries.get(prefix)
        if hit is None:
            if prefix not in self.discovered:
                self.discovered.append(prefix)
            return ("unknown", "other")
        return hit


# ---------------------------------------------------------------------------
# Findings and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeviceFinding:
    """One report row: what a device is and whether it is watching you."""

    mac: str
    device_class: str
    verdict: str
    min_p: Optional[float] = None
    best_lag: Optional[int] = None
    best_axis: Optional[str] = None
    timeout_s: Optional[float] = None
    matched_events: Optional[int] = None
    missed_events: Optional[int] = None

    @property
    def positive(self) -> bool:
        return self.verdict in ("monitoring", "event")

    def line(self) -> str:
        if self.device_class == "raw":
            return (
                f"{self.mac},{self.verdict},{self.min_p:.6g},"
                f"{self.best_lag},{self.best_axis}"
            )
        if self.device_class == "event":
            timeout = "" if self.timeout_s is None else f"{self.timeout_s:.1f}"
            return (
                f"{self.mac},{self.verdict},{timeout},"
                f"{self.matched_events},{self.missed_events}"
            )
        return f"{self.mac},unverified,,,"


@dataclass
class DetectionReport:
    """All findings from one sweep phase, one row per MAC, sorted."""

    phase: str
    findings: list[DeviceFinding] = field(default_factory=list)

    def positives(self) -> list[str]:
        return [f.mac for f in self.findings if f.positive]

    def by_mac(self) -> dict[str, DeviceFinding]:
        return {f.mac: f for f in self.findings}

    def render(self, oui: Optional[OuiDatabase] = None) -> str:
        """Delimited text, one line per device; with a vendor table the
        vendor and category columns are appended to every line."""
        lines = []
        for f in self.findings:
            line = f.line()
            if oui is not None:
                vendor, category = oui.lookup(f.mac)
                line = f"{line},{vendor},{category}"
            lines.append(line)
        return "".join(line + "\n" for line in lines)

    def write(self, path: str | Path, oui: Optional[OuiDatabase] = None) -> None:
        Path(path).write_text(self.render(oui), encoding="utf-8")


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------


def classify_device(trace: DeviceTrace, horizon_s: float) -> str:
    """Sort a transmitter into raw / event / silent over ``horizon_s``.

    Raw devices fill more than half the windows; event devices are quieter
    but show at least one burst; everything else (including an empty trace)
    is silent.
    """
    if horizon_s < CLASSIFY_MIN_S:
        raise ValueError(
            f"classification needs >= {CLASSIFY_MIN_S:.0f} s of capture, got {horizon_s:.1f}"
        )
    series = windowize(deduplicate(trace), WINDOW_US, span_us=int(horizon_s * 1e6))
    if not len(series) or not trace.records:
        return "silent"
    active = float(np.count_nonzero(series.values)) / len(series)
    if active > RAW_ACTIVE_FRACTION:
        return "raw"
    if find_bursts(series):
        return "event"
    return "silent"


# ---------------------------------------------------------------------------
# Sweep phases
# ---------------------------------------------------------------------------


def _as_trace_map(traces: dict[str, DeviceTrace] | Iterable[DeviceTrace]) -> dict[str, DeviceTrace]:
    if isinstance(traces, dict):
        items = traces.values()
    else:
        items = traces
    out: dict[str, DeviceTrace] = {}
    for t in items:
        if t.mac in out:
            raise InputMismatchError(f"duplicate trace for {t.mac}")
        out[t.mac] = t
    return out


def _common_span_us(traces: dict[str, DeviceTrace], gt: GroundTruthTrace) -> int:
    """One window count for everything: IMU axes and device series must align
    column-for-column or the regression is meaningless.

    Traffic running on long after the wear data ends means the files came
    from different sessions (a quiet device ending early does not — event
    sensors legitimately stop transmitting)."""
    longest = max((t.span_us for t in traces.values()), default=0)
    if longest > 2 * gt.span_us:
        raise InputMismatchError(
            f"traffic span {longest / 1e6:.1f} s is more than twice the "
            f"ground-truth span {gt.span_us / 1e6:.1f} s — wrong file pairing?"
        )
    return max(gt.span_us, longest)


def _raw_finding(
    trace: DeviceTrace,
    axes: list[TimeSeries],
    span_us: int,
    gate: Optional[tuple[list[tuple[int, int]], list[tuple[int, int]]]] = None,
    window_us: int = WINDOW_US,
    p_threshold: float = P_THRESHOLD,
) -> DeviceFinding:
    series = suppress_iframes(windowize(deduplicate(trace), window_us, span_us=span_us))
    sweep = granger_sweep(series, axes, threshold=p_threshold, mac=trace.mac)
    monitoring = sweep.monitoring
    if monitoring and gate is not None:
        segments, stops = gate
        monitoring = _elevated_in_all(series, segments, stops)
    return DeviceFinding(
        mac=trace.mac,
        device_class="raw",
        verdict="monitoring" if monitoring else "clear",
        min_p=sweep.min_p,
        best_lag=sweep.best_lag,
        best_axis=sweep.best_axis,
    )


def _event_finding(
    trace: DeviceTrace, gt: GroundTruthTrace, window_us: int = WINDOW_US
) -> DeviceFinding:
    ec = discover_timeout(gt, trace, window_us)
    return DeviceFinding(
        mac=trace.mac,
        device_class="event",
        verdict="event" if ec.verdict else "clear",
        timeout_s=ec.timeout_s,
        matched_events=ec.matched_events,
        missed_events=ec.missed_events,
    )


def _silent_finding(mac: str) -> DeviceFinding:
    return DeviceFinding(mac=mac, device_class="silent", verdict="unverified")


def _elevated_in_all(
    series: TimeSeries,
    segments: list[tuple[int, int]],
    stops: list[tuple[int, int]],
    margin: float = ACTIVE_GATE_Z,
) -> bool:
    """Does the despiked rate run hot during every active segment?

    Each segment's mean is compared against the still-phase mean with a
    standard-error margin; a device that fails to rise in even one segment
    is reacting to something other than the user.
    """
    starts = series.window_starts_us()
    still = np.zeros(len(series), dtype=bool)
    for s, e in stops:
        still |= (starts >= s) & (starts < e)
    if not still.any():
        return False
    base = series.values[still]
    base_mean = float(base.mean())
    base_std = float(base.std())
    for s, e in segments:
        seg = series.values[(starts >= s) & (starts < e)]
        if not len(seg):
            return False
        sem = base_std * np.sqrt(1.0 / len(seg) + 1.0 / len(base))
        if float(seg.mean()) <= base_mean + margin * sem:
            return False
    return True


def background_detect(
    traces: dict[str, DeviceTrace] | Iterable[DeviceTrace],
    gt: GroundTruthTrace,
    window_us: int = WINDOW_US,
    p_threshold: float = P_THRESHOLD,
) -> DetectionReport:
    """Passive sweep over everyday wear data.

    Needs at least :data:`BACKGROUND_MIN_S` of IMU containing both movement
    and a natural stop — continuously-stationary or continuously-moving
    captures give the causality tests nothing to contrast and are refused.
    """
    trace_map = _as_trace_map(traces)
    if gt.kind != "imu" or gt.span_us < BACKGROUND_MIN_S * 1e6:
        raise InsufficientActivityError(
            f"background sweep needs >= {BACKGROUND_MIN_S:.0f} s of worn-IMU data"
        )
    segments, stops = motion_segments(gt)
    if not segments or not stops:
        state = "moving" if not stops else "stationary"
        raise InsufficientActivityError(
            f"user was continuously {state}; background sweep needs both "
            "motion and a natural stop"
        )
    span_us = _common_span_us(trace_map, gt)
    axes, _ = resample_ground_truth(gt, window_us, span_us=span_us)
    findings = []
    for mac in sorted(trace_map):
        trace = trace_map[mac]
        cls = classify_device(trace, span_us / 1e6)
        if cls == "raw":
            findings.append(
                _raw_finding(trace, axes, span_us, window_us=window_us, p_threshold=p_threshold)
            )
        elif cls == "event":
            findings.append(_event_finding(trace, gt, window_us))
        else:
            findings.append(_silent_finding(mac))
    return DetectionReport("background", findings)


def active_detect(
    traces: dict[str, DeviceTrace] | Iterable[DeviceTrace],
    gt: GroundTruthTrace,
    window_us: int = WINDOW_US,
    p_threshold: float = P_THRESHOLD,
) -> DetectionReport:
    """Deliberate-perturbation sweep.

    The wear data must follow the five-segment still/active/still/active/still
    script (35–45 s total); anything else is rejected. Raw verdicts are gated
    on elevated traffic during both active segments.
    """
    trace_map = _as_trace_map(traces)
    if gt.kind != "imu":
        raise InsufficientActivityError("active sweep needs worn-IMU data")
    duration_s = gt.span_us / 1e6
    lo, hi = ACTIVE_DURATION_S
    segments, stops = motion_segments(gt)
    pattern_ok = (
        lo <= duration_s <= hi
        and len(segments) == ACTIVE_SEGMENTS
        and len(stops) == ACTIVE_STOPS
        and stops[0][0] < segments[0][0] < stops[1][0] < segments[1][0] < stops[2][0]
    )
    if not pattern_ok:
        raise InsufficientActivityError(
            "active sweep requires the five-segment still/active pattern "
            f"({lo:.0f}-{hi:.0f} s); got {len(segments)} active / {len(stops)} "
            f"still segments over {duration_s:.1f} s"
        )
    span_us = _common_span_us(trace_map, gt)
    axes, _ = resample_ground_truth(gt, window_us, span_us=span_us)
    findings = []
    for mac in sorted(trace_map):
        trace = trace_map[mac]
        cls = classify_device(trace, span_us / 1e6)
        if cls == "raw":
            findings.append(
                _raw_finding(
                    trace,
                    axes,
                    span_us,
                    gate=(segments, stops),
                    window_us=window_us,
                    p_threshold=p_threshold,
                )
            )
        elif cls == "event":
            findings.append(_event_finding(trace, gt, window_us))
        else:
            findings.append(_silent_finding(mac))
    return DetectionReport("active", findings)
