"""Packet traces, windowed series, and ground-truth streams.

Timestamps are integer microseconds since trace start, everywhere. All of the
line formats defined here round-trip bit-exactly: parse(write(x)) == x and
write(parse(write(x))) == write(x).

Formats (one record per line, comma-separated, no header):

* packet trace:   ``timestamp_us,mac,seq,payload,channel``
                  (mac is lowercase colon-separated hex; seq is empty when the
                  capture had none)
* IMU ground truth:     ``timestamp_us,ax,ay,az``           (m/s^2, repr floats)
* audio-event markers:  ``timestamp_us,label,start|end``
* user path:            ``timestamp_us,x_m,y_m``
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import InputMismatchError

# Analysis defaults. The 100 ms aggregation window and the 50 ms duplicate
# horizon are protocol-level constants used across the whole pipeline.
WINDOW_US = 100_000
DEDUP_HORIZON_US = 50_000
IFRAME_FACTOR = 2.5
IFRAME_TRAIL = 10
IFRAME_MIN_WINDOWS = 20

_MAC_RE = re.compile(r"^([0-9a-fA-F]{2}[:-]){5}[0-9a-fA-F]{2}$")


def normalize_mac(mac: str) -> str:
    """Canonicalize a MAC address to lowercase colon-separated hex."""
    mac = mac.strip()
    if not _MAC_RE.match(mac):
        raise ValueError(f"not a MAC address: {mac!r}")
    return mac.replace("-", ":").lower()


@dataclass(frozen=True)
class PacketRecord:
    """One captured frame: when, from whom, how big."""

    timestamp_us: int
    mac: str
    seq: Optional[int]  # 802.11 sequence number, None when unavailable
    payload: int  # bytes
    channel: int

    def __post_init__(self) -> None:
        if self.timestamp_us < 0:
            raise ValueError("timestamp must be >= 0 (microseconds since trace start)")
        if self.payload < 0:
            raise ValueError("payload must be >= 0")


def _record_key(r: PacketRecord):
    return (r.timestamp_us, -1 if r.seq is None else r.seq, r.payload)


@dataclass
class DeviceTrace:
    """All packets seen from one transmitter, sorted by time."""

    mac: str
    records: list[PacketRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.mac = normalize_mac(self.mac)
        self.records = sorted(self.records, key=_record_key)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def span_us(self) -> int:
        """Microseconds from trace origin to just past the last packet."""
        return self.records[-1].timestamp_us + 1 if self.records else 0

    def total_bytes(self) -> int:
        return sum(r.payload for r in self.records)


@dataclass
class TimeSeries:
    """Fixed-width windowed totals: values[i] covers
    [start_us + i*window_us, start_us + (i+1)*window_us)."""

    start_us: int
    window_us: int
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def window_starts_us(self) -> np.ndarray:
        return self.start_us + self.window_us * np.arange(len(self), dtype=np.int64)


@dataclass(frozen=True)
class AudioEvent:
    """A labeled utterance (or other audio stimulus) interval."""

    label: str
    start_us: int
    end_us: int

    def __post_init__(self) -> None:
        if self.end_us < self.start_us:
            raise ValueError("event ends before it starts")
        if "," in self.label or "\n" in self.label:
            raise ValueError("event labels must not contain commas or newlines")


@dataclass
class GroundTruthTrace:
    """What the user verifiably did: worn-IMU samples and/or labeled audio
    events. ``kind`` is 'imu' when accelerometer samples are present,
    'audio-event' otherwise."""

    kind: str
    times_us: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    accel: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    events: list[AudioEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("imu", "audio-event"):
            raise ValueError(f"unknown ground-truth kind: {self.kind!r}")
        self.times_us = np.asarray(self.times_us, dtype=np.int64)
        self.accel = np.asarray(self.accel, dtype=np.float64)
        if self.accel.shape[0] != self.times_us.shape[0]:
            raise ValueError("accel and times length mismatch")
        if self.accel.size and self.accel.shape[1] != 3:
            raise ValueError("accel must have three axes")

    @property
    def sample_period_us(self) -> int:
        if len(self.times_us) < 2:
            return 20_000  # 50 Hz nominal
        return int(np.median(np.diff(self.times_us)))

    @property
    def span_us(self) -> int:
        span = 0
        if len(self.times_us):
            span = int(self.times_us[-1]) + self.sample_period_us
        if self.events:
            span = max(span, max(e.end_us for e in self.events))
        return span


@dataclass
class UserPath:
    """Dead-reckoned user positions (meters) over time."""

    times_us: np.ndarray
    xy: np.ndarray

    def __post_init__(self) -> None:
        self.times_us = np.asarray(self.times_us, dtype=np.int64)
        self.xy = np.asarray(self.xy, dtype=np.float64)
        if self.xy.shape != (self.times_us.shape[0], 2):
            raise ValueError("xy must be (N, 2) matching times")


# ---------------------------------------------------------------------------
# Stream operations
# ---------------------------------------------------------------------------


def deduplicate(trace: DeviceTrace, horizon_us: int = DEDUP_HORIZON_US) -> DeviceTrace:
    """Drop link-layer retransmissions: a record is dropped when any prior
    record within ``horizon_us`` carries the same (seq, payload). Records
    without a sequence number are always kept. Idempotent."""
    last_seen: dict[tuple[int, int], int] = {}
    kept: list[PacketRecord] = []
    for r in trace.records:
        if r.seq is None:
            kept.append(r)
            continue
        key = (r.seq, r.payload)
        prev = last_seen.get(key)
        if prev is None or r.timestamp_us - prev > horizon_us:
            kept.append(r)
        last_seen[key] = r.timestamp_us
    out = DeviceTrace(trace.mac, [])
    out.records = kept  # already sorted; skip re-sort
    return out


def windowize(
    trace: DeviceTrace,
    window_us: int = WINDOW_US,
    start_us: int = 0,
    span_us: Optional[int] = None,
) -> TimeSeries:
    """Sum payload bytes into fixed windows. Silent windows are explicit
    zeros; records outside [start_us, start_us + n*window_us) are ignored."""
    if window_us <= 0:
        raise ValueError("window must be positive")
    if span_us is None:
        span_us = max(0, trace.span_us - start_us)
    n = math.ceil(span_us / window_us) if span_us > 0 else 0
    values = np.zeros(n, dtype=np.float64)
    if n and trace.records:
        ts = np.fromiter((r.timestamp_us for r in trace.records), dtype=np.int64, count=len(trace.records))
        payload = np.fromiter((r.payload for r in trace.records), dtype=np.float64, count=len(trace.records))
        idx = (ts - start_us) // window_us
        ok = (ts >= start_us) & (idx < n)
        np.add.at(values, idx[ok].astype(np.int64), payload[ok])
    return TimeSeries(start_us, window_us, values)


def suppress_iframes(
    series: TimeSeries,
    factor: float = IFRAME_FACTOR,
    trail: int = IFRAME_TRAIL,
) -> TimeSeries:
    """Despike periodic keyframe bursts: any window exceeding ``factor`` times
    the trailing ``trail``-window mean is replaced by that mean. The trailing
    mean is taken over already-filtered values (causal, streamable); the first
    window is never replaced. Requires at least IFRAME_MIN_WINDOWS windows."""
    v = series.values
    if len(v) < IFRAME_MIN_WINDOWS:
        raise ValueError(
            f"need at least {IFRAME_MIN_WINDOWS} windows to estimate a keyframe baseline"
        )
    out = v.copy()
    for i in range(1, len(v)):
        lo = max(0, i - trail)
        mean = float(np.mean(out[lo:i]))
        # A zero trailing mean is silence, not a baseline; replacing the
        # first traffic after a quiet stretch with it would erase the series.
        if mean > 0.0 and v[i] > factor * mean:
            out[i] = mean
    return TimeSeries(series.start_us, series.window_us, out)


def resample_ground_truth(
    gt: GroundTruthTrace,
    window_us: int = WINDOW_US,
    start_us: int = 0,
    span_us: Optional[int] = None,
) -> tuple[list[TimeSeries], np.ndarray]:
    """Per-axis window means of the IMU stream, aligned with windowize().

    Empty windows carry the previous value forward and are flagged in the
    returned boolean array (a window before any sample carries 0.0).
    """
    if gt.kind != "imu" or not len(gt.times_us):
        raise ValueError("IMU samples required for resampling")
    if span_us is None:
        span_us = max(0, gt.span_us - start_us)
    n = math.ceil(span_us / window_us) if span_us > 0 else 0
    idx = (gt.times_us - start_us) // window_us
    ok = (gt.times_us >= start_us) & (idx < n)
    idx = idx[ok].astype(np.int64)
    counts = np.bincount(idx, minlength=n).astype(np.float64)
    interpolated = counts == 0
    series: list[TimeSeries] = []
    for axis in range(3):
        sums = np.bincount(idx, weights=gt.accel[ok, axis], minlength=n)
        means = np.zeros(n, dtype=np.float64)
        np.divide(sums, counts, out=means, where=counts > 0)
        # Carry the previous value into empty windows.
        prev = 0.0
        for i in range(n):
            if interpolated[i]:
                means[i] = prev
            else:
                prev = means[i]
        series.append(TimeSeries(start_us, window_us, means))
    return series, interpolated


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def packet_line(r: PacketRecord) -> str:
    seq = "" if r.seq is None else str(r.seq)
    return f"{r.timestamp_us},{r.mac},{seq},{r.payload},{r.channel}"


def write_packets(path: str, records: Iterable[PacketRecord]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for r in records:
            fh.write(packet_line(r) + "\n")


def parse_packet_line(line: str, lineno: int = 0) -> PacketRecord:
    parts = line.split(",")
    if len(parts) != 5:
        raise InputMismatchError(f"line {lineno}: expected 5 packet fields, got {len(parts)}")
    try:
        seq = None if parts[2] == "" else int(parts[2])
        return PacketRecord(
            timestamp_us=int(parts[0]),
            mac=normalize_mac(parts[1]),
            seq=seq,
            payload=int(parts[3]),
            channel=int(parts[4]),
        )
    except ValueError as exc:
        raise InputMismatchError(f"line {lineno}: {exc}") from exc


def read_packets(path: str) -> list[PacketRecord]:
    records: list[PacketRecord] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            records.append(parse_packet_line(line, lineno))
    return records


def group_by_mac(records: Iterable[PacketRecord]) -> dict[str, DeviceTrace]:
    buckets: dict[str, list[PacketRecord]] = {}
    for r in records:
        buckets.setdefault(r.mac, []).append(r)
    return {mac: DeviceTrace(mac, recs) for mac, recs in sorted(buckets.items())}


def write_ground_truth(path: str, gt: GroundTruthTrace) -> None:
    lines: list[tuple[int, int, str]] = []
    for t, (ax, ay, az) in zip(gt.times_us, gt.accel):
        lines.append((int(t), 0, f"{int(t)},{float(ax)!r},{float(ay)!r},{float(az)!r}"))
    for e in gt.events:
        lines.append((e.start_us, 1, f"{e.start_us},{e.label},start"))
        lines.append((e.end_us, 2, f"{e.end_us},{e.label},end"))
    lines.sort(key=lambda item: (item[0], item[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for _, _, line in lines:
            fh.write(line + "\n")


def read_ground_truth(path: str) -> GroundTruthTrace:
    times: list[int] = []
    accel: list[tuple[float, float, float]] = []
    open_events: dict[str, list[int]] = {}
    events: list[AudioEvent] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                if len(parts) == 4:
                    times.append(int(parts[0]))
                    accel.append((float(parts[1]), float(parts[2]), float(parts[3])))
                elif len(parts) == 3 and parts[2] in ("start", "end"):
                    t, label, marker = int(parts[0]), parts[1], parts[2]
                    if marker == "start":
                        open_events.setdefault(label, []).append(t)
                    else:
                        starts = open_events.get(label)
                        if not starts:
                            raise InputMismatchError(
                                f"line {lineno}: end marker without start for {label!r}"
                            )
                        events.append(AudioEvent(label, starts.pop(0), t))
                else:
                    raise InputMismatchError(
                        f"line {lineno}: not an IMU sample or event marker"
                    )
            except ValueError as exc:
                raise InputMismatchError(f"line {lineno}: {exc}") from exc
    if any(open_events.values()):
        label = next(lbl for lbl, st in open_events.items() if st)
        raise InputMismatchError(f"unterminated audio event {label!r}")
    events.sort(key=lambda e: e.start_us)
    kind = "imu" if times else "audio-event"
    return GroundTruthTrace(
        kind=kind,
        times_us=np.array(times, dtype=np.int64),
        accel=np.array(accel, dtype=np.float64).reshape(len(accel), 3),
        events=events,
    )


def write_userpath(path: str, up: UserPath) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for t, (x, y) in zip(up.times_us, up.xy):
            fh.write(f"{int(t)},{float(x)!r},{float(y)!r}\n")


def read_userpath(path: str) -> UserPath:
    times: list[int] = []
    xy: list[tuple[float, float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise InputMismatchError(f"line {lineno}: expected 3 path fields")
            try:
                times.append(int(parts[0]))
                xy.append((float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise InputMismatchError(f"line {lineno}: {exc}") from exc
    return UserPath(np.array(times, dtype=np.int64), np.array(xy, dtype=np.float64).reshape(len(xy), 2))
