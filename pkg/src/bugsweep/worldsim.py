"""Deterministic indoor scenario simulator.

Builds synthetic evidence — per-device packet traces, an IMU ground-truth
stream, and the user's walked path — from a declarative scenario: a room
polygon, sensor placements, innocuous household devices, and a timed activity
script. Everything is driven by one seed through independent spawned
substreams, so a scenario renders bit-identically on every run.

Traffic models (all timings in microseconds):

* ``camera``   — streams frames at a fixed rate; frame size is a base plus a
  periodic keyframe boost plus a term proportional to the *visual* intensity
  the camera senses (field of view, range falloff, body occlusion for
  directional stimuli), plus optional noise. Frames are packetized at the MTU.
* ``rf``       — an omnidirectional presence monitor reporting at a fixed
  rate; payload grows with sensed *motion* intensity.
* ``motion``   — fires a small packet burst when motion appears in its cone,
  then stays quiet for a re-arm timeout; optionally chirps periodic status
  packets.
* ``audio``    — keepalive pings, a packet burst after each utterance loud
  enough to reach it, and optional sustained "listen-in" streams.
* innocuous    — ``router`` (fixed-rate), ``smart-light`` (periodic ping),
  ``phone``/``laptop`` (sporadic bursts), ``foreign-camera`` (a camera that
  never sees the user).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import Point, dist, point_in_polygon, polygon_is_simple
from .trace import (
    AudioEvent,
    DeviceTrace,
    GroundTruthTrace,
    PacketRecord,
    UserPath,
    deduplicate,
    normalize_mac,
)

TICK_HZ = 50
TICK_US = 1_000_000 // TICK_HZ
PATH_HZ = 10
WALK_SPEED_MPS = 1.0
MTU_BYTES = 1400
SEQ_MOD = 4096
RETRANSMIT_P = 0.02
PATH_SIGMA_M = 0.15

# action -> (motion intensity, visual intensity, IMU oscillation amplitude,
#            IMU mean shift, oscillation frequency Hz, directional?)
_ACTIONS: dict[str, tuple[float, float, float, float, float, bool]] = {
    "still": (0.0, 0.0, 0.0, 0.0, 0.0, False),
    "walk": (1.0, 1.0, 1.2, 0.5, 1.8, False),
    "jumping-jacks": (2.0, 2.0, 3.0, 1.1, 2.4, False),
    "hand-wave": (1.2, 1.6, 1.0, 0.35, 2.0, True),
    "laptop-flash": (0.0, 1.5, 0.03, 0.0, 1.3, True),
    "speak": (0.05, 0.05, 0.08, 0.03, 1.0, False),
}
# The motion level a PIR-style sensor actually triggers on.
MOTION_TRIGGER_LEVEL = 0.9

SENSOR_KINDS = ("camera", "rf", "motion", "audio")
INNOCUOUS_KINDS = ("router", "smart-light", "phone", "laptop", "foreign-camera")

AUDIO_VOLUME_RADII_M = {"loud": 5.0, "normal": 3.0, "quiet": 1.8, "whisper": 0.9}

_SENSOR_DEFAULTS: dict[str, dict] = {
    # Activity gains are sized so a sustained activity plateau stays below
    # the 2.5x despiking ratio (max visual intensity 2.0 at zero range):
    # otherwise the keyframe filter would flatten the very signal the
    # causality test needs.
    "camera": {
        "fov_deg": 80.0,
        "range_m": 3.0,
        "fps": 10,
        "base_frame_bytes": 1000,
        "keyframe_every": 10,
        "keyframe_mult": 6.0,
        "frame_gain_bytes": 600.0,
        "noise_bytes": 150.0,
        "latency_windows": 2,
    },
    "rf": {
        "fov_deg": 120.0,
        "range_m": 4.0,
        "rate_hz": 10,
        "base_bytes": 120,
        "gain_bytes": 90.0,
        "noise_bytes": 6.0,
        "latency_windows": 1,
    },
    "motion": {
        "fov_deg": 100.0,
        "range_m": 4.6,
        "timeout_s": 60.0,
        "burst_packets": 5,
        "burst_bytes": 180,
        "status_period_s": None,
        "status_bytes": 80,
    },
    "audio": {
        "wake_phrase": "wake",
        "keepalive_period_s": 10.0,
        "keepalive_bytes": 90,
        "wake_packets": 12,
        "wake_bytes": 400,
        "dropins": [],  # list of [start_s, duration_s]
        "dropin_rate_hz": 20,
        "dropin_bytes": 500,
    },
}


@dataclass
class ScriptStep:
    """One timed user action. ``duration_s`` may be omitted for ``move-to``
    (derived from walking speed) and for ``speak`` (defaults to 1.2 s)."""

    at_s: float
    action: str
    duration_s: float = 0.0
    target: Optional[Point] = None
    label: str = "wake"
    volume: str = "normal"
    heading_deg: Optional[float] = None


@dataclass
class SensorPlacement:
    """A hidden sensor: kind, MAC, pose, and model parameter overrides."""

    kind: str
    mac: str
    position: Point
    heading_deg: float = 0.0
    params: dict = field(default_factory=dict)

    def model(self) -> dict:
        merged = dict(_SENSOR_DEFAULTS[self.kind])
        merged.update(self.params)
        return merged


@dataclass
class InnocuousDevice:
    """A benign transmitter sharing the channel."""

    kind: str
    mac: str
    params: dict = field(default_factory=dict)


@dataclass
class CountermeasureConfig:
    """One per-device traffic transform to apply after generation."""

    mac: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.mac = normalize_mac(self.mac)


@dataclass
class Scenario:
    room: list[Point]
    duration_s: float
    user_start: Point
    seed: int = 0
    noise_scale: float = 1.0
    sensors: list[SensorPlacement] = field(default_factory=list)
    innocuous: list[InnocuousDevice] = field(default_factory=list)
    script: list[ScriptStep] = field(default_factory=list)
    countermeasures: list[CountermeasureConfig] = field(default_factory=list)


@dataclass
class SimulationResult:
    traces: dict[str, DeviceTrace]
    ground_truth: GroundTruthTrace
    path: UserPath


def validate_scenario(sc: Scenario) -> None:
    """Raise ConfigError on anything the simulator cannot honor."""
    if not polygon_is_simple(sc.room):
        raise ConfigError("room must be a simple polygon with positive area")
    if sc.duration_s <= 0:
        raise ConfigError("duration_s must be positive")
    if sc.noise_scale < 0:
        raise ConfigError("noise_scale must be >= 0")
    if not point_in_polygon(tuple(sc.user_start), sc.room):
        raise ConfigError(f"user_start {sc.user_start} outside the room")
    macs = set()
    for dev in list(sc.sensors) + list(sc.innocuous):
        mac = normalize_mac(dev.mac)
        if mac in macs:
            raise ConfigError(f"duplicate device mac {mac}")
        macs.add(mac)
    for s in sc.sensors:
        if s.kind not in SENSOR_KINDS:
            raise ConfigError(f"unknown sensor kind {s.kind!r}")
        if not point_in_polygon(tuple(s.position), sc.room):
            raise ConfigError(f"sensor {s.mac} at {s.position} outside the room")
    for d in sc.innocuous:
        if d.kind not in INNOCUOUS_KINDS:
            raise ConfigError(f"unknown innocuous device kind {d.kind!r}")
    last_end = 0.0
    for step in sc.script:
        if step.action not in _ACTIONS and step.action not in ("move-to", "leave-room"):
            raise ConfigError(f"unknown script action {step.action!r}")
        if step.at_s < 0 or step.at_s < last_end - 1e-9:
            raise ConfigError(
                f"script step at t={step.at_s}s overlaps the previous step"
            )
        if step.action == "move-to":
            if step.target is None:
                raise ConfigError("move-to requires a target")
            if not point_in_polygon(tuple(step.target), sc.room):
                raise ConfigError(f"move-to target {step.target} outside the room")
        if step.action == "speak" and step.volume not in AUDIO_VOLUME_RADII_M:
            raise ConfigError(f"unknown volume {step.volume!r}")
        if step.action == "leave-room" and step.duration_s < 8.0:
            raise ConfigError("leave-room needs at least 8 s")
        last_end = step.at_s + _step_duration(step)
    if last_end > sc.duration_s + 1e-9:
        raise ConfigError("script runs past the scenario duration")
    for cm in sc.countermeasures:
        if cm.kind not in COUNTERMEASURE_KINDS:
            raise ConfigError(f"unknown countermeasure {cm.kind!r}")
        if cm.mac not in macs:
            raise ConfigError(f"countermeasure for undeclared device {cm.mac}")


def _step_duration(step: ScriptStep) -> float:
    if step.duration_s > 0:
        return step.duration_s
    if step.action == "speak":
        return 1.2
    return 0.0  # move-to: resolved during compilation from walking distance


# ---------------------------------------------------------------------------
# Script compilation: per-tick user state
# ---------------------------------------------------------------------------


@dataclass
class _Timeline:
    n_ticks: int
    pos: np.ndarray  # (n, 2)
    away: np.ndarray  # (n,) bool: outside the room
    motion_i: np.ndarray
    visual_i: np.ndarray
    amp: np.ndarray
    bias: np.ndarray
    freq: np.ndarray
    directional: np.ndarray  # bool
    stim_heading: np.ndarray  # degrees; meaningful where directional
    events: list[AudioEvent]
    event_volumes: list[str]
    excursions: list[tuple[int, int]]  # leave-room tick ranges


def _room_centroid(room: Sequence[Point]) -> Point:
    xs = [p[0] for p in room]
    ys = [p[1] for p in room]
    return (sum(xs) / len(xs), sum(ys) / len(ys))


def _nearest_boundary(room: Sequence[Point], p: Point) -> Point:
    """Closest point on the room boundary to p."""
    best, best_d = None, math.inf
    n = len(room)
    for i in range(n):
        a, b = room[i], room[(i + 1) % n]
        ax, ay = a
        bx, by = b
        vx, vy = bx - ax, by - ay
        denom = vx * vx + vy * vy
        t = 0.0 if denom == 0 else max(0.0, min(1.0, ((p[0] - ax) * vx + (p[1] - ay) * vy) / denom))
        q = (ax + t * vx, ay + t * vy)
        d = dist(p, q)
        if d < best_d:
            best, best_d = q, d
    assert best is not None
    return best


def _fill_action(
    tl: _Timeline, lo: int, hi: int, action: str, heading: Optional[float]
) -> None:
    hi = min(hi, tl.n_ticks)
    if hi <= lo:
        return
    mi, vi, amp, bias, freq, directional = _ACTIONS[action]
    tl.motion_i[lo:hi] = mi
    tl.visual_i[lo:hi] = vi
    tl.amp[lo:hi] = amp
    tl.bias[lo:hi] = bias
    tl.freq[lo:hi] = freq
    tl.directional[lo:hi] = directional
    if directional:
        tl.stim_heading[lo:hi] = 0.0 if heading is None else heading


def _fill_walk(tl: _Timeline, lo: int, hi: int, src: Point, dst: Point) -> None:
    hi = min(hi, tl.n_ticks)
    if hi <= lo:
        return
    frac = np.linspace(0.0, 1.0, hi - lo, endpoint=False) + 0.5 / max(hi - lo, 1)
    tl.pos[lo:hi, 0] = src[0] + frac * (dst[0] - src[0])
    tl.pos[lo:hi, 1] = src[1] + frac * (dst[1] - src[1])
    _fill_action(tl, lo, hi, "walk", None)


def _compile(sc: Scenario) -> _Timeline:
    n = int(round(sc.duration_s * TICK_HZ))
    tl = _Timeline(
        n_ticks=n,
        pos=np.empty((n, 2)),
        away=np.zeros(n, dtype=bool),
        motion_i=np.zeros(n),
        visual_i=np.zeros(n),
        amp=np.zeros(n),
        bias=np.zeros(n),
        freq=np.zeros(n),
        directional=np.zeros(n, dtype=bool),
        stim_heading=np.zeros(n),
        events=[],
        event_volumes=[],
        excursions=[],
    )
    cur = tuple(sc.user_start)
    cursor = 0
    default_heading = None  # falls back to facing the room centroid
    for step in sorted(sc.script, key=lambda s: s.at_s):
        s_tick = int(round(step.at_s * TICK_HZ))
        s_tick = max(s_tick, cursor)
        if s_tick > cursor:
            tl.pos[cursor:s_tick] = cur
            _fill_action(tl, cursor, s_tick, "still", None)
        if step.action == "move-to":
            assert step.target is not None
            target = tuple(step.target)
            dur = step.duration_s or dist(cur, target) / WALK_SPEED_MPS
            e_tick = s_tick + max(1, int(round(dur * TICK_HZ)))
            _fill_walk(tl, s_tick, e_tick, cur, target)
            if dist(cur, target) > 1e-9:
                default_heading = math.degrees(
                    math.atan2(target[1] - cur[1], target[0] - cur[0])
                )
            cur = target
        elif step.action == "leave-room":
            exit_pt = _nearest_boundary(sc.room, cur)
            if dist(cur, exit_pt) < 1e-6:
                out_dir = math.atan2(
                    exit_pt[1] - _room_centroid(sc.room)[1],
                    exit_pt[0] - _room_centroid(sc.room)[0],
                )
            else:
                out_dir = math.atan2(exit_pt[1] - cur[1], exit_pt[0] - cur[0])
            out_pt = (
                exit_pt[0] + 2.0 * math.cos(out_dir),
                exit_pt[1] + 2.0 * math.sin(out_dir),
            )
            leg = dist(cur, out_pt) / WALK_SPEED_MPS
            away_dur = max(step.duration_s - 2.0 * leg, 1.0)
            t1 = s_tick + max(1, int(round(leg * TICK_HZ)))
            t2 = t1 + int(round(away_dur * TICK_HZ))
            e_tick = t2 + max(1, int(round(leg * TICK_HZ)))
            _fill_walk(tl, s_tick, t1, cur, out_pt)
            tl.pos[t1:t2] = out_pt
            _fill_action(tl, t1, t2, "still", None)
            _fill_walk(tl, t2, e_tick, out_pt, cur)
            tl.excursions.append((s_tick, min(e_tick, n)))
        else:
            dur = _step_duration(step) or step.duration_s
            e_tick = s_tick + max(1, int(round(dur * TICK_HZ)))
            heading = step.heading_deg
            if heading is None:
                if default_heading is not None:
                    heading = default_heading
                else:
                    c = _room_centroid(sc.room)
                    heading = math.degrees(math.atan2(c[1] - cur[1], c[0] - cur[0]))
            tl.pos[s_tick:e_tick] = cur
            _fill_action(tl, s_tick, e_tick, step.action, heading)
            if step.action == "speak":
                start_us = s_tick * TICK_US
                end_us = min(e_tick, n) * TICK_US
                tl.events.append(AudioEvent(step.label, start_us, end_us))
                tl.event_volumes.append(step.volume)
        cursor = min(e_tick, n)
    if cursor < n:
        tl.pos[cursor:] = cur
        _fill_action(tl, cursor, n, "still", None)
    # Away = actually outside the room. Only leave-room excursions can exit,
    # so only those ticks need the polygon test.
    for lo, hi in tl.excursions:
        for i in range(lo, hi):
            if not point_in_polygon((float(tl.pos[i, 0]), float(tl.pos[i, 1])), sc.room):
                tl.away[i] = True
    return tl


# ---------------------------------------------------------------------------
# Evidence synthesis
# ---------------------------------------------------------------------------


def _imu(tl: _Timeline, rng: np.random.Generator, noise_scale: float) -> GroundTruthTrace:
    t = np.arange(tl.n_ticks) / TICK_HZ
    osc = 2.0 * math.pi * tl.freq * t
    accel = np.empty((tl.n_ticks, 3))
    accel[:, 0] = tl.bias * 1.0 + tl.amp * 0.8 * np.sin(osc)
    accel[:, 1] = tl.bias * 0.6 + tl.amp * 0.5 * np.sin(osc + 1.3)
    accel[:, 2] = tl.bias * 0.3 + tl.amp * 0.35 * np.sin(osc + 2.2)
    if noise_scale > 0:
        accel += rng.normal(0.0, 0.02 * noise_scale, size=accel.shape)
    times = np.arange(tl.n_ticks, dtype=np.int64) * TICK_US
    return GroundTruthTrace("imu", times, accel, events=sorted(tl.events, key=lambda e: e.start_us))


def _path(tl: _Timeline, rng: np.random.Generator, noise_scale: float) -> UserPath:
    stride = TICK_HZ // PATH_HZ
    xy = tl.pos[::stride].copy()
    if noise_scale > 0:
        xy += rng.normal(0.0, PATH_SIGMA_M * noise_scale, size=xy.shape)
    times = (np.arange(len(xy), dtype=np.int64) * (1_000_000 // PATH_HZ))
    return UserPath(times, xy)


@dataclass
class _Sensed:
    """Per-tick view of the user from one sensor's pose."""

    covered: np.ndarray  # bool: in cone/range, inside room, not occluded
    atten: np.ndarray  # range falloff in [0, 1]
    motion: np.ndarray  # sensed motion intensity
    visual: np.ndarray  # sensed visual intensity


def _sense(sensor: SensorPlacement, tl: _Timeline, fov_deg: float, range_m: float) -> _Sensed:
    sx, sy = sensor.position
    dx = tl.pos[:, 0] - sx
    dy = tl.pos[:, 1] - sy
    d = np.hypot(dx, dy)
    in_range = d <= range_m
    if fov_deg >= 360.0:
        in_fov = np.ones(tl.n_ticks, dtype=bool)
    else:
        ang = np.degrees(np.arctan2(dy, dx)) % 360.0
        diff = np.abs(((ang - sensor.heading_deg + 180.0) % 360.0) - 180.0)
        in_fov = (diff <= fov_deg / 2.0) | (d <= 1e-9)
    # Directional stimuli are occluded by the user's body for sensors more
    # than 90 degrees off the stimulus heading.
    ang_back = np.degrees(np.arctan2(-dy, -dx)) % 360.0
    dir_diff = np.abs(((tl.stim_heading - ang_back + 180.0) % 360.0) - 180.0)
    dir_ok = ~tl.directional | (dir_diff <= 90.0)
    covered = in_range & in_fov & ~tl.away & dir_ok
    atten = np.clip(1.0 - d / range_m, 0.0, 1.0) * covered
    return _Sensed(covered, atten, tl.motion_i * atten, tl.visual_i * atten)


def _packetize(
    records: list[PacketRecord],
    mac: str,
    t_us: int,
    nbytes: int,
    seq: int,
    channel: int,
) -> int:
    """Split nbytes into MTU-sized packets appended to records; returns the
    next sequence number."""
    left = int(nbytes)
    i = 0
    while left > 0:
        take = min(left, MTU_BYTES)
        records.append(PacketRecord(t_us + i * 800, mac, seq, take, channel))
        seq = (seq + 1) % SEQ_MOD
        left -= take
        i += 1
    return seq


def _with_retransmits(
    records: list[PacketRecord], rng: np.random.Generator, noise_scale: float
) -> list[PacketRecord]:
    if noise_scale <= 0 or not records:
        return records
    dup_mask = rng.random(len(records)) < RETRANSMIT_P
    dups = [
        PacketRecord(
            r.timestamp_us + int(rng.integers(1_000, 45_000)),
            r.mac,
            r.seq,
            r.payload,
            r.channel,
        )
        for r, m in zip(records, dup_mask)
        if m and r.seq is not None
    ]
    return records + dups


def _camera_trace(
    mac: str,
    model: dict,
    sensed_visual: np.ndarray,
    n_ticks: int,
    rng: np.random.Generator,
    noise_scale: float,
    channel: int = 6,
) -> DeviceTrace:
    fps = int(model["fps"])
    frame_ticks = TICK_HZ // fps
    n_frames = n_ticks // frame_ticks
    lat_ticks = int(model["latency_windows"]) * (TICK_HZ // 10)
    idx = np.maximum(np.arange(n_frames) * frame_ticks - lat_ticks, 0)
    s = sensed_visual[idx]
    sizes = np.full(n_frames, float(model["base_frame_bytes"]))
    sizes[:: int(model["keyframe_every"])] *= float(model["keyframe_mult"])
    sizes = sizes + float(model["frame_gain_bytes"]) * s
    sigma = float(model["noise_bytes"]) * noise_scale
    if sigma > 0:
        sizes = sizes + rng.normal(0.0, sigma, size=n_frames)
    sizes = np.maximum(np.round(sizes), 60).astype(np.int64)
    records: list[PacketRecord] = []
    seq = 0
    frame_us = 1_000_000 // fps
    for k in range(n_frames):
        seq = _packetize(records, mac, k * frame_us, int(sizes[k]), seq, channel)
    return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))


def _rf_trace(
    mac: str,
    model: dict,
    sensed_motion: np.ndarray,
    n_ticks: int,
    rng: np.random.Generator,
    noise_scale: float,
    channel: int = 11,
) -> DeviceTrace:
    rate = int(model["rate_hz"])
    stride = TICK_HZ // rate
    n_rep = n_ticks // stride
    lat_ticks = int(model["latency_windows"]) * (TICK_HZ // 10)
    idx = np.maximum(np.arange(n_rep) * stride - lat_ticks, 0)
    s = sensed_motion[idx]
    sizes = float(model["base_bytes"]) + float(model["gain_bytes"]) * s
    sigma = float(model["noise_bytes"]) * noise_scale
    if sigma > 0:
        sizes = sizes + rng.normal(0.0, sigma, size=n_rep)
    sizes = np.maximum(np.round(sizes), 40).astype(np.int64)
    rep_us = 1_000_000 // rate
    records: list[PacketRecord] = []
    seq = 0
    for k in range(n_rep):
        seq = _packetize(records, mac, k * rep_us, int(sizes[k]), seq, channel)
    return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))


def _motion_trace(
    mac: str,
    model: dict,
    sensed: _Sensed,
    motion_i: np.ndarray,
    n_ticks: int,
    rng: np.random.Generator,
    noise_scale: float,
    channel: int = 1,
) -> DeviceTrace:
    triggering = sensed.covered & (motion_i >= MOTION_TRIGGER_LEVEL)
    records: list[PacketRecord] = []
    seq = 0
    timeout_ticks = int(round(float(model["timeout_s"]) * TICK_HZ))
    t = 0
    while t < n_ticks:
        if triggering[t]:
            t_us = t * TICK_US
            for i in range(int(model["burst_packets"])):
                records.append(
                    PacketRecord(t_us + i * 60_000, mac, seq, int(model["burst_bytes"]), channel)
                )
                seq = (seq + 1) % SEQ_MOD
            t += timeout_ticks
        else:
            t += 1
    period = model.get("status_period_s")
    if period:
        p_ticks = int(round(float(period) * TICK_HZ))
        for t in range(p_ticks, n_ticks, p_ticks):
            records.append(
                PacketRecord(t * TICK_US, mac, seq, int(model["status_bytes"]), channel)
            )
            seq = (seq + 1) % SEQ_MOD
    return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))


def _audio_trace(
    mac: str,
    model: dict,
    sensor: SensorPlacement,
    tl: _Timeline,
    rng: np.random.Generator,
    noise_scale: float,
    channel: int = 6,
) -> DeviceTrace:
    records: list[PacketRecord] = []
    seq = 0
    duration_us = tl.n_ticks * TICK_US
    period_us = int(float(model["keepalive_period_s"]) * 1e6)
    for t_us in range(period_us, duration_us, period_us):
        records.append(PacketRecord(t_us, mac, seq, int(model["keepalive_bytes"]), channel))
        seq = (seq + 1) % SEQ_MOD
    for ev, volume in zip(tl.events, tl.event_volumes):
        if ev.label != str(model["wake_phrase"]):
            continue  # assistants only answer their own wake phrase
        tick = min(ev.start_us // TICK_US, tl.n_ticks - 1)
        here = (float(tl.pos[tick, 0]), float(tl.pos[tick, 1]))
        if dist(here, tuple(sensor.position)) <= AUDIO_VOLUME_RADII_M[volume]:
            n_pkt = int(model["wake_packets"])
            gap = 1_500_000 // max(n_pkt, 1)
            for i in range(n_pkt):
                records.append(
                    PacketRecord(
                        ev.start_us + 300_000 + i * gap, mac, seq, int(model["wake_bytes"]), channel
                    )
                )
                seq = (seq + 1) % SEQ_MOD
    for start_s, dur_s in model.get("dropins", []):
        rate = int(model["dropin_rate_hz"])
        step_us = 1_000_000 // rate
        t0 = int(float(start_s) * 1e6)
        for t_us in range(t0, min(t0 + int(float(dur_s) * 1e6), duration_us), step_us):
            records.append(PacketRecord(t_us, mac, seq, int(model["dropin_bytes"]), channel))
            seq = (seq + 1) % SEQ_MOD
    return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))


def _innocuous_trace(
    dev: InnocuousDevice,
    duration_s: float,
    rng: np.random.Generator,
    noise_scale: float,
) -> DeviceTrace:
    mac = dev.mac
    duration_us = int(duration_s * 1e6)
    records: list[PacketRecord] = []
    seq = 0
    if dev.kind == "router":
        period_us = int(dev.params.get("period_us", 20_000))
        payload = int(dev.params.get("payload", 1000))
        for t_us in range(0, duration_us, period_us):
            records.append(PacketRecord(t_us, mac, seq, payload, 6))
            seq = (seq + 1) % SEQ_MOD
        return DeviceTrace(mac, records)  # deterministic: no retransmits
    if dev.kind == "smart-light":
        period_us = int(float(dev.params.get("period_s", 10.0)) * 1e6)
        for t_us in range(period_us, duration_us, period_us):
            for i in range(2):
                records.append(PacketRecord(t_us + i * 30_000, mac, seq, 120, 11))
                seq = (seq + 1) % SEQ_MOD
        return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))
    if dev.kind in ("phone", "laptop"):
        mean_gap = 20.0 if dev.kind == "phone" else 25.0
        lo_p, hi_p = (3, 8) if dev.kind == "phone" else (5, 15)
        lo_b, hi_b = (300, 800) if dev.kind == "phone" else (200, 1200)
        t = rng.exponential(mean_gap)
        while t * 1e6 < duration_us:
            t_us = int(t * 1e6)
            for i in range(int(rng.integers(lo_p, hi_p + 1))):
                records.append(
                    PacketRecord(
                        t_us + i * 20_000, mac, seq, int(rng.integers(lo_b, hi_b + 1)), 6
                    )
                )
                seq = (seq + 1) % SEQ_MOD
            t += rng.exponential(mean_gap)
        return DeviceTrace(mac, _with_retransmits(records, rng, noise_scale))
    if dev.kind == "foreign-camera":
        # Watches a scene in another room: constant frames plus keyframes.
        # Scene motion (someone else walking around over there) enters through
        # the encoder's rate-control deadband: contributions smaller than one
        # quantum never change a frame's size, so a distant mover leaves the
        # schedule untouched.
        model = dict(_SENSOR_DEFAULTS["camera"])
        model.update(dev.params)
        fps = int(model["fps"])
        frame_us = 1_000_000 // fps
        n_frames = duration_us // frame_us
        deadband = int(dev.params.get("deadband_bytes", 64))
        mover_gain = float(dev.params.get("mover_gain_bytes", 0.0))
        extra = np.zeros(max(n_frames, 1))
        if mover_gain > 0.0:
            walk = np.cumsum(rng.normal(0.0, 1.0, max(n_frames, 1)))
            walk -= walk.min()
            if walk.max() > 0.0:
                walk /= walk.max()
            extra = mover_gain * walk
        for k in range(n_frames):
            size = int(model["base_frame_bytes"])
            if k % int(model["keyframe_every"]) == 0:
                size = int(size * float(model["keyframe_mult"]))
            size += int(extra[k] // deadband) * deadband
            seq = _packetize(records, mac, k * frame_us, size, seq, 6)
        return DeviceTrace(mac, records)
    raise ConfigError(f"unknown innocuous device kind {dev.kind!r}")


def generate(sc: Scenario) -> SimulationResult:
    """Render a scenario into per-device packet traces, the IMU ground truth
    (with any utterance events), and the user's path. Bit-identical for a
    given scenario."""
    validate_scenario(sc)
    tl = _compile(sc)
    streams = np.random.SeedSequence(sc.seed).spawn(2 + len(sc.sensors) + len(sc.innocuous))
    imu_rng = np.random.Generator(np.random.PCG64(streams[0]))
    path_rng = np.random.Generator(np.random.PCG64(streams[1]))
    gt = _imu(tl, imu_rng, sc.noise_scale)
    path = _path(tl, path_rng, sc.noise_scale)
    traces: dict[str, DeviceTrace] = {}
    for i, sensor in enumerate(sc.sensors):
        rng = np.random.Generator(np.random.PCG64(streams[2 + i]))
        model = sensor.model()
        if sensor.kind == "camera":
            sensed = _sense(sensor, tl, float(model["fov_deg"]), float(model["range_m"]))
            trace = _camera_trace(sensor.mac, model, sensed.visual, tl.n_ticks, rng, sc.noise_scale)
        elif sensor.kind == "rf":
            sensed = _sense(sensor, tl, float(model["fov_deg"]), float(model["range_m"]))
            trace = _rf_trace(sensor.mac, model, sensed.motion, tl.n_ticks, rng, sc.noise_scale)
        elif sensor.kind == "motion":
            sensed = _sense(sensor, tl, float(model["fov_deg"]), float(model["range_m"]))
            trace = _motion_trace(
                sensor.mac, model, sensed, tl.motion_i, tl.n_ticks, rng, sc.noise_scale
            )
        else:
            trace = _audio_trace(sensor.mac, model, sensor, tl, rng, sc.noise_scale)
        traces[trace.mac] = trace
    for j, dev in enumerate(sc.innocuous):
        rng = np.random.Generator(np.random.PCG64(streams[2 + len(sc.sensors) + j]))
        trace = _innocuous_trace(dev, sc.duration_s, rng, sc.noise_scale)
        traces[trace.mac] = trace
    return SimulationResult(traces, gt, path)


def coverage_oracle(
    sensor: SensorPlacement, point: Point, volume_level: Optional[str] = None
) -> bool:
    """Ground truth: can this sensor observe activity at ``point``? Audio
    coverage depends on how loudly the activity speaks."""
    model = sensor.model()
    if sensor.kind == "audio":
        level = volume_level or "normal"
        return dist(tuple(sensor.position), point) <= AUDIO_VOLUME_RADII_M[level]
    from .geometry import sector_contains

    return sector_contains(
        tuple(sensor.position),
        sensor.heading_deg,
        float(model["fov_deg"]),
        float(model["range_m"]),
        point,
    )


def sensor_defaults(kind: str) -> dict:
    """A copy of the stock traffic-model parameters for a sensor kind."""
    if kind not in _SENSOR_DEFAULTS:
        raise ConfigError(f"unknown sensor kind {kind!r}")
    return dict(_SENSOR_DEFAULTS[kind])


def action_intensity(action: str) -> tuple[float, float]:
    """(motion, visual) intensity of a scripted user action."""
    if action not in _ACTIONS:
        raise ConfigError(f"unknown script action {action!r}")
    spec = _ACTIONS[action]
    return (spec[0], spec[1])


# ---------------------------------------------------------------------------
# Transmission-shaping countermeasures
# ---------------------------------------------------------------------------

COUNTERMEASURE_KINDS = ("padding", "noise", "resolution", "tape-delay")


def apply_countermeasure(
    trace: DeviceTrace,
    kind: str,
    params: Optional[dict] = None,
    seed: int = 0,
) -> DeviceTrace:
    """Return a new trace as an evasion-capable device would have sent it.

    * ``padding``     — dummy packets raise every 100 ms window to the
      largest deduplicated window total over the run (a constant-rate
      envelope).
    * ``noise``       — chaff bursts at random times (no sequence numbers).
    * ``resolution``  — payloads rescale by a factor that switches every
      5–15 s (quality shifting).
    * ``tape-delay``  — everything is transmitted ``delay_s`` later.
    """
    params = params or {}
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    recs = trace.records
    if kind == "padding":
        if not recs:
            return DeviceTrace(trace.mac, [])
        window_us = int(params.get("window_us", 100_000))
        n_win = trace.span_us // window_us + 1
        totals = np.zeros(n_win, dtype=np.int64)
        # Size the envelope on deduplicated traffic: the shaper runs above the
        # link layer, so retransmit copies must not inflate the target rate.
        for r in deduplicate(trace).records:
            totals[r.timestamp_us // window_us] += r.payload
        channel = recs[0].channel
        out = list(recs)
        envelope = int(totals.max())
        for w in range(n_win):
            short = envelope - int(totals[w])
            t_us = w * window_us
            while short > 0:
                chunk = min(short, MTU_BYTES)
                out.append(PacketRecord(t_us, trace.mac, None, chunk, channel))
                short -= chunk
        out.sort(key=lambda r: r.timestamp_us)
        return DeviceTrace(trace.mac, out)
    if kind == "noise":
        if not recs:
            return DeviceTrace(trace.mac, [])
        span = trace.span_us
        extra: list[PacketRecord] = []
        n_bursts = max(1, int(span / float(params.get("burst_every_s", 5.0)) / 1e6))
        for _ in range(n_bursts):
            t0 = int(rng.integers(0, span))
            for i in range(int(rng.integers(3, 11))):
                extra.append(
                    PacketRecord(
                        t0 + i * 15_000,
                        trace.mac,
                        None,
                        int(rng.integers(100, 1401)),
                        recs[0].channel,
                    )
                )
        return DeviceTrace(trace.mac, recs + extra)
    if kind == "resolution":
        factors = params.get("factors", (1.0, 0.55, 1.45))
        out: list[PacketRecord] = []
        switch_us = 0
        fi = -1
        factor = 1.0
        for r in recs:
            while r.timestamp_us >= switch_us:
                fi = (fi + 1) % len(factors)
                factor = float(factors[fi])
                switch_us += int(rng.uniform(5.0, 15.0) * 1e6)
            out.append(
                PacketRecord(
                    r.timestamp_us,
                    r.mac,
                    r.seq,
                    int(min(max(round(r.payload * factor), 40), MTU_BYTES)),
                    r.channel,
                )
            )
        return DeviceTrace(trace.mac, out)
    if kind == "tape-delay":
        delay_us = int(float(params.get("delay_s", 30.0)) * 1e6)
        return DeviceTrace(
            trace.mac,
            [
                PacketRecord(r.timestamp_us + delay_us, r.mac, r.seq, r.payload, r.channel)
                for r in recs
            ],
        )
    raise ConfigError(f"unknown countermeasure {kind!r}")


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def scenario_to_dict(sc: Scenario) -> dict:
    out: dict = {
        "seed": sc.seed,
        "duration_s": sc.duration_s,
        "noise_scale": sc.noise_scale,
        "room": [list(p) for p in sc.room],
        "user_start": list(sc.user_start),
        "sensors": [
            {
                "kind": s.kind,
                "mac": s.mac,
                "position": list(s.position),
                "heading_deg": s.heading_deg,
                **({"params": s.params} if s.params else {}),
            }
            for s in sc.sensors
        ],
        "innocuous": [
            {"kind": d.kind, "mac": d.mac, **({"params": d.params} if d.params else {})}
            for d in sc.innocuous
        ],
        "script": [],
    }
    if sc.countermeasures:
        out["countermeasures"] = [
            {"mac": cm.mac, "kind": cm.kind, **({"params": cm.params} if cm.params else {})}
            for cm in sc.countermeasures
        ]
    for st in sc.script:
        row: dict = {"at_s": st.at_s, "action": st.action}
        if st.duration_s:
            row["duration_s"] = st.duration_s
        if st.target is not None:
            row["target"] = list(st.target)
        if st.action == "speak":
            row["label"] = st.label
            row["volume"] = st.volume
        if st.heading_deg is not None:
            row["heading_deg"] = st.heading_deg
        out["script"].append(row)
    return out


def scenario_from_dict(data: dict) -> Scenario:
    try:
        sc = Scenario(
            room=[tuple(p) for p in data["room"]],
            duration_s=float(data["duration_s"]),
            user_start=tuple(data["user_start"]),
            seed=int(data.get("seed", 0)),
            noise_scale=float(data.get("noise_scale", 1.0)),
            sensors=[
                SensorPlacement(
                    kind=s["kind"],
                    mac=normalize_mac(s["mac"]),
                    position=tuple(s["position"]),
                    heading_deg=float(s.get("heading_deg", 0.0)),
                    params=dict(s.get("params", {})),
                )
                for s in data.get("sensors", [])
            ],
            innocuous=[
                InnocuousDevice(
                    kind=d["kind"], mac=normalize_mac(d["mac"]), params=dict(d.get("params", {}))
                )
                for d in data.get("innocuous", [])
            ],
            script=[
                ScriptStep(
                    at_s=float(st["at_s"]),
                    action=st["action"],
                    duration_s=float(st.get("duration_s", 0.0)),
                    target=tuple(st["target"]) if "target" in st else None,
                    label=st.get("label", "wake"),
                    volume=st.get("volume", "normal"),
                    heading_deg=(
                        float(st["heading_deg"]) if "heading_deg" in st else None
                    ),
                )
                for st in data.get("script", [])
            ],
            countermeasures=[
                CountermeasureConfig(
                    mac=cm["mac"], kind=str(cm["kind"]), params=dict(cm.get("params", {}))
                )
                for cm in data.get("countermeasures", [])
            ],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad scenario: {exc}") from exc
    validate_scenario(sc)
    return sc


def save_scenario(path: str | Path, sc: Scenario) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False)


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario file must be a mapping")
    return scenario_from_dict(data)
