"""Causality tests between user activity and device traffic.

Two families:

* regression causality for continuously transmitting ("raw") devices — does
  adding lagged IMU samples improve the prediction of the traffic series? —
  decided by a nested-model F-test swept over lags;
* event causality for burst ("event") devices — do traffic bursts line up
  with motion segments or labeled utterances, and at what re-arm timeout?
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientActivityError, InsufficientDataError
from .stats import f_sf, ols_fit
from .trace import (
    WINDOW_US,
    DeviceTrace,
    GroundTruthTrace,
    TimeSeries,
    deduplicate,
    windowize,
)

# Decision threshold for "the traffic is caused by the user": any axis with a
# minimum sweep p-value below this marks the device as monitoring.
P_THRESHOLD = 0.08
# Default lag sweep ceiling: 2 s of 100 ms windows.
MAX_LAG = 20

AXIS_LABELS = ("x", "y", "z")

# Traffic bursts: a window counts as bursting when it exceeds BURST_FACTOR
# times the trailing BURST_TRAIL-window mean.
BURST_FACTOR = 5.0
BURST_TRAIL = 10
# A burst explains / is explained by an event when it starts within this long
# after the event's onset.
EVENT_MATCH_US = 5_000_000

# Motion segmentation: a natural stop is at least STOP_MIN_S seconds whose
# 1 s-block IMU magnitude variance stays below STOP_VAR (m/s^2)^2.
STOP_VAR = 0.05
STOP_MIN_S = 5.0
_BLOCK_US = 1_000_000

# Re-arm timeouts outside this range (seconds) are not plausible for consumer
# event sensors and invalidate a discovery.
TIMEOUT_RANGE_S = (30.0, 180.0)


@dataclass(frozen=True)
class GrangerResult:
    """One nested-model F-test at fixed lags (n own lags, m cause lags)."""

    f_stat: float
    p_value: float
    rss_restricted: float
    rss_augmented: float
    n: int
    m: int
    degenerate: bool


@dataclass
class CausalityVerdict:
    """Sweep outcome for one device against the three IMU axes."""

    mac: str
    monitoring: bool
    best_lag: int
    min_p: float
    best_axis: str
    per_axis: list[tuple[str, GrangerResult]] = field(default_factory=list)


def _lag_matrix(y: np.ndarray, x: np.ndarray, n: int, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target vector and restricted/augmented design matrices for rows
    t = max(n, m) .. L-1."""
    L = len(y)
    p = max(n, m)
    yt = y[p:]
    cols = [np.ones(L - p)]
    for i in range(1, n + 1):
        cols.append(y[p - i : L - i])
    xr = np.column_stack(cols)
    for j in range(1, m + 1):
        cols.append(x[p - j : L - j])
    xa = np.column_stack(cols)
    return yt, xr, xa


def granger_test(y: Sequence[float], x: Sequence[float], n: int, m: int) -> GrangerResult:
    """Does x Granger-cause y? Fits y on an intercept plus its own n lags
    (restricted) and additionally m lags of x (augmented); compares residuals
    with an F-test. Series are used as-is (no centering).

    The F statistic is ((rssR - rssA)/m) / (rssA/(T - n - m - 1)) with T the
    number of regression rows; the p-value is its F(m, T-n-m-1) survival
    probability. Rank-deficient fits (constant series, collinear lags) come
    back degenerate with p = 1.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.ndim != 1 or x.ndim != 1 or len(y) != len(x):
        raise ValueError("series must be one-dimensional and equally long")
    if n < 1 or m < 1:
        raise ValueError("lag orders must be >= 1")
    L = len(y)
    if L < n + m + 10:
        raise InsufficientDataError(
            f"series of length {L} too short for lags n={n}, m={m}"
        )
    T = L - max(n, m)
    dof2 = T - n - m - 1
    yt, xr, xa = _lag_matrix(y, x, n, m)
    fit_r = ols_fit(yt, xr)
    fit_a = ols_fit(yt, xa)
    if dof2 < 1 or fit_r.degenerate or fit_a.degenerate:
        return GrangerResult(0.0, 1.0, fit_r.rss, fit_a.rss, n, m, True)
    rss_r, rss_a = fit_r.rss, fit_a.rss
    if rss_r <= 1e-10 * max(float(yt @ yt), 1e-300):
        # The restricted model already fits to the numerical floor (exactly
        # periodic transmitters do this); there is no unexplained variance
        # left for x to claim, and an F ratio of rounding dust is meaningless.
        return GrangerResult(0.0, 1.0, rss_r, rss_a, n, m, False)
    num = max(0.0, rss_r - rss_a) / m
    if num <= 0.0:
        return GrangerResult(0.0, 1.0, rss_r, rss_a, n, m, False)
    denom = rss_a / dof2
    if denom <= num * 1e-15:
        # Essentially perfect augmented fit with a real improvement.
        f_stat = 1e15
    else:
        f_stat = num / denom
    return GrangerResult(f_stat, f_sf(f_stat, m, dof2), rss_r, rss_a, n, m, False)


def granger_sweep(
    y: TimeSeries | Sequence[float],
    axes: Sequence[TimeSeries | Sequence[float]],
    max_lag: int = MAX_LAG,
    threshold: float = P_THRESHOLD,
    mac: str = "",
    lags: Optional[Sequence[int]] = None,
) -> CausalityVerdict:
    """Sweep equal lags 1..max_lag for every IMU axis, keep the per-axis
    minimum p-value, and OR the per-axis threshold decisions.

    ``lags`` replaces the dense 1..max_lag sweep with an explicit lag list —
    the way to reach far-delayed (store-and-forward) transmitters without
    paying for every intermediate lag. A probe lag deeper than ``max_lag``
    keeps the own-history order at ``max_lag`` and slides the regressor
    window so its x lags end at the probe lag; fitting hundreds of
    intermediate coefficients would drown the delayed signal in degrees of
    freedom.
    """
    yv = y.values if isinstance(y, TimeSeries) else np.asarray(y, dtype=np.float64)
    if lags is None:
        if max_lag < 1:
            raise ValueError("max_lag must be >= 1")
        lag_list = list(range(1, max_lag + 1))
    else:
        lag_list = sorted(set(int(l) for l in lags))
        if not lag_list or lag_list[0] < 1:
            raise ValueError("lags must be a non-empty list of integers >= 1")
    if len(yv) < 3 * lag_list[-1]:
        raise InsufficientDataError(
            f"series of length {len(yv)} shorter than 3*max_lag = {3 * lag_list[-1]}"
        )
    per_axis: list[tuple[str, GrangerResult]] = []
    for label, axis in zip(AXIS_LABELS, axes):
        xv = axis.values if isinstance(axis, TimeSeries) else np.asarray(axis, dtype=np.float64)
        best: Optional[GrangerResult] = None
        for lag in lag_list:
            order = min(lag, max_lag)
            shift = lag - order
            if shift > 0:
                res = granger_test(yv[shift:], xv[: len(xv) - shift], order, order)
                res = replace(res, m=lag)
            else:
                res = granger_test(yv, xv, lag, lag)
            if best is None or res.p_value < best.p_value:
                best = res
        assert best is not None
        per_axis.append((label, best))
    winner_label, winner = min(per_axis, key=lambda item: item[1].p_value)
    return CausalityVerdict(
        mac=mac,
        monitoring=winner.p_value < threshold,
        best_lag=winner.m,
        min_p=winner.p_value,
        best_axis=winner_label,
        per_axis=per_axis,
    )


# ---------------------------------------------------------------------------
# Event causality
# ---------------------------------------------------------------------------


@dataclass
class EventCausality:
    """Burst/event alignment outcome for one event-class device."""

    mac: str
    matched_events: int
    missed_events: int
    timeout_s: Optional[float]
    verdict: bool


def find_bursts(
    series: TimeSeries,
    factor: float = BURST_FACTOR,
    trail: int = BURST_TRAIL,
) -> list[tuple[int, int]]:
    """Maximal runs of windows exceeding ``factor`` times the trailing mean
    (any positive window bursts over an all-quiet history). The first window
    has no history and never bursts. Returns (onset_us, end_us) pairs; end is
    exclusive."""
    v = series.values
    flags = np.zeros(len(v), dtype=bool)
    for i in range(1, len(v)):
        lo = max(0, i - trail)
        mean = float(np.mean(v[lo:i]))
        flags[i] = v[i] > factor * mean if mean > 0.0 else v[i] > 0.0
    bursts: list[tuple[int, int]] = []
    i = 0
    while i < len(v):
        if flags[i]:
            j = i
            while j + 1 < len(v) and flags[j + 1]:
                j += 1
            bursts.append(
                (
                    series.start_us + i * series.window_us,
                    series.start_us + (j + 1) * series.window_us,
                )
            )
            i = j + 1
        else:
            i += 1
    return bursts


def motion_segments(
    gt: GroundTruthTrace,
    stop_var: float = STOP_VAR,
    stop_min_s: float = STOP_MIN_S,
) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """Split the IMU stream into motion segments and natural stops.

    Blocks of 1 s are classified by the variance of the acceleration
    magnitude; a stop is a low-variance run of at least ``stop_min_s``.
    Motion segments span from the first to the last active block between
    stops (short hesitations inside a segment do not split it).
    """
    if gt.kind != "imu" or not len(gt.times_us):
        raise ValueError("IMU samples required for motion segmentation")
    mag = np.linalg.norm(gt.accel, axis=1)
    blocks = (gt.times_us // _BLOCK_US).astype(np.int64)
    nb = int(blocks[-1]) + 1
    counts = np.bincount(blocks, minlength=nb)
    sums = np.bincount(blocks, weights=mag, minlength=nb)
    sq = np.bincount(blocks, weights=mag * mag, minlength=nb)
    active = np.zeros(nb, dtype=bool)
    nonzero = counts > 0
    means = np.divide(sums, counts, out=np.zeros(nb), where=nonzero)
    var = np.divide(sq, counts, out=np.zeros(nb), where=nonzero) - means**2
    active[nonzero] = var[nonzero] >= stop_var

    min_blocks = int(round(stop_min_s))
    stops: list[tuple[int, int]] = []
    i = 0
    while i < nb:
        if not active[i]:
            j = i
            while j + 1 < nb and not active[j + 1]:
                j += 1
            if j - i + 1 >= min_blocks:
                stops.append((i * _BLOCK_US, (j + 1) * _BLOCK_US))
            i = j + 1
        else:
            i += 1

    segments: list[tuple[int, int]] = []
    bounds = [(-1, 0)] + [(s // _BLOCK_US, e // _BLOCK_US) for s, e in stops] + [(nb, nb + 1)]
    for (_, prev_end), (next_start, _) in zip(bounds, bounds[1:]):
        lo, hi = prev_end, next_start  # block range between stops
        idx = [b for b in range(max(lo, 0), min(hi, nb)) if active[b]]
        if idx:
            segments.append((idx[0] * _BLOCK_US, (idx[-1] + 1) * _BLOCK_US))
    return segments, stops


def _burst_bytes(series: TimeSeries, burst: tuple[int, int]) -> float:
    lo = (burst[0] - series.start_us) // series.window_us
    hi = (burst[1] - series.start_us) // series.window_us
    return float(np.sum(series.values[lo:hi]))


def _attribute_bursts(
    bursts: list[tuple[int, int]], segments: list[tuple[int, int]]
) -> tuple[list[int], list[int]]:
    """Split burst onsets into motion-attributable and unexplained."""
    attributed: list[int] = []
    unexplained: list[int] = []
    for onset, _ in bursts:
        if any(s <= onset <= e + EVENT_MATCH_US for s, e in segments):
            attributed.append(onset)
        else:
            unexplained.append(onset)
    return attributed, unexplained


def discover_timeout(
    gt: GroundTruthTrace,
    trace: DeviceTrace,
    window_us: int = WINDOW_US,
) -> EventCausality:
    """Estimate an event sensor's re-arm timeout and decide whether its
    bursts are caused by the user's motion.

    A burst is attributable when it starts inside a motion segment (or within
    5 s after one begins). The timeout estimate is the smallest gap between
    consecutive attributable bursts whose second burst fires mid-motion
    (> 5 s past its segment onset): that is exactly the re-arm case, where
    the gap equals the timeout. The verdict requires at least two attributed
    bursts, no unexplained ones, and a plausible timeout (30..180 s, with one
    window of slack for aggregation quantization).
    """
    span = max(trace.span_us, gt.span_us)
    series = windowize(deduplicate(trace), window_us, span_us=span)
    bursts = find_bursts(series)
    segments, _ = motion_segments(gt)
    attributed, unexplained = _attribute_bursts(bursts, segments)

    gaps: list[float] = []
    for b1, b2 in zip(attributed, attributed[1:]):
        mid_motion = any(
            s + EVENT_MATCH_US < b2 <= e for s, e in segments
        )
        if mid_motion:
            gaps.append((b2 - b1) / 1e6)
    window_s = window_us / 1e6
    timeout: Optional[float] = None
    if gaps:
        raw = min(gaps)
        lo, hi = TIMEOUT_RANGE_S
        if lo - window_s <= raw <= hi + window_s:
            timeout = min(max(raw, lo), hi)
    verdict = len(attributed) >= 2 and not unexplained and timeout is not None
    return EventCausality(
        mac=trace.mac,
        matched_events=len(attributed),
        missed_events=len(unexplained),
        timeout_s=timeout,
        verdict=verdict,
    )


def audio_event_causality(
    gt: GroundTruthTrace,
    trace: DeviceTrace,
    window_us: int = WINDOW_US,
    min_burst_bytes: float = 300.0,
) -> EventCausality:
    """Do the device's bursts line up one-to-one with labeled utterances?

    Requires at least three utterances of the probe phrase. The verdict is
    true only when every utterance is followed within 5 s by its own burst
    and the burst count equals the utterance count (extra bursts sink it).

    Bursts carrying fewer than ``min_burst_bytes`` in total are session
    keepalives, not responses — an utterance upload is kilobytes while the
    idle-session heartbeat is a lone sub-100-byte packet. (Motion sensors get
    no such allowance: they hold no cloud session, so for them any traffic
    is an event.)
    """
    utterances = sorted(gt.events, key=lambda e: e.start_us)
    if len(utterances) < 3:
        raise InsufficientActivityError(
            f"audio causality needs >= 3 labeled utterances, got {len(utterances)}"
        )
    span = max(trace.span_us, gt.span_us)
    series = windowize(deduplicate(trace), window_us, span_us=span)
    bursts = [
        b
        for b in find_bursts(series)
        if _burst_bytes(series, b) >= min_burst_bytes
    ]
    used = [False] * len(bursts)
    matched = 0
    for utt in utterances:
        for i, (onset, _) in enumerate(bursts):
            if used[i]:
                continue
            if utt.start_us <= onset <= utt.end_us + EVENT_MATCH_US:
                used[i] = True
                matched += 1
                break
    missed = sum(1 for flag in used if not flag)
    verdict = matched == len(utterances) and len(bursts) == len(utterances)
    return EventCausality(
        mac=trace.mac,
        matched_events=matched,
        missed_events=missed,
        timeout_s=None,
        verdict=verdict,
    )


def detect_sustained_elevation(
    series: TimeSeries,
    min_duration_s: float = 5.0,
    factor: float = 4.0,
    merge_gap_s: float = 1.0,
) -> list[tuple[int, int]]:
    """Find sustained elevated-traffic intervals (e.g. live listen-in
    sessions): runs of windows above ``factor`` times the series median
    (above zero for a mostly-silent device) lasting at least
    ``min_duration_s``, with sub-second dips merged."""
    v = series.values
    baseline = float(np.median(v))
    elevated = v > factor * baseline if baseline > 0.0 else v > 0.0
    w = series.window_us
    runs: list[tuple[int, int]] = []
    i = 0
    while i < len(v):
        if elevated[i]:
            j = i
            while j + 1 < len(v) and elevated[j + 1]:
                j += 1
            runs.append((i, j + 1))
            i = j + 1
        else:
            i += 1
    # Merge runs separated by small dips.
    merged: list[tuple[int, int]] = []
    max_gap = int(round(merge_gap_s * 1e6 / w))
    for lo, hi in runs:
        if merged and lo - merged[-1][1] <= max_gap:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    min_windows = int(round(min_duration_s * 1e6 / w))
    return [
        (series.start_us + lo * w, series.start_us + hi * w)
        for lo, hi in merged
        if hi - lo >= min_windows
    ]
