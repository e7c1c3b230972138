"""Matplotlib renderings for CLI reports (opt-in via --figures).

matplotlib is imported lazily with the Agg backend so headless runs work and
library users who never plot never pay the import.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .trace import WINDOW_US, DeviceTrace, GroundTruthTrace, UserPath, deduplicate, windowize


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_traffic_figure(
    path: str | Path,
    traces: dict[str, DeviceTrace],
    gt: GroundTruthTrace,
    positives: Sequence[str] = (),
    window_us: int = WINDOW_US,
) -> None:
    """Windowed per-device byte rates over the IMU magnitude that drove them."""
    plt = _plt()
    span = max(max((t.span_us for t in traces.values()), default=0), gt.span_us)
    fig, (ax_t, ax_g) = plt.subplots(
        2, 1, figsize=(10, 6), sharex=True, height_ratios=[3, 1]
    )
    flagged = set(positives)
    for mac in sorted(traces):
        series = windowize(deduplicate(traces[mac]), window_us, span_us=span)
        t = series.window_starts_us() / 1e6
        hot = mac in flagged
        ax_t.plot(
            t,
            series.values,
            label=f"{mac}{' *' if hot else ''}",
            linewidth=1.6 if hot else 0.8,
            alpha=1.0 if hot else 0.55,
        )
    ax_t.set_ylabel("bytes / window")
    ax_t.legend(fontsize=7, ncols=2)
    if gt.kind == "imu" and len(gt.times_us):
        mag = np.linalg.norm(gt.accel, axis=1)
        ax_g.plot(gt.times_us / 1e6, mag, color="black", linewidth=0.7)
    for ev in gt.events:
        ax_g.axvspan(ev.start_us / 1e6, ev.end_us / 1e6, color="orange", alpha=0.4)
    ax_g.set_ylabel("|accel|")
    ax_g.set_xlabel("time (s)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_room_figure(path: str | Path, result, room: Sequence[tuple]) -> None:
    """Room map: candidate cells, trial poses, and the fitted location."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 7 * _aspect(room)))
    xs = [p[0] for p in room] + [room[0][0]]
    ys = [p[1] for p in room] + [room[0][1]]
    ax.plot(xs, ys, color="black", linewidth=1.5)

    cell = result.region.cell
    for x, y in result.initial.centers():
        ax.add_patch(
            plt.Rectangle(
                (x - cell / 2, y - cell / 2), cell, cell, color="#c9d7f0", linewidth=0
            )
        )
    for x, y in result.region.centers():
        ax.add_patch(
            plt.Rectangle(
                (x - cell / 2, y - cell / 2), cell, cell, color="#4878c9", linewidth=0
            )
        )
    for i, tr in enumerate(result.trials):
        x, y = tr.position
        color = "#2a9d2a" if tr.outcome else "#c93a3a"
        ax.plot(x, y, "o", color=color, markersize=5)
        th = np.radians(tr.heading_deg)
        ax.annotate(
            str(i + 1),
            (x, y),
            textcoords="offset points",
            xytext=(4, 4),
            fontsize=8,
            color=color,
        )
        ax.arrow(x, y, 0.3 * np.cos(th), 0.3 * np.sin(th), head_width=0.08, color=color)
    if result.mle is not None:
        mx, my, mh = result.mle
        th = np.radians(mh)
        ax.plot(mx, my, "*", color="#e0a800", markersize=14)
        ax.arrow(mx, my, 0.5 * np.cos(th), 0.5 * np.sin(th), head_width=0.1, color="#e0a800")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(f"{result.mac} — {result.status}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_path_figure(
    path: str | Path,
    up: UserPath,
    room: Sequence[tuple],
    sensors: Optional[Sequence] = None,
) -> None:
    """The user's walked path inside the room, with sensor poses if given."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(7, 7 * _aspect(room)))
    xs = [p[0] for p in room] + [room[0][0]]
    ys = [p[1] for p in room] + [room[0][1]]
    ax.plot(xs, ys, color="black", linewidth=1.5)
    if len(up.xy):
        ax.plot(up.xy[:, 0], up.xy[:, 1], color="#4878c9", linewidth=0.8)
        ax.plot(up.xy[0, 0], up.xy[0, 1], "o", color="#2a9d2a", markersize=6)
    for s in sensors or []:
        x, y = s.position
        th = np.radians(s.heading_deg)
        ax.plot(x, y, "s", color="#c93a3a", markersize=6)
        ax.arrow(x, y, 0.4 * np.cos(th), 0.4 * np.sin(th), head_width=0.1, color="#c93a3a")
        ax.annotate(s.mac, (x, y), textcoords="offset points", xytext=(5, 5), fontsize=7)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _aspect(room: Sequence[tuple]) -> float:
    xs = [p[0] for p in room]
    ys = [p[1] for p in room]
    w = max(xs) - min(xs)
    h = max(ys) - min(ys)
    return max(h / w, 0.3) if w > 0 else 1.0
