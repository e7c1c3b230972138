"""Grid-based localization of a detected sensor inside a room.

The protocol has two stages. First a *coverage map*: the user walks a probe
traversal of the room, performing a short perturbation routine at each stand
point; every point whose routine provably drives the device's traffic marks
the surrounding cells as possible sensor locations. Second, *elimination
trials*: a pose estimate is fitted to the mapped region, and the user stands
inside the room performing a directional stimulus (body shielding everything
behind them) so each trial outcome keeps or removes the half-disk of cells
the stimulus could have reached. Audio assistants do not respond to motion,
so they get a volume-descent variant instead: re-probe the surviving cells
with ever quieter utterances until the region stops shrinking.

Trial outcomes are applied with a safety margin of ``POSE_SLOP_M`` (the cell
half-diagonal plus the traffic quantization width): a negative trial only
removes cells confidently inside the stimulus half-disk, and a positive trial
keeps every cell that could possibly be inside it, so discretization can
never misclassify the cell the sensor actually occupies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .causality import find_bursts, granger_sweep
from .errors import ConfigError
from .geometry import Point, dist, heading_deg, point_in_polygon, polygon_area
from .trace import WINDOW_US, deduplicate, resample_ground_truth, suppress_iframes, windowize
from .worldsim import (
    Scenario,
    ScriptStep,
    SensorPlacement,
    action_intensity,
    generate,
)

GRID_CELL_M = 0.25
DILATE_M = 0.5
DENSITY_PER_M2 = 0.25  # positive stand points per m² before densification stops
TRIAL_FACTOR = 1.5  # a trial is positive above 150% of the still baseline
AREA_FRACTION = 0.10  # stop shrinking below this fraction of the room area
POSE_SLOP_M = 0.21  # cell half-diagonal plus the traffic quantization margin
PROBE_MAX_LAG = 5
MIN_BURST_BYTES = 300.0  # ignore status/keepalive chirps when probing
GATE_NEAR_M = 1.5  # densification probes stay this close to known positives
FIT_FOV_DEG = 90.0
FIT_HEADING_STEP_DEG = 10.0
AUDIO_LEVELS = ("loud", "normal", "quiet", "whisper")

_ANCHOR_PROBE_CAP = 25  # stand-point verifications allowed per trial

_room_grid_cache: dict[tuple, "GridRegion"] = {}


# ---------------------------------------------------------------------------
# Grid region
# ---------------------------------------------------------------------------


@dataclass
class GridRegion:
    """A set of square cells on a fixed lattice clipped to the room."""

    room: list[Point]
    origin: Point
    cell: float
    mask: np.ndarray  # bool, shape (ny, nx)

    @classmethod
    def from_room(cls, room: Sequence[Point], cell: float = GRID_CELL_M) -> "GridRegion":
        """Every cell whose area overlaps the room. Rooms are rarely grid
        multiples, so boundary slivers count: a wall-mounted sensor lives in
        a cell whose center may fall just outside the polygon."""
        key = (tuple((float(x), float(y)) for x, y in room), float(cell))
        hit = _room_grid_cache.get(key)
        if hit is None:
            if cell <= 0:
                raise ConfigError("cell size must be positive")
            xs = [p[0] for p in room]
            ys = [p[1] for p in room]
            origin = (min(xs), min(ys))
            nx = max(1, math.ceil((max(xs) - origin[0]) / cell))
            ny = max(1, math.ceil((max(ys) - origin[1]) / cell))
            half = cell / 2.0 - 1e-6  # corners pulled in so touching != overlap
            mask = np.zeros((ny, nx), dtype=bool)
            for iy in range(ny):
                cy = origin[1] + (iy + 0.5) * cell
                for ix in range(nx):
                    cx = origin[0] + (ix + 0.5) * cell
                    mask[iy, ix] = point_in_polygon((cx, cy), room) or any(
                        point_in_polygon((cx + sx * half, cy + sy * half), room)
                        for sx in (-1.0, 1.0)
                        for sy in (-1.0, 1.0)
                    )
            hit = cls([tuple(p) for p in room], origin, float(cell), mask)
            _room_grid_cache[key] = hit
        return GridRegion(hit.room, hit.origin, hit.cell, hit.mask.copy())

    @classmethod
    def from_points(
        cls,
        room: Sequence[Point],
        points: Sequence[Point],
        radius: float,
        cell: float = GRID_CELL_M,
    ) -> "GridRegion":
        """Room cells within ``radius`` of any of ``points`` (a dilation)."""
        base = cls.from_room(room, cell)
        if not points:
            return base.with_mask(np.zeros_like(base.mask))
        centers = base._all_centers()
        pts = np.asarray(points, dtype=np.float64)
        d2 = ((centers[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        near = (d2.min(axis=1) <= radius * radius).reshape(base.mask.shape)
        return base.with_mask(base.mask & near)

    def _all_centers(self) -> np.ndarray:
        ny, nx = self.mask.shape
        gx = self.origin[0] + (np.arange(nx) + 0.5) * self.cell
        gy = self.origin[1] + (np.arange(ny) + 0.5) * self.cell
        xx, yy = np.meshgrid(gx, gy)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def with_mask(self, mask: np.ndarray) -> "GridRegion":
        if mask.shape != self.mask.shape:
            raise ValueError("mask shape mismatch")
        return GridRegion(self.room, self.origin, self.cell, mask.astype(bool))

    def count(self) -> int:
        return int(self.mask.sum())

    def area(self) -> float:
        return self.count() * self.cell * self.cell

    def centers(self) -> np.ndarray:
        """(k, 2) centers of the included cells, row-major order."""
        iy, ix = np.nonzero(self.mask)
        x = self.origin[0] + (ix + 0.5) * self.cell
        y = self.origin[1] + (iy + 0.5) * self.cell
        return np.column_stack([x, y])

    def centroid(self) -> Point:
        c = self.centers()
        if not len(c):
            raise ValueError("empty region has no centroid")
        return (float(c[:, 0].mean()), float(c[:, 1].mean()))

    def contains(self, point: Point) -> bool:
        """Is the cell under ``point`` included? A point exactly on a cell
        edge (a wall-mounted sensor, say) belongs to every adjacent cell."""
        ny, nx = self.mask.shape
        fx = (point[0] - self.origin[0]) / self.cell
        fy = (point[1] - self.origin[1]) / self.cell
        eps = 1e-9
        xs = {int(math.floor(fx - eps)), int(math.floor(fx + eps))}
        ys = {int(math.floor(fy - eps)), int(math.floor(fy + eps))}
        for iy in ys:
            for ix in xs:
                if 0 <= iy < ny and 0 <= ix < nx and self.mask[iy, ix]:
                    return True
        return False

    def walkable_centers(self) -> np.ndarray:
        """Included cell centers the user can actually stand on (strictly
        inside the room; boundary slivers have centers beyond the wall)."""
        c = self.centers()
        if not len(c):
            return c
        ok = np.array([point_in_polygon((float(x), float(y)), self.room) for x, y in c])
        return c[ok]

    def boundary_cells(self) -> np.ndarray:
        """Centers of included cells with a missing 4-neighbour."""
        m = self.mask
        padded = np.zeros((m.shape[0] + 2, m.shape[1] + 2), dtype=bool)
        padded[1:-1, 1:-1] = m
        interior = (
            padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
        )
        edge = m & ~interior
        iy, ix = np.nonzero(edge)
        x = self.origin[0] + (ix + 0.5) * self.cell
        y = self.origin[1] + (iy + 0.5) * self.cell
        return np.column_stack([x, y])

    def cell_list(self) -> list[Point]:
        return [(float(x), float(y)) for x, y in self.centers()]


# ---------------------------------------------------------------------------
# Protocol state types
# ---------------------------------------------------------------------------


@dataclass
class BBoxState:
    """Coverage-map output: the candidate region plus fit bookkeeping."""

    included: GridRegion
    trials_run: int = 0
    mle: Optional[tuple[float, float, float]] = None
    status: str = "ok"
    probes_run: int = 0
    positives: list[Point] = field(default_factory=list)


@dataclass
class TrialSpec:
    """One elimination trial: stand here, face there, do this."""

    position: Point
    heading_deg: float
    stimulus: str
    duration_s: float = 30.0


@dataclass
class TrialRecord:
    position: Point
    heading_deg: float
    stimulus: str
    outcome: bool


@dataclass
class LocalizationResult:
    mac: str
    initial: GridRegion
    region: GridRegion
    mle: Optional[tuple[float, float, float]]
    trials: list[TrialRecord]
    status: str
    probes_run: int = 0

    def render(self) -> str:
        lines = [
            f"mac,{self.mac}",
            f"status,{self.status}",
            f"area,initial,{self.initial.area():.4f}",
            f"area,final,{self.region.area():.4f}",
            f"cells,initial,{self.initial.count()}",
            f"cells,final,{self.region.count()}",
            f"probes,{self.probes_run}",
        ]
        if self.mle is not None:
            lines.append(f"mle,{self.mle[0]:.3f},{self.mle[1]:.3f},{self.mle[2]:.1f}")
        else:
            lines.append("mle,,,")
        for i, t in enumerate(self.trials):
            word = "positive" if t.outcome else "negative"
            lines.append(
                f"trial,{i},{t.position[0]:.3f},{t.position[1]:.3f},"
                f"{t.heading_deg:.1f},{t.stimulus},{word}"
            )
        for x, y in self.region.cell_list():
            lines.append(f"cell,{x:.3f},{y:.3f}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())


# ---------------------------------------------------------------------------
# Simulated probing field
# ---------------------------------------------------------------------------


def _probe_script() -> list[ScriptStep]:
    return [
        ScriptStep(0.0, "still", 3.0),
        ScriptStep(3.0, "jumping-jacks", 5.0),
        ScriptStep(8.0, "still", 2.0),
        ScriptStep(10.0, "jumping-jacks", 5.0),
        ScriptStep(15.0, "still", 3.0),
    ]


class SimulatedField:
    """Answers probe/trial questions about one sensor by simulating the user
    actually walking over and performing them (a fresh visit each time, so
    re-arm timeouts never leak between questions)."""

    def __init__(self, scenario: Scenario, mac: str):
        matches = [s for s in scenario.sensors if s.mac.lower() == mac.lower()]
        if not matches:
            raise ConfigError(f"no sensor with mac {mac!r} in the scenario")
        self.scenario = scenario
        self.placement: SensorPlacement = matches[0]
        self.mac = matches[0].mac
        self.kind = matches[0].kind
        self.room = scenario.room
        self.probes_run = 0
        self._probe_cache: dict[tuple, bool] = {}
        self._audio_cache: dict[tuple, bool] = {}

    # -- internals ----------------------------------------------------------

    def _mini(self, user_start: Point, duration_s: float, script: list[ScriptStep]):
        sc = Scenario(
            room=self.room,
            duration_s=duration_s,
            user_start=user_start,
            seed=self.scenario.seed,
            noise_scale=self.scenario.noise_scale,
            sensors=[self.placement],
            script=script,
        )
        return generate(sc)

    def _bursts_of_interest(self, trace, span_us: int) -> list[tuple[int, int]]:
        series = windowize(deduplicate(trace), WINDOW_US, span_us=span_us)
        out = []
        for b in find_bursts(series):
            lo = (b[0] - series.start_us) // series.window_us
            hi = (b[1] - series.start_us) // series.window_us
            if float(np.sum(series.values[lo:hi])) >= MIN_BURST_BYTES:
                out.append(b)
        return out

    # -- public surface -----------------------------------------------------

    def probe(self, point: Point) -> bool:
        """Does a short perturbation routine at ``point`` drive this device?"""
        key = (round(point[0], 3), round(point[1], 3))
        if key in self._probe_cache:
            return self._probe_cache[key]
        self.probes_run += 1
        span_us = 18_000_000
        res = self._mini(point, 18.0, _probe_script())
        trace = res.traces[self.mac]
        if self.kind in ("camera", "rf"):
            series = suppress_iframes(windowize(deduplicate(trace), WINDOW_US, span_us=span_us))
            axes, _ = resample_ground_truth(res.ground_truth, WINDOW_US, span_us=span_us)
            hit = granger_sweep(series, axes, max_lag=PROBE_MAX_LAG, mac=self.mac).monitoring
        elif self.kind == "motion":
            windows = [(3_000_000, 13_000_000), (10_000_000, 20_000_000)]
            hit = any(
                lo <= b[0] <= hi for b in self._bursts_of_interest(trace, span_us) for lo, hi in windows
            )
        else:
            raise ConfigError("audio devices are probed with audio_probe()")
        self._probe_cache[key] = hit
        return hit

    def audio_probe(self, point: Point, volume: str) -> bool:
        """Does an utterance at ``point`` at ``volume`` wake this device?"""
        key = (round(point[0], 3), round(point[1], 3), volume)
        if key in self._audio_cache:
            return self._audio_cache[key]
        if self.kind != "audio":
            raise ConfigError("audio_probe() is only for audio devices")
        self.probes_run += 1
        phrase = str(self.placement.model()["wake_phrase"])
        script = [
            ScriptStep(0.0, "still", 1.0),
            ScriptStep(1.0, "speak", label=phrase, volume=volume),
            ScriptStep(2.2, "still", 3.8),
        ]
        res = self._mini(point, 6.0, script)
        bursts = self._bursts_of_interest(res.traces[self.mac], 6_000_000)
        hit = any(1_000_000 <= b[0] <= 6_000_000 for b in bursts)
        self._audio_cache[key] = hit
        return hit

    def trial_stimulus(self) -> str:
        return "laptop-flash" if self.kind == "camera" else "hand-wave"

    def trial_radius(self) -> float:
        """Distance inside which a positive trial response is guaranteed.

        Raw devices respond with base + gain * intensity * (1 - d/range), so
        the 150% bar on the median response is crossed exactly below
        range * (1 - (factor-1) * base / (gain * intensity)). A binary motion
        sensor triggers anywhere in range.
        """
        model = self.placement.model()
        if self.kind == "camera":
            intensity = action_intensity("laptop-flash")[1]
            base, gain = float(model["base_frame_bytes"]), float(model["frame_gain_bytes"])
        elif self.kind == "rf":
            intensity = action_intensity("hand-wave")[0]
            base, gain = float(model["base_bytes"]), float(model["gain_bytes"])
        elif self.kind == "motion":
            return float(model["range_m"])
        else:
            raise ConfigError("audio devices are localized by volume descent")
        lift = gain * intensity
        if lift <= (TRIAL_FACTOR - 1.0) * base:
            return 0.0
        return float(model["range_m"]) * (1.0 - (TRIAL_FACTOR - 1.0) * base / lift)

    def trial(self, spec: TrialSpec) -> bool:
        """Run one elimination trial: still baseline, then the directional
        stimulus facing ``spec.heading_deg``."""
        half = spec.duration_s / 2.0
        script = [
            ScriptStep(0.0, "still", half),
            ScriptStep(half, spec.stimulus, half, heading_deg=spec.heading_deg),
        ]
        span_us = int(spec.duration_s * 1e6)
        res = self._mini(spec.position, spec.duration_s, script)
        trace = res.traces[self.mac]
        if self.kind == "motion":
            onset = int(half * 1e6)
            return any(onset <= b[0] for b in self._bursts_of_interest(trace, span_us))
        series = suppress_iframes(windowize(deduplicate(trace), WINDOW_US, span_us=span_us))
        split = len(series.values) // 2
        # Median, not mean: keyframe residue at the series edges would bias a
        # mean baseline and quietly move the 150% bar off the derived radius.
        base = float(np.median(series.values[:split]))
        stim = float(np.median(series.values[split:]))
        if base <= 0.0:
            return stim > 0.0
        return stim > TRIAL_FACTOR * base


def _as_field(scenario_or_field, mac: Optional[str]) -> SimulatedField:
    if isinstance(scenario_or_field, SimulatedField):
        return scenario_or_field
    if isinstance(scenario_or_field, Scenario):
        if not mac:
            if len(scenario_or_field.sensors) != 1:
                raise ConfigError("mac is required when the scenario has several sensors")
            mac = scenario_or_field.sensors[0].mac
        return SimulatedField(scenario_or_field, mac)
    raise ConfigError("expected a Scenario or a SimulatedField")


# ---------------------------------------------------------------------------
# Coverage mapping
# ---------------------------------------------------------------------------


def _ring_points(room: Sequence[Point], inset: float, step: float) -> list[Point]:
    """Stand points hugging the walls: each polygon edge sampled every
    ``step`` metres, pushed ``inset`` metres toward the interior."""
    # Inward normal direction depends on winding; signed area disambiguates.
    n = len(room)
    signed = 0.0
    for i in range(n):
        x1, y1 = room[i]
        x2, y2 = room[(i + 1) % n]
        signed += x1 * y2 - x2 * y1
    sign = 1.0 if signed > 0 else -1.0
    pts: list[Point] = []
    for i in range(n):
        x1, y1 = room[i]
        x2, y2 = room[(i + 1) % n]
        ex, ey = x2 - x1, y2 - y1
        length = math.hypot(ex, ey)
        if length < 1e-9:
            continue
        ux, uy = ex / length, ey / length
        nx_, ny_ = -uy * sign, ux * sign  # inward normal
        k = 0.0
        while k <= length + 1e-9:
            p = (x1 + ux * k + nx_ * inset, y1 + uy * k + ny_ * inset)
            if point_in_polygon(p, room):
                pts.append(p)
            k += step
    return pts


def _lattice_points(room: Sequence[Point], spacing: float, offset: float) -> list[Point]:
    xs = [p[0] for p in room]
    ys = [p[1] for p in room]
    pts: list[Point] = []
    y = min(ys) + offset
    while y < max(ys):
        x = min(xs) + offset
        while x < max(xs):
            if point_in_polygon((x, y), room):
                pts.append((x, y))
            x += spacing
        y += spacing
    return pts


def default_traversal(room: Sequence[Point]) -> list[list[Point]]:
    """The stock probe plan, as ordered phases.

    Phase 0 is a full-room sweep on a 0.7 m lattice and always runs whole.
    Phase 1 hugs the walls (0.25 m in, one stand every 0.2 m) so that a
    sensor mounted at a wall gets a probe deep inside its cone, close enough
    that dilation reaches the cell it actually occupies; it is only walked
    near stand points that already responded. Any later phase densifies the
    interior (0.35 m lattice) near positives until the positive density
    reaches 1 per 4 m².
    """
    return [
        _lattice_points(room, 0.7, 0.35),
        _ring_points(room, 0.25, 0.2),
        _lattice_points(room, 0.35, 0.175),
    ]


def map_coverage(
    scenario_or_field: Union[Scenario, SimulatedField],
    mac: Optional[str] = None,
    traversal: Optional[Sequence] = None,
    cell_m: float = GRID_CELL_M,
) -> BBoxState:
    """Walk the traversal, probe, and dilate the positive stand points by
    0.5 m into a candidate cell region.

    ``traversal`` may be a flat list of stand points (probed exhaustively, in
    order) or a list of phases with the semantics of ``default_traversal``:
    the first phase runs whole, later phases only probe near existing
    positives, and phases after the second stop once positives are dense
    enough. Returns a not-localizable state when nothing responds.
    """
    fieldv = _as_field(scenario_or_field, mac)
    plan: list[list[Point]]
    if traversal is None:
        plan = default_traversal(fieldv.room)
    else:
        tlist = list(traversal)
        if tlist and isinstance(tlist[0], (tuple, list)) and len(tlist[0]) == 2 \
                and isinstance(tlist[0][0], (int, float)):
            plan = [[(float(x), float(y)) for x, y in tlist]]
        else:
            plan = [[(float(x), float(y)) for x, y in phase] for phase in tlist]
    room_area = polygon_area(fieldv.room)
    need = max(1, math.ceil(DENSITY_PER_M2 * room_area))
    positives: list[Point] = []

    def near_positive(p: Point) -> bool:
        return any(dist(p, q) <= GATE_NEAR_M for q in positives)

    for phase_idx, phase in enumerate(plan):
        for p in phase:
            if phase_idx >= 2 and len(positives) >= need:
                break
            if phase_idx >= 1 and not near_positive(p):
                continue
            if fieldv.probe(p):
                positives.append(p)
    included = GridRegion.from_points(fieldv.room, positives, DILATE_M, cell=cell_m)
    state = BBoxState(
        included=included,
        probes_run=fieldv.probes_run,
        positives=positives,
    )
    if not positives:
        state.status = "not-localizable"
    else:
        state.mle = most_likely_location(included)
    return state


# ---------------------------------------------------------------------------
# Pose fitting
# ---------------------------------------------------------------------------


def _fit_score(fit_mask: np.ndarray, inc_mask: np.ndarray) -> int:
    return int(np.sum(fit_mask & inc_mask)) - int(np.sum(fit_mask & ~inc_mask))


def _apex_candidates(included: GridRegion) -> np.ndarray:
    """Boundary cells of the region plus the one-cell ring just outside it.

    The geometric apex of a viewing cone usually falls in a cell the coverage
    sampling left out — too little of the cone overlaps its own apex cell for
    the cell's center to test positive — so apex candidates must reach one
    cell beyond the included set."""
    m = included.mask
    ny, nx = m.shape
    padded = np.zeros((ny + 2, nx + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    neigh = np.zeros((ny, nx), dtype=bool)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            if dy == 1 and dx == 1:
                continue
            neigh |= padded[dy : dy + ny, dx : dx + nx]
    iy, ix = np.nonzero(neigh & ~m)
    x = included.origin[0] + (ix + 0.5) * included.cell
    y = included.origin[1] + (iy + 0.5) * included.cell
    return np.vstack([included.boundary_cells(), np.column_stack([x, y])])


def most_likely_location(included: GridRegion) -> tuple[float, float, float]:
    """Heuristic pose (x, y, heading°) for the sensor inside its region.

    Two shape hypotheses are scored on overlap-minus-overshoot against the
    room's cells: a viewing sector (apex on or one cell outside the region
    boundary, area-matched radius, heading swept) for wall-mounted cone
    sensors, and a principal-axes ellipse for blob-like regions. Ties go to
    the sector, whose apex is the actual mount-point guess.
    """
    if included.count() == 0:
        raise ValueError("cannot fit a pose to an empty region")
    room_grid = GridRegion.from_room(included.room, included.cell)
    domain = room_grid.mask.ravel()
    centers = room_grid._all_centers()
    inc_flat = included.mask.ravel() & domain
    area = included.area()

    # Sector hypothesis: apex on or beside the boundary, area-matched radius.
    radius = math.sqrt(4.0 * area / math.pi)  # area of a 90° sector
    apexes = _apex_candidates(included)
    if len(apexes) > 96:
        stride = int(math.ceil(len(apexes) / 96))
        apexes = apexes[::stride]
    headings = np.arange(0.0, 360.0, FIT_HEADING_STEP_DEG)
    best_sector = (-(10**9), (0.0, 0.0, 0.0))
    for ax, ay in apexes:
        dx = centers[:, 0] - ax
        dy = centers[:, 1] - ay
        d = np.hypot(dx, dy)
        ang = np.degrees(np.arctan2(dy, dx))
        diff = np.abs(((ang[None, :] - headings[:, None] + 180.0) % 360.0) - 180.0)
        in_sector = (diff <= FIT_FOV_DEG / 2.0) | (d[None, :] <= 1e-9)
        masks = in_sector & (d[None, :] <= radius) & domain[None, :]
        scores = np.sum(masks & inc_flat[None, :], axis=1) - np.sum(
            masks & ~inc_flat[None, :], axis=1
        )
        k = int(np.argmax(scores))
        if int(scores[k]) > best_sector[0]:
            best_sector = (int(scores[k]), (float(ax), float(ay), float(headings[k])))

    # Ellipse hypothesis: centroid plus principal axes of the cell cloud.
    pts = included.centers()
    mean = pts.mean(axis=0)
    centered = pts - mean
    if len(pts) > 1:
        cov = centered.T @ centered / len(pts)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        a = max(2.0 * math.sqrt(max(evals[0], 0.0)), included.cell)
        b = max(2.0 * math.sqrt(max(evals[1], 0.0)), included.cell)
        u = (centers - mean) @ evecs
        fit = ((u[:, 0] / a) ** 2 + (u[:, 1] / b) ** 2 <= 1.0) & domain
        ellipse_score = _fit_score(fit, inc_flat)
        ellipse_heading = math.degrees(math.atan2(evecs[1, 0], evecs[0, 0])) % 360.0
    else:
        ellipse_score = -(10**9)
        ellipse_heading = 0.0

    if best_sector[0] >= ellipse_score:
        return best_sector[1]
    return (float(mean[0]), float(mean[1]), float(ellipse_heading))


# ---------------------------------------------------------------------------
# Elimination trials
# ---------------------------------------------------------------------------


def _pose_split(
    pts: np.ndarray, position: Point, heading: float, radius_m: float
) -> tuple[np.ndarray, np.ndarray]:
    """Confident-inside and possible-inside masks of ``pts`` for a stimulus
    at ``position`` facing ``heading``. Confident-inside cells are provably
    sensed (safe to remove on a negative outcome); everything outside
    possible-inside is provably unsensed (safe to remove on a positive)."""
    hx, hy = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    dxs = pts[:, 0] - position[0]
    dys = pts[:, 1] - position[1]
    d = np.hypot(dxs, dys)
    forward = dxs * hx + dys * hy
    confident = (d <= radius_m - POSE_SLOP_M) & (forward >= POSE_SLOP_M)
    possible = (d <= radius_m + POSE_SLOP_M) & (forward >= -POSE_SLOP_M)
    return confident, possible


def _trial_candidates(
    mle: tuple[float, float, float],
    included: GridRegion,
    radius_m: float,
    stimulus: str,
) -> Iterator[TrialSpec]:
    """Stand poses in decreasing order of guaranteed progress.

    Anchors slide from the region centroid along the centroid→estimate axis
    (snapped to walkable room cell centers), plus the cells nearest the
    centroid. Every anchor faces the estimate. A pose qualifies when both
    outcomes are informative — at least one cell is confidently sensed and at
    least one provably is not — and poses are ordered by the smaller of the
    two counts, so balanced splits come first.
    """
    room_grid = GridRegion.from_room(included.room, included.cell)
    walkable = room_grid.walkable_centers()
    inc = included.centers()
    total = len(inc)
    if total <= 1 or not len(walkable):
        return
    cx, cy = included.centroid()
    mx, my, mh = mle
    ux, uy = mx - cx, my - cy
    norm = math.hypot(ux, uy)
    if norm < 1e-9:
        ux, uy = math.cos(math.radians(mh)), math.sin(math.radians(mh))
    else:
        ux, uy = ux / norm, uy / norm

    seen: set[tuple[float, float]] = set()
    anchors: list[Point] = []

    def add(p: Point) -> None:
        d2 = (walkable[:, 0] - p[0]) ** 2 + (walkable[:, 1] - p[1]) ** 2
        q = walkable[int(np.argmin(d2))]
        key = (round(float(q[0]), 4), round(float(q[1]), 4))
        if key not in seen:
            seen.add(key)
            anchors.append((float(q[0]), float(q[1])))

    for k in [0] + [s * sgn for s in range(1, 25) for sgn in (1, -1)]:
        add((cx + k * 0.5 * included.cell * ux, cy + k * 0.5 * included.cell * uy))
    order = np.argsort((walkable[:, 0] - cx) ** 2 + (walkable[:, 1] - cy) ** 2)
    for idx in order[:80]:
        add((float(walkable[idx, 0]), float(walkable[idx, 1])))

    scored: list[tuple[int, int, TrialSpec]] = []
    for rank, p in enumerate(anchors):
        h = mh if dist(p, (mx, my)) < 1e-9 else heading_deg(p, (mx, my))
        confident, possible = _pose_split(inc, p, h, radius_m)
        n_conf = int(confident.sum())
        n_out = total - int(possible.sum())
        if n_conf >= 1 and n_out >= 1:
            scored.append((-min(n_conf, n_out), rank, TrialSpec(p, h, stimulus)))
    scored.sort(key=lambda t: (t[0], t[1]))
    for _, _, spec in scored:
        yield spec


def generate_trial(
    mle: tuple[float, float, float],
    included: GridRegion,
    radius_m: float,
    stimulus: str = "hand-wave",
) -> Optional[TrialSpec]:
    """Best available trial pose, or None when the region cannot be split
    (single cell, or no informative pose exists)."""
    if included.count() <= 1:
        return None
    return next(_trial_candidates(mle, included, radius_m, stimulus), None)


def apply_trial(
    included: GridRegion, spec: TrialSpec, radius_m: float, outcome: bool
) -> GridRegion:
    """Shrink the region by one trial outcome, with the safety margin.

    Positive: the sensor responded, so it sits somewhere the stimulus could
    reach — drop every cell provably out of reach. Negative: drop only the
    cells the stimulus provably covered.
    """
    centers = included._all_centers()
    confident, possible = _pose_split(centers, spec.position, spec.heading_deg, radius_m)
    if outcome:
        new = included.mask & possible.reshape(included.mask.shape)
    else:
        new = included.mask & ~confident.reshape(included.mask.shape)
    return included.with_mask(new)


def localize(
    scenario_or_field: Union[Scenario, SimulatedField],
    mac: Optional[str] = None,
    threshold: float = AREA_FRACTION,
    traversal: Optional[Sequence] = None,
    cell_m: float = GRID_CELL_M,
) -> LocalizationResult:
    """Full protocol: coverage map, then elimination trials until the region
    is below ``threshold`` of the room area (or a single cell).

    Each candidate stand point is first verified with a cached probe — a
    trial anchored where the sensor cannot see the stimulus would eliminate
    cells it never tested. Positive trials keep the cells the stimulus could
    have reached; negative trials remove the cells it provably covered. A
    trial that would empty the region outright contradicts the map and aborts
    with ``noisy-trial`` rather than discarding the remaining candidates.
    """
    fieldv = _as_field(scenario_or_field, mac)
    if fieldv.kind == "audio":
        raise ConfigError("audio devices are localized with audio_localize()")
    state = map_coverage(fieldv, traversal=traversal, cell_m=cell_m)
    if state.status != "ok":
        return LocalizationResult(
            fieldv.mac, state.included, state.included, None, [], state.status, fieldv.probes_run
        )
    initial = state.included
    included = initial.with_mask(initial.mask.copy())
    room_area = polygon_area(fieldv.room)
    stop_area = threshold * room_area
    radius = fieldv.trial_radius()
    stimulus = fieldv.trial_stimulus()
    trials: list[TrialRecord] = []
    cap = max(initial.count() - 1, 0)
    status = "ok"
    if radius < included.cell:
        status = "stalled"
    while (
        status == "ok"
        and included.area() > stop_area
        and included.count() > 1
        and len(trials) < cap
    ):
        mle = most_likely_location(included)
        spec = None
        checked = 0
        for cand in _trial_candidates(mle, included, radius, stimulus):
            checked += 1
            if fieldv.probe(cand.position):
                spec = cand
                break
            if checked >= _ANCHOR_PROBE_CAP:
                break
        if spec is None:
            status = "stalled"
            break
        outcome = fieldv.trial(spec)
        trials.append(TrialRecord(spec.position, spec.heading_deg, spec.stimulus, outcome))
        shrunk = apply_trial(included, spec, radius, outcome)
        if shrunk.count() == 0:
            status = "noisy-trial"
            break
        included = shrunk
    mle = most_likely_location(included) if included.count() else None
    return LocalizationResult(fieldv.mac, initial, included, mle, trials, status, fieldv.probes_run)


def audio_localize(
    scenario_or_field: Union[Scenario, SimulatedField],
    mac: Optional[str] = None,
    threshold: float = AREA_FRACTION,
    levels: Sequence[str] = AUDIO_LEVELS,
    cell_m: float = GRID_CELL_M,
) -> LocalizationResult:
    """Volume-descent localization for wake-word devices.

    Every cell of the current region is probed with an utterance at the
    current volume; responding cells form the next region (no dilation — the
    response radius is the dilation). Quieter levels shrink the disk until
    either nothing responds (keep the previous region) or the region is small
    enough. No response at the loudest level means the device cannot hear the
    room at all: not-localizable.
    """
    fieldv = _as_field(scenario_or_field, mac)
    if fieldv.kind != "audio":
        raise ConfigError("audio_localize() needs an audio device")
    room_grid = GridRegion.from_room(fieldv.room, cell_m)
    current = room_grid
    room_area = polygon_area(fieldv.room)
    vx = sum(p[0] for p in fieldv.room) / len(fieldv.room)
    vy = sum(p[1] for p in fieldv.room) / len(fieldv.room)

    def stand_point(x: float, y: float) -> Optional[Point]:
        # A boundary sliver's center can fall beyond the wall; nudge the
        # stand point toward the room middle until it is walkable.
        if point_in_polygon((x, y), fieldv.room):
            return (x, y)
        ux, uy = vx - x, vy - y
        norm = math.hypot(ux, uy)
        if norm < 1e-9:
            return None
        for step in (0.05, 0.1, 0.15, 0.2, 0.3):
            q = (x + ux / norm * step, y + uy / norm * step)
            if point_in_polygon(q, fieldv.room):
                return q
        return None

    status = "ok"
    responded = False
    for level in levels:
        pts = current.centers()
        hits = np.zeros(len(pts), dtype=bool)
        for i, (x, y) in enumerate(pts):
            q = stand_point(float(x), float(y))
            if q is not None:
                hits[i] = fieldv.audio_probe(q, level)
        if not hits.any():
            if not responded:
                status = "not-localizable"
                current = current.with_mask(np.zeros_like(current.mask))
            break
        responded = True
        mask = np.zeros_like(current.mask)
        iy, ix = np.nonzero(current.mask)
        mask[iy[hits], ix[hits]] = True
        current = current.with_mask(mask)
        if current.area() <= threshold * room_area:
            break
    return LocalizationResult(
        fieldv.mac, room_grid, current, None, [], status, fieldv.probes_run
    )
