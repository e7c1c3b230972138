"""Small 2-D helpers: polygons, angles, sector coverage.

Rooms are simple polygons given as vertex lists in meters. Points on the
polygon boundary count as inside (sensors are wall-mounted).
"""
from __future__ import annotations

import math

import numpy as np

_EPS = 1e-9

Point = tuple[float, float]


def polygon_area(poly: list[Point]) -> float:
    """Unsigned shoelace area."""
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return abs(acc) / 2.0


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    (px, py), (ax, ay), (bx, by) = p, a, b
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > _EPS * max(1.0, abs(bx - ax) + abs(by - ay)):
        return False
    if min(ax, bx) - _EPS <= px <= max(ax, bx) + _EPS and min(ay, by) - _EPS <= py <= max(ay, by) + _EPS:
        return True
    return False


def point_in_polygon(p: Point, poly: list[Point]) -> bool:
    """Ray casting with an explicit boundary check (boundary counts inside)."""
    n = len(poly)
    for i in range(n):
        if _on_segment(p, poly[i], poly[(i + 1) % n]):
            return True
    x, y = p
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def _segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool:
    def orient(p: Point, q: Point, r: Point) -> float:
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def polygon_is_simple(poly: list[Point]) -> bool:
    """True when the polygon has >= 3 vertices, positive area, and no two
    non-adjacent edges crossing."""
    n = len(poly)
    if n < 3 or polygon_area(poly) <= _EPS:
        return False
    edges = [(poly[i], poly[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j == (i + 1) % n) or (i == (j + 1) % n):
                continue
            if i == 0 and j == n - 1:
                continue
            if _segments_properly_intersect(*edges[i], *edges[j]):
                return False
    return True


def heading_deg(from_pt: Point, to_pt: Point) -> float:
    """Compass-free heading: degrees CCW from +x, in [0, 360)."""
    ang = math.degrees(math.atan2(to_pt[1] - from_pt[1], to_pt[0] - from_pt[0]))
    return ang % 360.0


def ang_diff_deg(a: float, b: float) -> float:
    """Absolute angular difference in degrees, in [0, 180]."""
    d = (a - b) % 360.0
    return min(d, 360.0 - d)


def dist(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def sector_contains(
    origin: Point,
    heading: float,
    fov_deg: float,
    max_range: float,
    point: Point,
) -> bool:
    """Is ``point`` within the range/angle sector anchored at ``origin``?
    A point at (numerically) zero distance is always contained."""
    d = dist(origin, point)
    if d > max_range:
        return False
    if d < 1e-12 or fov_deg >= 360.0:
        return True
    return ang_diff_deg(heading_deg(origin, point), heading) <= fov_deg / 2.0


def half_plane_mask(
    origin: Point,
    heading: float,
    max_range: float,
    centers: np.ndarray,
    zero_dist: float = 1e-9,
) -> np.ndarray:
    """Vectorized membership of points in the forward half-plane (within
    +/- 90 degrees of ``heading``) clipped to ``max_range``."""
    dx = centers[:, 0] - origin[0]
    dy = centers[:, 1] - origin[1]
    d = np.hypot(dx, dy)
    hx, hy = math.cos(math.radians(heading)), math.sin(math.radians(heading))
    forward = dx * hx + dy * hy
    return (d <= max_range) & ((forward >= 0.0) | (d <= zero_dist))
