"""Independent reference implementations used only by the tests.

These deliberately avoid the code paths used by the package: least squares is
solved by gradient-free coordinate refinement (function evaluations only, no
linear algebra), the F CDF by adaptive quadrature of a hand-written density,
and geometry by shapely. Keep it that way — the whole point is that the
package and the oracle can only agree by both being right.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def lstsq_bruteforce(y, X, max_sweeps: int = 5000):
    """Minimize ||y - X c||^2 by cyclic coordinate descent with an exact
    three-point parabola line search (gradient-free; no matrix solves).

    For a quadratic objective each 1-D step lands on the coordinate minimum
    up to roundoff, so the sweep converges linearly to the global optimum.
    Returns (coef, rss).
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    k = X.shape[1]
    coef = np.zeros(k)

    def rss(c):
        r = y - X @ c
        return float(r @ r)

    f0 = rss(coef)
    stall = 0
    for _ in range(max_sweeps):
        f_before = f0
        for j in range(k):
            cj = coef[j]
            h = 1e-4 * (1.0 + abs(cj))
            coef[j] = cj + h
            fp = rss(coef)
            coef[j] = cj - h
            fm = rss(coef)
            coef[j] = cj
            denom = fp - 2.0 * f0 + fm
            if denom <= 0.0:
                continue
            coef[j] = cj + 0.5 * h * (fm - fp) / denom
            f0 = rss(coef)
        if f_before - f0 <= 1e-15 * (abs(f0) + 1e-300):
            stall += 1
            if stall >= 3:
                break
        else:
            stall = 0
    return coef, f0


def f_cdf_quadrature(x: float, d1: float, d2: float) -> float:
    """CDF of the F(d1, d2) distribution by adaptive quadrature of its
    density. Substitutes t = u^2 when d1 < 2 to regularize the origin."""
    if x <= 0.0:
        return 0.0
    ln_c = (
        math.lgamma((d1 + d2) / 2.0)
        - math.lgamma(d1 / 2.0)
        - math.lgamma(d2 / 2.0)
        + (d1 / 2.0) * math.log(d1 / d2)
    )

    def pdf(t: float) -> float:
        if t <= 0.0:
            return 0.0
        return math.exp(
            ln_c + (d1 / 2.0 - 1.0) * math.log(t) - ((d1 + d2) / 2.0) * math.log1p(d1 * t / d2)
        )

    if d1 < 2.0:
        val, _ = integrate.quad(
            lambda u: pdf(u * u) * 2.0 * u, 0.0, math.sqrt(x), epsabs=1e-12, epsrel=1e-12, limit=400
        )
    else:
        val, _ = integrate.quad(pdf, 0.0, x, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def dedup_bruteforce(records, horizon_us: int):
    """Quadratic pairwise duplicate scan: record i is dropped when any
    earlier input record within horizon_us has the same (seq, payload)."""
    kept = []
    for i, r in enumerate(records):
        dup = False
        if r.seq is not None:
            for q in records[:i]:
                if (
                    q.seq == r.seq
                    and q.payload == r.payload
                    and r.timestamp_us - q.timestamp_us <= horizon_us
                ):
                    dup = True
                    break
        if not dup:
            kept.append(r)
    return kept


def sector_bruteforce(origin, heading_deg, fov_deg, range_m, point):
    """Range/angle sector membership from first principles: Euclidean
    distance plus a wrapped angular difference, nothing shared with the
    package's geometry helpers."""
    dx = point[0] - origin[0]
    dy = point[1] - origin[1]
    d = math.sqrt(dx * dx + dy * dy)
    if d > range_m:
        return False
    if d < 1e-12 or fov_deg >= 360.0:
        return True
    bearing = math.degrees(math.atan2(dy, dx))
    diff = abs((bearing - heading_deg + 180.0) % 360.0 - 180.0)
    return diff <= fov_deg / 2.0
