"""Least-squares and F-distribution primitives for the causality engine.

Everything here is deterministic and pure: the same inputs produce bit-identical
outputs. The F survival function is computed through the regularized incomplete
beta function (continued fraction, modified Lentz), so the package does not
depend on scipy at runtime.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Continued-fraction evaluation budget for the incomplete beta function.
BETA_TOL = 1e-10
BETA_MAX_ITER = 500

# Relative residual above which a normal-equations solution is declared
# rank-deficient (collinear regressors, constant series, ...).
_DEGENERATE_RTOL = 1e-6


@dataclass(frozen=True)
class OlsFit:
    """Result of a least-squares fit: coefficients, residual sum of squares,
    and whether the normal equations were degenerate (rank-deficient)."""

    coef: np.ndarray
    rss: float
    degenerate: bool


def ols_fit(y: np.ndarray, regressors: np.ndarray) -> OlsFit:
    """Fit ``y ~ regressors @ coef`` by ordinary least squares.

    Solves the normal equations with an LU/partial-pivoting solve. The caller
    is responsible for including an intercept column if one is wanted. A
    rank-deficient system is flagged ``degenerate`` (coefficients are then a
    zero vector and rss is the total sum of squares of ``y``).
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(regressors, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("regressor matrix and target length do not agree")
    if X.shape[0] <= X.shape[1]:
        # Fewer equations than unknowns: nothing estimable.
        return OlsFit(np.zeros(X.shape[1]), float(y @ y), True)

    xtx = X.T @ X
    xty = X.T @ y
    try:
        coef = np.linalg.solve(xtx, xty)
    except np.linalg.LinAlgError:
        return OlsFit(np.zeros(X.shape[1]), float(y @ y), True)
    if not np.all(np.isfinite(coef)):
        return OlsFit(np.zeros(X.shape[1]), float(y @ y), True)

    # Exactly singular matrices are rare in floating point; near-singular ones
    # come back from the solver with garbage coefficients. Catch them by the
    # normal-equation residual instead of an O(n^3) rank computation.
    resid = xtx @ coef - xty
    scale = float(np.linalg.norm(xtx) * np.linalg.norm(coef) + np.linalg.norm(xty))
    if scale > 0.0 and float(np.linalg.norm(resid)) > _DEGENERATE_RTOL * scale:
        return OlsFit(np.zeros(X.shape[1]), float(y @ y), True)

    r = y - X @ coef
    rss = float(r @ r)
    if rss < 0.0:  # numerical guard; rss is a sum of squares
        rss = 0.0
    return OlsFit(coef, rss, False)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < 1e-300:
        d = 1e-300
    d = 1.0 / d
    h = d
    for m in range(1, BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < 1e-300:
            d = 1e-300
        c = 1.0 + aa / c
        if abs(c) < 1e-300:
            c = 1e-300
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETA_TOL:
            return h
    # Ran out of iterations; h is still the best available estimate.
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("shape parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # The continued fraction converges fast for x below the distribution bulk;
    # use the symmetry relation on the other side.
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, max(0.0, front * _betacf(a, b, x) / a))
    return min(1.0, max(0.0, 1.0 - front * _betacf(b, a, 1.0 - x) / b))


def f_cdf(x: float, d1: float, d2: float) -> float:
    """CDF of the F distribution with (d1, d2) degrees of freedom."""
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    z = d1 * x / (d1 * x + d2)
    return betainc_reg(d1 / 2.0, d2 / 2.0, z)


def f_sf(x: float, d1: float, d2: float) -> float:
    """Survival function 1 - CDF of the F distribution, computed directly
    through the complementary incomplete beta call (no cancellation)."""
    if d1 <= 0.0 or d2 <= 0.0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    z = d2 / (d2 + d1 * x)
    return betainc_reg(d2 / 2.0, d1 / 2.0, z)
