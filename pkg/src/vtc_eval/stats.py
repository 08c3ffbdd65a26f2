"""Ordinary least squares with Student-t confidence bands.

The t quantile is computed without a statistics library: a Cornish-Fisher
expansion around the normal quantile gives a starting point, refined by
Newton steps on the t CDF. The CDF uses the regularized incomplete beta
function evaluated with the modified Lentz continued fraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

from .errors import InputError

logger = logging.getLogger(__name__)

_CF_MAX_ITER = 300
_CF_EPS = 3e-16
_CF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta ``I_x(a, b)``."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_cdf(t: float, dof: float) -> float:
    tail = 0.5 * betainc(dof / 2.0, 0.5, dof / (dof + t * t))
    return 1.0 - tail if t >= 0 else tail


def t_pdf(t: float, dof: float) -> float:
    log_c = (
        math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)
        - 0.5 * math.log(dof * math.pi)
    )
    return math.exp(log_c - (dof + 1) / 2 * math.log1p(t * t / dof))


def _cornish_fisher(z: float, dof: float) -> float:
    g1 = (z**3 + z) / 4
    g2 = (5 * z**5 + 16 * z**3 + 3 * z) / 96
    g3 = (3 * z**7 + 19 * z**5 + 17 * z**3 - 15 * z) / 384
    g4 = (79 * z**9 + 776 * z**7 + 1482 * z**5 - 1920 * z**3 - 945 * z) / 92160
    return z + g1 / dof + g2 / dof**2 + g3 / dof**3 + g4 / dof**4


def t_quantile(p: float, dof: float) -> float:
    """Quantile of Student's t with ``dof`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if dof <= 0:
        raise ValueError("dof must be positive")
    if p < 0.5:
        return -t_quantile(1.0 - p, dof)
    if p == 0.5:
        return 0.0
    z = NormalDist().inv_cdf(p)
    t = _cornish_fisher(z, dof) if dof >= 1 else z
    for _ in range(50):
        step = (t_cdf(t, dof) - p) / t_pdf(t, dof)
        t_new = t - step
        if t_new <= 0:
            t_new = t / 2
        if abs(t_new - t) <= 1e-13 * max(1.0, abs(t)):
            t = t_new
            break
        t = t_new
    return t


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    n: int
    residual_std: float | None
    slope_se: float | None
    intercept_se: float | None
    x_mean: float
    sxx: float
    t_crit: float | None
    level: float = 0.95

    def predict(self, x: float) -> float:
        return self.intercept + self.slope * x

    @property
    def has_band(self) -> bool:
        return self.t_crit is not None

    def ci_band(self, x: float) -> tuple[float, float] | None:
        """Confidence interval of the mean response at ``x``."""
        if self.t_crit is None:
            return None
        half = self.t_crit * self.residual_std * math.sqrt(
            1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx
        )
        y = self.predict(x)
        return y - half, y + half

    def band_table(self, xs: Sequence[float]) -> list[tuple[float, float, float | None, float | None]]:
        rows = []
        for x in xs:
            band = self.ci_band(x)
            lo, hi = band if band is not None else (None, None)
            rows.append((x, self.predict(x), lo, hi))
        return rows


def ols_fit(points: Sequence[tuple[float, float]], level: float = 0.95) -> OlsFit:
    """Least-squares line through ``(x, y)`` points with a ``level`` CI band."""
    pts = [(float(x), float(y)) for x, y in points]
    n = len(pts)
    if n < 2:
        raise InputError("ols_fit needs at least two points")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    if sxx == 0.0 or len(set(xs)) < 2:
        raise InputError("all x values are identical")
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in pts)
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    if n == 2:
        logger.warning("two points: exact interpolation, confidence band omitted")
        return OlsFit(slope, intercept, n, None, None, None, x_mean, sxx, None, level)
    sse = math.fsum((y - intercept - slope * x) ** 2 for x, y in pts)
    s = math.sqrt(sse / (n - 2))
    slope_se = s / math.sqrt(sxx)
    intercept_se = s * math.sqrt(1.0 / n + x_mean**2 / sxx)
    t_crit = t_quantile(0.5 + level / 2.0, n - 2)
    return OlsFit(slope, intercept, n, s, slope_se, intercept_se, x_mean, sxx, t_crit, level)
