"""Spectral and long-memory diagnostics.

Periodogram, GPH log-periodogram regression, local Whittle, Ljung-Box and
Jarque-Bera. All functions accept plain arrays or :class:`TimeSeries`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import stats

from .errors import ConvergenceError, DataError
from .timeseries import TimeSeries, jarque_bera

__all__ = [
    "LongMemoryEstimate",
    "periodogram",
    "gph_estimate",
    "local_whittle",
    "local_whittle_objective",
    "ljung_box",
    "jarque_bera",
    "golden_section",
]


def _as_array(series) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)


@dataclass(frozen=True)
class LongMemoryEstimate:
    d_hat: float
    std_error: float
    p_value: float
    bandwidth: int
    method: str
    # p-value is for the two-sided null d = 0
    converged: bool = True


def periodogram(series) -> Tuple[np.ndarray, np.ndarray]:
    """Periodogram of the demeaned series at ``f_j = j/n``, ``j = 1..n//2``.

    ``I(f_j) = |sum_t x_t exp(-2 pi i f_j t)|^2 / (2 pi n)``.
    """
    x = _as_array(series)
    n = x.shape[0]
    if n < 8:
        raise DataError("periodogram needs at least 8 observations")
    dft = np.fft.rfft(x - x.mean())
    m = n // 2
    freqs = np.arange(1, m + 1) / n
    ords = np.abs(dft[1 : m + 1]) ** 2 / (2.0 * math.pi * n)
    return freqs, ords


def _two_sided_p(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def gph_estimate(series, bandwidth_exponent: float = 0.6) -> LongMemoryEstimate:
    """Geweke/Porter-Hudak estimate using the exact regressor ``-ln(4 sin^2(pi f))``."""
    if not 0.4 < bandwidth_exponent < 0.9:
        raise ValueError("bandwidth exponent must lie in (0.4, 0.9)")
    x = _as_array(series)
    n = x.shape[0]
    m = int(math.floor(n**bandwidth_exponent))
    if m < 10:
        raise DataError(f"bandwidth m={m} too small (need >= 10)")
    freqs, ords = periodogram(x)
    m = min(m, freqs.shape[0] - 1)
    reg = -np.log(4.0 * np.sin(np.pi * freqs[:m]) ** 2)
    with np.errstate(divide="ignore"):
        y = np.log(ords[:m])
    if not np.all(np.isfinite(y)):
        raise DataError("zero periodogram ordinate inside the GPH bandwidth")
    slope = float(np.polyfit(reg, y, 1)[0])
    se = math.pi / math.sqrt(24.0 * m)
    return LongMemoryEstimate(slope, se, _two_sided_p(slope / se), m, "gph")


def golden_section(fn: Callable[[float], float], lo: float, hi: float, tol: float = 1e-6,
                   max_iter: int = 200) -> Tuple[float, float]:
    """Golden-section minimisation of a unimodal function on ``[lo, hi]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = (a + b) / 2.0
    return x, fn(x)


def local_whittle_objective(series, m: int) -> Callable[[float], float]:
    """``R(d) = ln(mean(f_j^{2d} I_j)) - 2 d mean(ln f_j)`` over the first ``m`` frequencies."""
    freqs, ords = periodogram(series)
    f = freqs[:m]
    i_m = ords[:m]
    log_f = np.log(f)
    mean_log_f = float(log_f.mean())

    def objective(d: float) -> float:
        return float(np.log(np.mean(np.exp(2.0 * d * log_f) * i_m)) - 2.0 * d * mean_log_f)

    return objective


def local_whittle(series, m: int, bounds: Tuple[float, float] = (-0.49, 0.49),
                  tol: float = 1e-6) -> LongMemoryEstimate:
    """Robinson's local Whittle estimator with golden-section search."""
    x = _as_array(series)
    n = x.shape[0]
    m = int(m)
    if not (10 <= m < n / 2):
        raise DataError(f"bandwidth m={m} must satisfy 10 <= m < n/2 = {n / 2}")
    obj = local_whittle_objective(x, m)
    d_hat, r_hat = golden_section(obj, bounds[0], bounds[1], tol)
    if not math.isfinite(r_hat):
        raise ConvergenceError("local Whittle objective is not finite")
    # an optimum pinned to the bracket edge means the bracket did not contain it
    converged = (d_hat - bounds[0] > 10 * tol) and (bounds[1] - d_hat > 10 * tol)
    se = 1.0 / (2.0 * math.sqrt(m))
    return LongMemoryEstimate(d_hat, se, _two_sided_p(d_hat / se), m, "local_whittle", converged)


def ljung_box(series, lags: int) -> Tuple[float, float]:
    """Ljung-Box ``Q = n(n+2) sum_h rho_h^2/(n-h)`` and its chi-square(lags) p-value."""
    x = _as_array(series)
    n = x.shape[0]
    lags = int(lags)
    if lags < 1:
        raise ValueError("lags must be >= 1")
    if n <= 2 * lags:
        raise DataError(f"series of length {n} too short for {lags} lags")
    dev = x - x.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DataError("zero-variance series")
    h = np.arange(1, lags + 1)
    rho = np.array([dev[:-k] @ dev[k:] for k in h]) / denom
    q = float(n * (n + 2) * np.sum(rho**2 / (n - h)))
    return q, float(stats.chi2.sf(q, lags))
