"""Gegenbauer long-memory filters and the k-factor GARMA mean model.

Polynomial conventions used throughout::

    Phi(L)   = 1 - ar[0] L - ar[1] L^2 - ...
    Theta(L) = 1 + ma[0] L + ma[1] L^2 + ...
    factor_i(L) = (1 - 2 nu_i L + L^2)^{d_i}

so that ``Phi(L) prod_i (1 - 2 nu_i L + L^2)^{d_i} (y_t - mu) = Theta(L) eps_t``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import signal

from .errors import ModelError
from .timeseries import TimeSeries

__all__ = [
    "GegenbauerFactor",
    "GarmaModel",
    "gegenbauer_coefficients",
    "long_memory_weights",
    "garma_spectral_density",
    "simulate_garma",
    "garma_residuals",
    "garma_mean_forecast",
    "DEFAULT_TRUNCATION",
]

DEFAULT_TRUNCATION = 2000
_ROOT_MARGIN = 1e-8


@dataclass(frozen=True)
class GegenbauerFactor:
    """One factor ``(1 - 2 nu L + L^2)^d``; its pole sits at ``omega = arccos(nu)``."""

    d: float
    nu: float

    def __post_init__(self):
        if not abs(self.nu) <= 1.0:
            raise ModelError(f"|nu| must be <= 1, got {self.nu}")

    @classmethod
    def from_frequency(cls, d: float, frequency: float) -> "GegenbauerFactor":
        """Build from a frequency in cycles per sample (``f = omega / 2 pi``)."""
        return cls(d, float(np.clip(math.cos(2.0 * math.pi * frequency), -1.0, 1.0)))

    @property
    def omega(self) -> float:
        return math.acos(self.nu)

    @property
    def frequency(self) -> float:
        return self.omega / (2.0 * math.pi)

    @property
    def period(self) -> float:
        f = self.frequency
        return math.inf if f == 0.0 else 1.0 / f

    @property
    def is_stationary(self) -> bool:
        if abs(self.nu) < 1.0:
            return self.d < 0.5
        return self.d < 0.25


def _ar_poly(ar) -> np.ndarray:
    return np.concatenate(([1.0], -np.asarray(ar, dtype=float)))


def _ma_poly(ma) -> np.ndarray:
    return np.concatenate(([1.0], np.asarray(ma, dtype=float)))


def _roots_outside(poly: np.ndarray) -> bool:
    """True if every root of ``poly[0] + poly[1] z + ...`` has modulus > 1 + margin."""
    trimmed = np.trim_zeros(poly, "b")
    if trimmed.shape[0] <= 1:
        return True
    roots = np.roots(trimmed[::-1])
    return bool(np.all(np.abs(roots) > 1.0 + _ROOT_MARGIN))


@dataclass(frozen=True)
class GarmaModel:
    mu: float = 0.0
    ar: Tuple[float, ...] = ()
    ma: Tuple[float, ...] = ()
    factors: Tuple[GegenbauerFactor, ...] = ()
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "ar", tuple(float(a) for a in self.ar))
        object.__setattr__(self, "ma", tuple(float(m) for m in self.ma))
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.sigma2 > 0:
            raise ModelError("innovation variance must be positive")

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def ar_stationary(self) -> bool:
        return _roots_outside(_ar_poly(self.ar))

    @property
    def ma_invertible(self) -> bool:
        return _roots_outside(_ma_poly(self.ma))

    @property
    def is_stationary(self) -> bool:
        return self.ar_stationary and all(f.is_stationary for f in self.factors)

    def check_stationary(self) -> None:
        if not self.ar_stationary:
            raise ModelError("AR polynomial has a root on or inside the unit circle")
        for f in self.factors:
            if not f.is_stationary:
                raise ModelError(f"non-stationary Gegenbauer factor d={f.d}, nu={f.nu}")


def gegenbauer_coefficients(d: float, nu: float, n_terms: int) -> np.ndarray:
    """Coefficients ``C_0..C_{n-1}`` of ``(1 - 2 nu z + z^2)^{-d}``.

    For ``|nu| < 1`` the three-term Gegenbauer recursion is used. At
    ``nu = +-1`` the factor is ``(1 -+ z)^2`` and the expansion is the
    binomial series of ``(1 -+ z)^{-2d}``, which avoids the cancellation the
    recursion suffers there.
    """
    if not abs(nu) <= 1.0:
        raise ModelError(f"|nu| must be <= 1, got {nu}")
    n_terms = int(n_terms)
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    c = np.empty(n_terms)
    c[0] = 1.0
    if n_terms == 1:
        return c
    if abs(nu) == 1.0:
        j = np.arange(1, n_terms)
        c[1:] = np.cumprod((j - 1 + 2.0 * d) / j * nu)
        return c
    c[1] = 2.0 * d * nu
    two_nu = 2.0 * nu
    dm1 = d - 1.0
    for j in range(2, n_terms):
        c[j] = two_nu * (1.0 + dm1 / j) * c[j - 1] - (1.0 + 2.0 * dm1 / j) * c[j - 2]
    return c


def _truncated_convolve(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    return np.convolve(a[:n], b[:n])[:n]


def long_memory_weights(
    factors: Sequence[GegenbauerFactor],
    ar=(),
    ma=(),
    sign: int = 1,
    n_terms: int = DEFAULT_TRUNCATION,
) -> np.ndarray:
    """Truncated MA(inf) (``sign=+1``) or AR(inf) (``sign=-1``) weights.

    ``sign=+1`` gives psi with ``y_t - mu = sum_j psi_j eps_{t-j}``;
    ``sign=-1`` gives pi with ``eps_t = sum_j pi_j (y_{t-j} - mu)``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    n_terms = int(n_terms)
    if n_terms < 1:
        raise ValueError("n_terms must be >= 1")
    phi = _ar_poly(ar)
    theta = _ma_poly(ma)
    w = np.zeros(n_terms)
    w[0] = 1.0
    for f in factors:
        w = _truncated_convolve(w, gegenbauer_coefficients(sign * f.d, f.nu, n_terms), n_terms)
    if sign == 1:
        if not _roots_outside(phi):
            raise ModelError("AR polynomial is not stationary; MA(inf) weights diverge")
        return signal.lfilter(theta, phi, w)
    if not _roots_outside(theta):
        raise ModelError("MA polynomial is not invertible; AR(inf) weights diverge")
    return signal.lfilter(phi, theta, w)


def _poly_on_circle(poly: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    k = np.arange(poly.shape[0])
    return np.exp(-1j * np.outer(omegas, k)) @ poly


def garma_spectral_density(model: GarmaModel, omegas, pole_tol: float = 1e-12) -> np.ndarray:
    """Spectral density ``f(omega)`` (integrates over ``[-pi, pi]`` to the variance)."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    for f in model.factors:
        if f.d > 0 and np.any(np.abs(w - f.omega) < pole_tol):
            raise ModelError(f"frequency grid hits the pole at omega={f.omega}")
    return _spectral_density_unchecked(model, w)


def _spectral_density_unchecked(model: GarmaModel, w: np.ndarray) -> np.ndarray:
    dens = np.full(w.shape, model.sigma2 / (2.0 * np.pi))
    if model.ma:
        dens *= np.abs(_poly_on_circle(_ma_poly(model.ma), w)) ** 2
    if model.ar:
        dens /= np.abs(_poly_on_circle(_ar_poly(model.ar), w)) ** 2
    cw = np.cos(w)
    for f in model.factors:
        if f.d != 0.0:
            dens *= (4.0 * (cw - f.nu) ** 2) ** (-f.d)
    return dens


def simulate_garma(
    model: GarmaModel,
    n: int,
    burn_in: int = DEFAULT_TRUNCATION,
    seed: int = 0,
    truncation: int = DEFAULT_TRUNCATION,
    innovations=None,
) -> TimeSeries:
    """Simulate ``n`` observations through the truncated MA(inf) filter.

    Gaussian innovations are drawn from ``numpy.random.default_rng(seed)``
    unless ``innovations`` (length ``n + burn_in``) is supplied.
    """
    model.check_stationary()
    if burn_in < truncation:
        raise ValueError(f"burn_in ({burn_in}) must be >= truncation ({truncation})")
    psi = long_memory_weights(model.factors, model.ar, model.ma, +1, truncation)
    total = n + burn_in
    if innovations is None:
        rng = np.random.default_rng(seed)
        eps = rng.normal(0.0, math.sqrt(model.sigma2), total)
    else:
        eps = np.asarray(innovations, dtype=float)
        if eps.shape[0] != total:
            raise ValueError(f"expected {total} innovations, got {eps.shape[0]}")
    y = signal.fftconvolve(eps, psi)[:total]
    return TimeSeries(model.mu + y[burn_in:], label="simulated GARMA")


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)


def garma_residuals(model: GarmaModel, series, truncation: int = DEFAULT_TRUNCATION) -> TimeSeries:
    """One-step innovations via the AR(inf) filter with zero pre-sample deviations."""
    if truncation < 100:
        raise ValueError("truncation must be >= 100")
    y = _values(series)
    if y.shape[0] < 2 * truncation:
        warnings.warn(
            f"series length {y.shape[0]} is shorter than twice the truncation ({truncation})",
            RuntimeWarning,
            stacklevel=2,
        )
    pi = np.trim_zeros(long_memory_weights(model.factors, model.ar, model.ma, -1, truncation), "b")
    dev = y - model.mu
    eps = signal.convolve(dev, pi)[: y.shape[0]]
    if isinstance(series, TimeSeries):
        return series.with_values(eps, label="GARMA residuals")
    return TimeSeries(eps, label="GARMA residuals")


def garma_mean_forecast(
    model: GarmaModel, history, horizon: int, truncation: int = DEFAULT_TRUNCATION
) -> np.ndarray:
    """Iterated one-step AR(inf) forecasts for steps ``1..horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    pi = long_memory_weights(model.factors, model.ar, model.ma, -1, truncation)
    lagw = -pi[1:]
    y = _values(history)
    n = y.shape[0]
    m = lagw.shape[0]
    # leading zeros play the role of pre-sample deviations
    ext = np.zeros(m + n + horizon)
    ext[m : m + n] = y - model.mu
    rev = lagw[::-1]
    for h in range(horizon):
        t = m + n + h
        ext[t] = rev @ ext[t - m : t]
    return model.mu + ext[m + n :]
