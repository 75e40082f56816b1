"""Gegenbauer log-GARCH (G-GARCH) conditional variance.

The log-variance recursion is

    ln s2_t = gamma + sum_i beta_i ln s2_{t-i} + sum_{j>=1} Lam_j (ln e2_{t-j} - tau)

with ``Lam(L) = 1 - beta(L) - P(L) psi(L)``, ``beta(L) = sum_i beta_i L^i``,
``psi(L) = 1 - sum_i psi_i L^i`` and ``P(L) = prod_i (1 - 2 nu_i L + L^2)^{d_i}``.
Writing ``beta(L)`` without a leading one keeps ``Lam_0 = 0`` so the
recursion is causal. Positivity of ``s2_t`` is structural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import signal

from .errors import ConvergenceError, DataError, ModelError
from .gegenbauer import GarmaModel, GegenbauerFactor, gegenbauer_coefficients, simulate_garma
from .optim import minimize_with_restarts
from .timeseries import TimeSeries
from .wavelets import detect_gegenbauer_frequencies

__all__ = [
    "GAUSSIAN_TAU",
    "GGarchModel",
    "GGarchConfig",
    "GGarchFit",
    "ggarch_filter_weights",
    "ggarch_variance_path",
    "ggarch_loglik",
    "fit_ggarch",
    "ggarch_variance_forecast",
    "simulate_ggarch",
    "simulate_garma_ggarch",
]

GAUSSIAN_TAU = -1.27
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GGarchModel:
    gamma: float = 0.0
    beta: Tuple[float, ...] = ()
    psi: Tuple[float, ...] = ()
    variance_factors: Tuple[GegenbauerFactor, ...] = ()
    tau: float = GAUSSIAN_TAU
    season_length: int = 1
    truncation: int = 1000
    innovation: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "psi", tuple(float(p) for p in self.psi))
        object.__setattr__(self, "variance_factors", tuple(self.variance_factors))
        if self.truncation < 100:
            raise ModelError("truncation must be >= 100")
        if not abs(sum(self.beta)) < 1.0:
            raise ModelError("|sum(beta)| must be < 1")
        for f in self.variance_factors:
            if not f.d < 0.5:
                raise ModelError(f"variance factor exponent d={f.d} must be < 1/2")
        if self.innovation != "gaussian":
            raise ModelError("only Gaussian innovations are supported")

    @property
    def p(self) -> int:
        return len(self.beta)

    @property
    def q(self) -> int:
        return len(self.psi)


def _filter_poly(model: GGarchModel, n: int) -> np.ndarray:
    """Coefficients of ``P(L) psi(L)`` to lag ``n - 1``."""
    w = np.zeros(n)
    w[0] = 1.0
    for f in model.variance_factors:
        if f.d != 0.0:
            w = np.convolve(w, gegenbauer_coefficients(-f.d, f.nu, n))[:n]
    if model.psi:
        w = np.convolve(w, np.concatenate(([1.0], -np.asarray(model.psi))))[:n]
    return w


def ggarch_filter_weights(model: GGarchModel) -> np.ndarray:
    """``Lam_0..Lam_M`` of ``1 - beta(L) - P(L) psi(L)``; ``Lam_0`` is exactly 0."""
    m = model.truncation
    lam = -_filter_poly(model, m + 1)
    lam[0] = 0.0
    for i, b in enumerate(model.beta, start=1):
        if i <= m:
            lam[i] -= b
    return lam


def _residual_values(residuals) -> np.ndarray:
    return residuals.values if isinstance(residuals, TimeSeries) else np.asarray(residuals, dtype=float)


def _log_sq(eps: np.ndarray, tau: float) -> np.ndarray:
    var = float(np.mean(eps**2))
    floor = 1e-12 * var if var > 0 else 1e-300
    return np.log(np.maximum(eps**2, floor)) - tau


def _log_variance_path(model: GGarchModel, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    m = lam.shape[0] - 1
    init = float(x.mean())
    ext = np.concatenate((np.full(m, init), x))
    arch = signal.convolve(ext, lam)[m : m + n]
    drive = model.gamma + arch
    if not model.beta:
        return drive
    a = np.concatenate(([1.0], -np.asarray(model.beta)))
    zi = signal.lfiltic([1.0], a, y=np.full(model.p, init))
    return signal.lfilter([1.0], a, drive, zi=zi)[0]


def ggarch_variance_path(model: GGarchModel, residuals) -> np.ndarray:
    """Conditional variances ``s2_t`` for every observation of ``residuals``.

    Pre-sample log-variances and log-squared residuals are set to the
    sample mean of ``ln e2 - tau``; ``e2`` is floored at ``1e-12`` times the
    mean square so exact zeros stay finite.
    """
    eps = _residual_values(residuals)
    if eps.shape[0] < 2:
        raise DataError("need at least two residuals")
    x = _log_sq(eps, model.tau)
    return np.exp(_log_variance_path(model, x, ggarch_filter_weights(model)))


def _loglik_from_path(eps: np.ndarray, log_s2: np.ndarray, skip: int) -> float:
    e = eps[skip:]
    ls = log_s2[skip:]
    return float(np.sum(-0.5 * _LOG_2PI - 0.5 * ls - 0.5 * e**2 * np.exp(-ls)))


def _burn(model: GGarchModel) -> int:
    return max(model.p, 50)


def ggarch_loglik(model: GGarchModel, residuals) -> float:
    """Gaussian quasi log-likelihood, skipping the first ``max(p, 50)`` terms."""
    eps = _residual_values(residuals)
    skip = _burn(model)
    if eps.shape[0] <= skip:
        raise DataError(f"need more than {skip} residuals for the likelihood")
    x = _log_sq(eps, model.tau)
    ll = _loglik_from_path(eps, _log_variance_path(model, x, ggarch_filter_weights(model)), skip)
    if not math.isfinite(ll):
        raise ConvergenceError("non-finite log-likelihood")
    return ll


def ggarch_variance_forecast(model: GGarchModel, residual_history, horizon: int) -> np.ndarray:
    """Iterated variance forecasts for steps ``1..horizon`` past the history.

    Unobserved ``ln e2 - tau`` terms are replaced by the forecast log-variance.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    eps = _residual_values(residual_history)
    x = _log_sq(eps, model.tau)
    lam = ggarch_filter_weights(model)
    log_s2 = _log_variance_path(model, x, lam)
    m = lam.shape[0] - 1
    n = x.shape[0]
    init = float(x.mean())
    xs = np.concatenate((np.full(m, init), x, np.zeros(horizon)))
    ls = np.concatenate((np.full(max(model.p, 1), init), log_s2, np.zeros(horizon)))
    off = max(model.p, 1)
    rev = lam[1:][::-1]
    beta = np.asarray(model.beta)
    out = np.empty(horizon)
    for h in range(horizon):
        t = n + h
        val = model.gamma + rev @ xs[t : t + m]
        if model.p:
            val += beta @ ls[off + t - model.p : off + t][::-1]
        ls[off + t] = val
        xs[m + t] = val
        out[h] = val
    return np.exp(out)


def simulate_ggarch(model: GGarchModel, n: int, seed: int = 0, burn_in: Optional[int] = None,
                    z=None) -> Tuple[np.ndarray, np.ndarray]:
    """Simulate ``(eps, s2)`` of length ``n`` from the recursion with Gaussian ``z``."""
    burn = model.truncation if burn_in is None else int(burn_in)
    total = n + burn
    if z is None:
        z = np.random.default_rng(seed).standard_normal(total)
    else:
        z = np.asarray(z, dtype=float)
        if z.shape[0] != total:
            raise ValueError(f"expected {total} shocks, got {z.shape[0]}")
    lam = ggarch_filter_weights(model)
    m = lam.shape[0] - 1
    denom = 1.0 - sum(model.beta) - float(lam.sum())
    init = model.gamma / denom if abs(denom) > 1e-8 else 0.0
    xs = np.concatenate((np.full(m, init), np.zeros(total)))
    ls = np.concatenate((np.full(max(model.p, 1), init), np.zeros(total)))
    off = max(model.p, 1)
    rev = lam[1:][::-1]
    beta = np.asarray(model.beta)
    log_z2 = np.log(z**2)
    for t in range(total):
        val = model.gamma + rev @ xs[t : t + m]
        if model.p:
            val += beta @ ls[off + t - model.p : off + t][::-1]
        ls[off + t] = val
        xs[m + t] = val + log_z2[t] - model.tau
    log_s2 = ls[off + burn :]
    s2 = np.exp(log_s2)
    return np.sqrt(s2) * z[burn:], s2


def simulate_garma_ggarch(garma: GarmaModel, ggarch: GGarchModel, n: int, seed: int = 0,
                          burn_in: int = 2000, truncation: int = 2000):
    """Joint simulation: G-GARCH innovations driven through the GARMA filter.

    Returns ``(y, eps, s2)`` with ``y`` a :class:`TimeSeries`; ``garma.sigma2``
    is ignored because the innovation variance comes from the G-GARCH path.
    """
    eps, s2 = simulate_ggarch(ggarch, n + burn_in, seed=seed)
    y = simulate_garma(garma, n, burn_in=burn_in, truncation=truncation, innovations=eps)
    return y.with_values(y.values, label="simulated GARMA-G-GARCH"), eps[burn_in:], s2[burn_in:]


# --- estimation --------------------------------------------------------------

@dataclass(frozen=True)
class GGarchConfig:
    p: int = 1
    q: int = 1
    truncation: int = 1000
    tau: float = GAUSSIAN_TAU
    season_length: int = 1
    refine_frequencies: bool = False
    n_restarts: int = 3
    seed: int = 0
    tol: float = 1e-6
    maxiter: int = 2000
    gamma_bounds: Tuple[float, float] = (-50.0, 50.0)
    coef_bound: float = 0.999
    d_bounds: Tuple[float, float] = (0.0, 0.49)
    nu_margin: float = 1e-6


@dataclass(frozen=True)
class GGarchFit:
    model: GGarchModel
    loglik: float
    converged: bool
    n_evals: int
    frequencies: Tuple[float, ...]
    estimates: Dict[str, float] = field(default_factory=dict)
    bound_hits: Dict[str, bool] = field(default_factory=dict)


def fit_ggarch(residuals, k: int = 0, fixed_frequencies=None, config: GGarchConfig = GGarchConfig()) -> GGarchFit:
    """Quasi-maximum-likelihood fit of a k-factor G-GARCH(p, q).

    Variance-side frequencies default to the ``k`` strongest periodogram
    peaks of ``ln e2``; ``k = 0`` gives a plain log-GARCH.
    """
    eps = _residual_values(residuals)
    if k < 0:
        raise ValueError("k must be >= 0")
    skip = max(config.p, 50)
    if eps.shape[0] <= skip + 10:
        raise DataError("too few residuals to fit the variance model")
    x = _log_sq(eps, config.tau)
    if fixed_frequencies is not None:
        freqs = np.atleast_1d(np.asarray(fixed_frequencies, dtype=float))
        if freqs.shape[0] != k:
            raise ValueError(f"{freqs.shape[0]} fixed frequencies given for k={k}")
    elif k > 0:
        freqs = detect_gegenbauer_frequencies(x, k)
    else:
        freqs = np.zeros(0)
    nus0 = np.clip(np.cos(2.0 * np.pi * freqs), -1.0, 1.0)
    p, q = config.p, config.q
    refine = config.refine_frequencies and fixed_frequencies is None and k > 0
    nu_lim = 1.0 - config.nu_margin

    def build(theta) -> GGarchModel:
        gamma = theta[0]
        beta = theta[1 : 1 + p]
        psi = theta[1 + p : 1 + p + q]
        d = theta[1 + p + q : 1 + p + q + k]
        nus = theta[1 + p + q + k :] if refine else nus0
        facs = tuple(GegenbauerFactor(float(di), float(ni)) for di, ni in zip(d, nus))
        return GGarchModel(float(gamma), tuple(beta), tuple(psi), facs, config.tau,
                           config.season_length, config.truncation)

    def negll(theta) -> float:
        if p and not abs(float(np.sum(theta[1 : 1 + p]))) < 1.0:
            return math.inf
        try:
            model = build(theta)
        except ModelError:
            return math.inf
        ls = _log_variance_path(model, x, ggarch_filter_weights(model))
        return -_loglik_from_path(eps, ls, skip)

    cb = config.coef_bound
    bounds = [config.gamma_bounds] + [(-cb, cb)] * (p + q) + [config.d_bounds] * k
    beta0 = np.full(p, 0.1)
    psi0 = np.full(q, 0.1)
    d0 = np.full(k, 0.1)
    lp1 = 1.0
    for nu in nus0:
        lp1 *= (2.0 - 2.0 * nu) ** 0.1
    lp1 *= 1.0 - psi0.sum()
    theta0 = np.concatenate(([float(x.mean()) * lp1], beta0, psi0, d0))
    if refine:
        bounds += [(-nu_lim, nu_lim)] * k
        theta0 = np.concatenate((theta0, np.clip(nus0, -nu_lim, nu_lim)))
    res = minimize_with_restarts(negll, theta0, bounds, config.n_restarts, config.seed, 0.1,
                                 config.tol, config.maxiter)
    if not math.isfinite(res.fun) or res.fun >= 1e299:
        raise ConvergenceError("G-GARCH likelihood could not be evaluated at any start point")
    model = build(res.x)
    names = ["gamma"] + [f"beta{i + 1}" for i in range(p)] + [f"psi{i + 1}" for i in range(q)]
    names += [f"d_v{i + 1}" for i in range(k)]
    if refine:
        names += [f"nu_v{i + 1}" for i in range(k)]
    estimates = {nm: float(v) for nm, v in zip(names, res.x)}
    hits = {nm: bool(min(abs(v - lo), abs(hi - v)) < 1e-6) for nm, v, (lo, hi) in zip(names, res.x, bounds)}
    out_freqs = tuple(f.frequency for f in model.variance_factors)
    return GGarchFit(model, -res.fun, res.converged, res.n_evals, out_freqs, estimates, hits)
