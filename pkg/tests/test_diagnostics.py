import math

import numpy as np
import pytest
from scipy import stats

from kgarma.diagnostics import (
    golden_section,
    gph_estimate,
    ljung_box,
    local_whittle,
    local_whittle_objective,
    periodogram,
)
from kgarma.errors import DataError
from kgarma.gegenbauer import GarmaModel, GegenbauerFactor, simulate_garma

# (1 - 2L + L^2)^0.15 = (1 - L)^0.3
ARFIMA = GarmaModel(0.0, (), (), (GegenbauerFactor(0.15, 1.0),), 1.0)


def test_periodogram_of_pure_cosine():
    n = 64
    t = np.arange(n)
    freqs, ords = periodogram(np.cos(2 * math.pi * 8 * t / n))
    assert freqs[0] == 1 / n and freqs.shape == (32,)
    k = int(np.argmax(ords))
    assert freqs[k] == 8 / n
    # |sum cos e^{-i w t}|^2 = (n/2)^2
    assert ords[k] == pytest.approx((n / 2) ** 2 / (2 * math.pi * n), rel=1e-12)
    assert np.all(np.delete(ords, k) < 1e-20)


def test_periodogram_parseval():
    x = np.random.default_rng(0).standard_normal(256)
    _, ords = periodogram(x)
    dev = x - x.mean()
    total = 2 * math.pi * (2 * ords[:-1].sum() + ords[-1])
    assert total == pytest.approx(float(dev @ dev), rel=1e-10)


def test_estimators_on_fractional_noise():
    gph, lw = [], []
    for s in range(20):
        y = simulate_garma(ARFIMA, 4096, seed=s).values
        gph.append(gph_estimate(y).d_hat)
        lw.append(local_whittle(y, int(4096**0.6)).d_hat)
    assert 0.2 <= np.mean(gph) <= 0.4
    assert 0.2 <= np.mean(lw) <= 0.4


def test_estimators_on_white_noise():
    rng = np.random.default_rng(1)
    gph, lw = [], []
    for _ in range(20):
        y = rng.standard_normal(4096)
        gph.append(gph_estimate(y).d_hat)
        lw.append(local_whittle(y, int(4096**0.6)).d_hat)
    assert abs(np.mean(gph)) <= 0.07 and abs(np.mean(lw)) <= 0.07


def test_gph_standard_error_and_bandwidth():
    y = np.random.default_rng(2).standard_normal(1000)
    est = gph_estimate(y, 0.5)
    assert est.bandwidth == int(1000**0.5)
    assert est.std_error == pytest.approx(math.pi / math.sqrt(24 * est.bandwidth))
    assert est.method == "gph" and 0 <= est.p_value <= 1
    with pytest.raises(ValueError):
        gph_estimate(y, 0.95)
    with pytest.raises(DataError):
        gph_estimate(y[:40])


def test_local_whittle_bounds_and_flags():
    y = np.random.default_rng(3).standard_normal(1024)
    est = local_whittle(y, 64)
    assert est.std_error == pytest.approx(1 / 16)
    assert est.converged
    with pytest.raises(DataError):
        local_whittle(y, 5)
    with pytest.raises(DataError):
        local_whittle(y, 600)
    # a strongly persistent series pushes the estimate onto a tight bracket
    z = np.cumsum(np.cumsum(y))
    assert not local_whittle(z, 64, bounds=(-0.4, 0.4)).converged


def test_local_whittle_objective_minimum():
    y = simulate_garma(ARFIMA, 4096, seed=4).values
    obj = local_whittle_objective(y, 147)
    est = local_whittle(y, 147)
    grid = np.linspace(-0.49, 0.49, 981)
    assert abs(grid[np.argmin([obj(d) for d in grid])] - est.d_hat) <= 1e-3


def test_golden_section_quadratic():
    # function values only resolve the minimiser to about sqrt(machine eps)
    x, fx = golden_section(lambda v: (v - 0.3) ** 2 + 1, -1, 1, tol=1e-9)
    assert x == pytest.approx(0.3, abs=1e-7) and fx == pytest.approx(1.0)


def test_ljung_box_against_hand_formula():
    x = np.random.default_rng(5).standard_normal(200)
    q, p = ljung_box(x, 5)
    dev = x - x.mean()
    rho = [dev[:-k] @ dev[k:] / (dev @ dev) for k in range(1, 6)]
    expected = 200 * 202 * sum(r**2 / (200 - k) for k, r in zip(range(1, 6), rho))
    assert q == pytest.approx(expected, rel=1e-12)
    assert p == pytest.approx(stats.chi2.sf(expected, 5), rel=1e-10)


def test_ljung_box_rejects_ar_and_bad_input():
    rng = np.random.default_rng(6)
    e = rng.standard_normal(1000)
    x = np.empty(1000)
    x[0] = e[0]
    for t in range(1, 1000):
        x[t] = 0.5 * x[t - 1] + e[t]
    assert ljung_box(x, 10)[1] < 1e-6
    with pytest.raises(ValueError):
        ljung_box(x, 0)
    with pytest.raises(DataError):
        ljung_box(x[:10], 5)
    with pytest.raises(DataError):
        ljung_box(np.ones(50), 5)
