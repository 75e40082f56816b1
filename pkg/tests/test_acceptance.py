"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import math
import time

import mpmath
import numpy as np

from kgarma.bench import MeanSpec, SplitSpec, VarianceSpec, evaluate_metrics, run_pipeline
from kgarma.bundle import load_bundle, save_bundle
from kgarma.cli import main
from kgarma.diagnostics import gph_estimate, local_whittle
from kgarma.gegenbauer import GarmaModel, GegenbauerFactor, gegenbauer_coefficients, long_memory_weights, simulate_garma
from kgarma.ggarch import GGarchConfig, GGarchModel, fit_ggarch, ggarch_filter_weights, ggarch_variance_path, simulate_garma_ggarch, simulate_ggarch
from kgarma.llwnn import PsoConfig, llwnn_forward, llwnn_gradients, llwnn_init, pso_train, train_bp
from kgarma.wavelets import WaveletBasis, WhittleConfig, daubechies_filters, dwpt, idwpt, wavelet_whittle_fit


def series_oracle(d, nu, n):
    """Brute-force expansion of (1 - u)^-d with u = 2 nu z - z^2 in 50-digit arithmetic."""
    with mpmath.workdps(50):
        d, nu = mpmath.mpf(d), mpmath.mpf(nu)
        u = [mpmath.mpf(0)] * n
        u[1] = 2 * nu
        if n > 2:
            u[2] = mpmath.mpf(-1)
        out = [mpmath.mpf(0)] * n
        power = [mpmath.mpf(1)] + [mpmath.mpf(0)] * (n - 1)
        coef = mpmath.mpf(1)
        # u^k starts at z^k, so k < n terms suffice
        for k in range(n):
            for j in range(n):
                out[j] += coef * power[j]
            nxt = [mpmath.mpf(0)] * n
            for j in range(n):
                if power[j]:
                    for i in (1, 2):
                        if j + i < n:
                            nxt[j + i] += power[j] * u[i]
            power = nxt
            coef = coef * (d + k) / (k + 1)
        return np.array([float(c) for c in out])


def test_criterion_01_gegenbauer_coefficients(verdict):
    grid = [(d, nu) for d in (-0.2, 0.1, 0.24, 0.45) for nu in (-0.9, 0.0, 0.5, 1.0)]
    oracles = {g: series_oracle(*g, 64) for g in grid}
    t = time.perf_counter()
    got = {g: gegenbauer_coefficients(*g, 64) for g in grid}
    elapsed = time.perf_counter() - t
    err = max(np.max(np.abs(got[g] - oracles[g])) for g in grid)
    ok = err <= 1e-10 and elapsed < 1.0
    verdict(1, ok, f"max |recursion - series| = {err:.2e}, {elapsed * 1e3:.1f} ms")
    assert ok


def test_criterion_02_filter_inverse_pair(verdict):
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    worst = 0.0
    for i in range(20):
        k = 1 + i % 2
        factors = []
        for _ in range(k):
            nu = rng.uniform(-1, 1)
            factors.append(GegenbauerFactor(rng.uniform(-0.45, 0.45), nu))
        psi = long_memory_weights(tuple(factors), (), (), +1, 4000)
        pi = long_memory_weights(tuple(factors), (), (), -1, 4000)
        conv = np.convolve(pi[:64], psi[:64])[:64]
        conv[0] -= 1.0
        worst = max(worst, float(np.max(np.abs(conv))))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-6 and elapsed < 10
    verdict(2, ok, f"max |pi * psi - delta| over 64 lags = {worst:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_03_dwpt_energy_and_reconstruction(verdict):
    rng = np.random.default_rng(3)
    t = time.perf_counter()
    e_energy = e_recon = 0.0
    cases = 0
    for n in (64, 256, 1024):
        for order in (1, 2, 3, 4):
            filt = daubechies_filters(order)
            for depth in (1, 2, 3, 4):
                for _ in range(100 // 12 + 1):
                    x = rng.standard_normal(n)
                    tree = dwpt(x, filt, depth)
                    energy = float(x @ x)
                    for j in range(1, depth + 1):
                        level = sum(float(c @ c) for c in tree.level(j))
                        e_energy = max(e_energy, abs(level - energy) / energy)
                    back = idwpt(tree, WaveletBasis.level(depth))
                    e_recon = max(e_recon, float(np.max(np.abs(back - x))))
                    cases += 1
    elapsed = time.perf_counter() - t
    ok = e_energy <= 1e-10 and e_recon <= 1e-8 and elapsed < 10 and cases >= 100
    verdict(3, ok, f"{cases} inputs, energy rel err {e_energy:.1e}, reconstruction {e_recon:.1e}, {elapsed:.2f} s")
    assert ok


def test_criterion_04_wavelet_whittle_recovery(verdict):
    w0 = math.pi / 5
    model = GarmaModel(0.0, (), (), (GegenbauerFactor(0.3, math.cos(w0)),), 1.0)
    t = time.perf_counter()
    ds, ws = [], []
    for s in range(50):
        y = simulate_garma(model, 4096, seed=s)
        f = wavelet_whittle_fit(y, 1, None, WhittleConfig(seed=s)).model.factors[0]
        ds.append(f.d)
        ws.append(abs(f.omega - w0))
    elapsed = time.perf_counter() - t
    ok = 0.23 <= np.mean(ds) <= 0.37 and np.mean(ws) <= 0.05 and elapsed < 300
    verdict(4, ok, f"mean d = {np.mean(ds):.4f}, mean |w - pi/5| = {np.mean(ws):.4f}, {elapsed:.1f} s")
    assert ok


def test_criterion_05_gph_and_local_whittle(verdict):
    arfima = GarmaModel(0.0, (), (), (GegenbauerFactor(0.15, 1.0),), 1.0)  # (1 - L)^-0.3
    m = int(4096**0.6)
    rng = np.random.default_rng(5)
    t = time.perf_counter()
    est = {"gph": [], "lw": [], "gph0": [], "lw0": []}
    for s in range(50):
        y = simulate_garma(arfima, 4096, seed=s).values
        est["gph"].append(gph_estimate(y, 0.6).d_hat)
        est["lw"].append(local_whittle(y, m).d_hat)
        z = rng.standard_normal(4096)
        est["gph0"].append(gph_estimate(z, 0.6).d_hat)
        est["lw0"].append(local_whittle(z, m).d_hat)
    elapsed = time.perf_counter() - t
    mean = {k: float(np.mean(v)) for k, v in est.items()}
    ok = (0.2 <= mean["gph"] <= 0.4 and 0.2 <= mean["lw"] <= 0.4 and abs(mean["gph0"]) <= 0.07
          and abs(mean["lw0"]) <= 0.07 and elapsed < 60)
    verdict(5, ok, "fractional GPH {gph:.3f} LW {lw:.3f}; white GPH {gph0:.3f} LW {lw0:.3f}".format(**mean)
            + f", {elapsed:.1f} s")
    assert ok


def test_criterion_06_ggarch(verdict):
    rng = np.random.default_rng(6)
    t = time.perf_counter()
    positive = 0
    for _ in range(1000):
        p = int(rng.integers(0, 3))
        q = int(rng.integers(0, 3))
        beta = tuple(rng.uniform(-0.9, 0.9) / max(p, 1) for _ in range(p))
        psi = tuple(rng.uniform(-1, 1) for _ in range(q))
        factors = tuple(GegenbauerFactor(rng.uniform(0, 0.49), rng.uniform(-1, 1))
                        for _ in range(int(rng.integers(0, 3))))
        m = GGarchModel(rng.uniform(-3, 3), beta, psi, factors, truncation=100)
        eps = rng.standard_normal(int(rng.integers(60, 400))) * math.exp(rng.uniform(-4, 4))
        eps[rng.random(eps.shape[0]) < 0.02] = 0.0
        with np.errstate(over="ignore"):
            s2 = ggarch_variance_path(m, eps)
        positive += bool(np.all(s2 > 0))
    nested = GGarchModel(0.2, (0.4,), (0.3,), (GegenbauerFactor(0.0, 0.5),))
    lam = ggarch_filter_weights(nested)
    reference = np.zeros_like(lam)
    reference[1] = 0.3 - 0.4
    nest_ok = bool(np.array_equal(lam, reference))
    truth = np.array([-0.5, 0.3, 0.2])
    gen = GGarchModel(*truth[:1], (truth[1],), (truth[2],))
    est = []
    for s in range(25):
        eps, _ = simulate_ggarch(gen, 8192, seed=600 + s)
        e = fit_ggarch(eps, 0, None, GGarchConfig(seed=s)).estimates
        est.append([e["gamma"], e["beta1"], e["psi1"]])
    bias = np.abs(np.mean(est, axis=0) - truth)
    elapsed = time.perf_counter() - t
    ok = positive == 1000 and nest_ok and np.all(bias <= 0.1) and elapsed < 300
    verdict(6, ok, f"positive {positive}/1000, log-GARCH nesting {nest_ok}, "
                   f"|mean bias| (gamma, beta1, psi1) = {np.round(bias, 4).tolist()}, {elapsed:.1f} s")
    assert ok


def test_criterion_07_llwnn_gradients(verdict):
    rng = np.random.default_rng(7)
    t = time.perf_counter()
    worst = 0.0
    for kind in ("mexican_hat", "gaussian_paper"):
        for i in range(100):
            p = int(rng.integers(1, 6))
            model = llwnn_init(p, seed=i, mother_wavelet=kind, n_hidden=int(rng.integers(1, 6)))
            x = rng.uniform(0, 1, p)
            target = float(rng.uniform())
            gw, ga, gb, _ = llwnn_gradients(model, x, target)
            analytic = np.concatenate((gw.ravel(), ga.ravel(), gb.ravel()))
            base = model.to_vector()
            fd = np.empty_like(base)
            h = 1e-6
            for k in range(base.size):
                up, dn = base.copy(), base.copy()
                up[k] += h
                dn[k] -= h
                fu = 0.5 * (target - llwnn_forward(model.from_vector(up), x)) ** 2
                fl = 0.5 * (target - llwnn_forward(model.from_vector(dn), x)) ** 2
                fd[k] = (fu - fl) / (2 * h)
            scale = max(np.linalg.norm(analytic), np.linalg.norm(fd), 1e-12)
            worst = max(worst, float(np.linalg.norm(analytic - fd) / scale))
    elapsed = time.perf_counter() - t
    ok = worst <= 1e-4 and elapsed < 10
    verdict(7, ok, f"max relative gradient error {worst:.1e} over 200 pairs, {elapsed:.2f} s")
    assert ok


def test_criterion_08_pso(verdict):
    t = time.perf_counter()
    hits = 0
    monotone = True
    for s in range(100):
        res = pso_train(lambda v: float(v @ v), 10, PsoConfig(n_particles=20, max_iterations=500, seed=s),
                        bounds=(-5.12, 5.12))
        monotone &= bool(np.all(np.diff(res.trace) <= 0))
        hits += res.best_value <= 1e-3
    elapsed = time.perf_counter() - t
    ok = monotone and hits >= 95 and elapsed < 30
    verdict(8, ok, f"sphere-10d solved in {hits}/100 runs, traces monotone {monotone}, {elapsed:.1f} s")
    assert ok


def test_criterion_09_metrics(verdict):
    row = evaluate_metrics([1.0, 2.0], [2.0, 4.0], [1.5, 1.5])
    hand = (row.mape == 100.0 and row.ll == math.log(4.0) and row.mae == 1.5 and row.mse == 2.5
            and row.rmse == math.sqrt(2.5))
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 100))
        a = rng.uniform(0.5, 10, n) * rng.choice([-1, 1], n)
        r = evaluate_metrics(a, a + rng.standard_normal(n) * 10 ** rng.uniform(-3, 3), np.zeros(n))
        worst = max(worst, abs(r.rmse**2 - r.mse) / max(1.0, r.mse))
    a = rng.uniform(1, 2, 20)
    p = evaluate_metrics(a, a, np.full(20, a.mean()))
    perfect = p.r2 == 1.0 and (p.mape, p.ll, p.mae, p.mse, p.rmse) == (0, 0, 0, 0, 0)
    ok = hand and worst <= 1e-10 and perfect
    verdict(9, ok, f"hand example {hand}, max |RMSE^2 - MSE| {worst:.1e}, perfect forecast {perfect}")
    assert ok


def test_criterion_10_end_to_end(verdict):
    seasonal = GegenbauerFactor.from_frequency(0.3, 1 / 24)
    garma = GarmaModel(0.0, (), (), (seasonal,), 1.0)
    gg = GGarchModel(0.0, (0.6,), (0.8,), (seasonal,))
    mean_spec = MeanSpec(k=1)
    var_spec = VarianceSpec(k=1, fixed_frequencies=(1 / 24,))
    t = time.perf_counter()
    wins = 0
    sse = sbe = 0.0
    r2s = []
    for s in range(100):
        y, _, _ = simulate_garma_ggarch(garma, gg, 8192, seed=s)
        res = run_pipeline(y, mean_spec, var_spec, SplitSpec(), seed=s)
        wins += res.report.rows[("variance", 6)].r2 > 0
        o = res.split.boundaries[1]
        actual = y.values[o : o + 6]
        sse += float(np.sum((actual - res.mean_forecast[:6]) ** 2))
        sbe += float(np.sum((actual - res.split.history.values.mean()) ** 2))
        r2s.append(res.report.rows[("mean", 6)].r2)
    elapsed = time.perf_counter() - t
    pooled = 1.0 - sse / sbe
    ok = wins >= 70 and pooled > 0 and elapsed < 600
    verdict(10, ok, f"variance beats constant baseline in {wins}/100 runs, pooled mean R2 at h=6 {pooled:.3f} "
                    f"(median per-run {np.median(r2s):.3f}), {elapsed:.0f} s")
    assert ok


def _run_twice(tmp_path, name, argv):
    blobs = []
    for i in range(2):
        out = tmp_path / f"{name}{i}"
        assert main([*map(str, argv), "--out-dir", str(out), "--quiet"]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    return blobs[0] == blobs[1], out


def test_criterion_11_determinism(verdict, tmp_path):
    checks = {}
    for model in ("garma", "ggarch", "joint"):
        extra = ["--dv", 0.2, "--fv", 0.1] if model != "garma" else []
        same, _ = _run_twice(tmp_path, f"sim-{model}", ["simulate", "--model", model, "--n", 2048, "--seed", 3, *extra])
        checks[f"simulate {model}"] = same
    data = tmp_path / "sim-joint0" / "simulate.csv"
    bundles = []
    for variance in ("ggarch", "llwnn-bp", "llwnn-pso"):
        same, out = _run_twice(tmp_path, f"fit-{variance}", ["fit", data, "--variance", variance, "--restarts", 1,
                                                              "--lags", 4, "--epochs", 5, "--pso-iterations", 20,
                                                              "--seed", 8])
        checks[f"fit {variance}"] = same
        bundles.append(out / "model.json")
    x = np.random.default_rng(0).uniform(size=(50, 3))
    y = x.sum(axis=1)
    a = train_bp(llwnn_init(3, seed=1), x, y, 5, shuffle=True, seed=2)[0].to_vector().tobytes()
    b = train_bp(llwnn_init(3, seed=1), x, y, 5, shuffle=True, seed=2)[0].to_vector().tobytes()
    checks["train bp"] = a == b
    round_trip = True
    for path in bundles:
        copy = path.with_name("copy.json")
        save_bundle(load_bundle(path), copy)
        round_trip &= copy.read_bytes() == path.read_bytes()
    checks["bundle round trip"] = round_trip
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(11, ok, f"{len(checks)} determinism checks, failures: {failed or 'none'}")
    assert ok
