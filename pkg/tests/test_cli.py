import math
import re
from datetime import datetime, timedelta

import numpy as np
import pytest

from kgarma.bundle import load_bundle, save_bundle
from kgarma.cli import UsageError, _exit_code, main
from kgarma.diagnostics import local_whittle
from kgarma.errors import ConvergenceError, DataError
from kgarma.timeseries import load_csv
from kgarma.wavelets import detect_gegenbauer_frequencies


def run(*argv):
    return main([str(a) for a in argv])


def header(path):
    with open(path) as fh:
        return [ln[2:].rstrip("\n") for ln in fh if ln.startswith("# ")]


def body(path):
    with open(path) as fh:
        return [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]


@pytest.fixture(scope="module")
def seasonal_csv(tmp_path_factory):
    """Hourly series with long memory at periods 24, 12 and 8."""
    d = tmp_path_factory.mktemp("data")
    rc = run("simulate", "--model", "joint", "--n", 4096, "--mu", 40, "--d", "0.35,0.3,0.25",
             "--freqs", f"{1/24},{1/12},{1/8}", "--beta", "0.6", "--psi", "0.8",
             "--seed", 11, "--out-dir", d, "--output", "prices.csv", "--quiet")
    assert rc == 0
    return d / "prices.csv"


@pytest.fixture(scope="module")
def ggarch_bundle(seasonal_csv, tmp_path_factory):
    d = tmp_path_factory.mktemp("fit")
    assert run("fit", seasonal_csv, "--mean", 1, "--restarts", 1, "--out-dir", d, "--quiet") == 0
    return d / "model.json"


def test_missing_file_is_data_error(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run("diagnose", missing, "--out-dir", tmp_path) == 3
    assert str(missing) in capsys.readouterr().err


def test_usage_errors(tmp_path, seasonal_csv):
    assert run("fit") == 2
    assert run("frobnicate") == 2
    assert run("fit", seasonal_csv, "--mean", 2, "--freqs", "0.1", "--out-dir", tmp_path, "--quiet") == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n")
    assert run("diagnose", seasonal_csv, "--config", cfg) == 2


def test_exit_code_mapping():
    assert _exit_code(ConvergenceError("x")) == 4
    assert _exit_code(DataError("x")) == 3
    assert _exit_code(UsageError("x")) == 2


def test_bad_csv_reports_row(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("t,p\n2015-01-01T00,1\n2015-01-01T01,x\n")
    assert run("diagnose", p, "--out-dir", tmp_path) == 3
    err = capsys.readouterr().err
    assert "bad.csv" in err and "row 3" in err


def test_diagnose_outputs_and_provenance(tmp_path, seasonal_csv):
    assert run("diagnose", seasonal_csv, "--out-dir", tmp_path, "--quiet") == 0
    csv_path = tmp_path / "diagnose.csv"
    h = header(csv_path)
    assert h[0].startswith("kgarma ") and "command: diagnose" in h and "seed: 0" in h
    assert any(re.fullmatch(r"config_sha256: [0-9a-f]{64}", ln) for ln in h)
    assert any(ln.startswith("input: prices.csv sha256=") for ln in h)
    rows = body(csv_path)
    assert rows[0] == "estimator,bandwidth_exponent,m,d_hat,std_error,p_value"
    gph = [r.split(",") for r in rows if r.startswith("gph,")]
    assert [int(r[2]) for r in gph] == [int(4096**b) for b in (0.5, 0.6, 0.7, 0.8)]
    assert "Ljung-Box" in (tmp_path / "diagnose.txt").read_text()


def test_diagnose_white_noise_small_d(tmp_path):
    assert run("simulate", "--model", "garma", "--n", 4096, "--d", "0", "--freqs", "0.1",
               "--out-dir", tmp_path, "--output", "wn.csv", "--quiet") == 0
    assert run("diagnose", tmp_path / "wn.csv", "--out-dir", tmp_path, "--quiet") == 0
    ds = [float(r.split(",")[3]) for r in body(tmp_path / "diagnose.csv") if r.startswith(("gph,", "local_whittle,"))]
    assert len(ds) == 8 and max(abs(d) for d in ds) < 0.15


def test_config_file_and_flag_override(tmp_path, seasonal_csv):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nseed = 5\npeaks = 2\n")
    assert run("diagnose", seasonal_csv, "--config", cfg, "--out-dir", tmp_path, "--quiet") == 0
    assert "seed: 5" in header(tmp_path / "diagnose.csv")
    assert sum(r.startswith("peak,") for r in body(tmp_path / "diagnose.csv")) == 2
    assert run("diagnose", seasonal_csv, "--config", cfg, "--seed", 7, "--out-dir", tmp_path, "--quiet") == 0
    assert "seed: 7" in header(tmp_path / "diagnose.csv")


def test_fit_bundle_round_trip(ggarch_bundle, tmp_path):
    b = load_bundle(ggarch_bundle)
    assert b.ggarch is not None and b.name == "GARMA-G-GARCH"
    assert b.provenance["input_sha256"] and b.provenance["seeds"] == {"fit": 0}
    again = tmp_path / "again.json"
    save_bundle(b, again)
    assert again.read_bytes() == ggarch_bundle.read_bytes()


def test_fit_is_byte_identical(seasonal_csv, ggarch_bundle, tmp_path):
    assert run("fit", seasonal_csv, "--mean", 1, "--restarts", 1, "--out-dir", tmp_path, "--quiet") == 0
    assert (tmp_path / "model.json").read_bytes() == ggarch_bundle.read_bytes()


def test_llwnn_pso_fit_is_deterministic(seasonal_csv, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"pso{i}.json"
        assert run("fit", seasonal_csv, "--mean", 1, "--restarts", 1, "--variance", "llwnn-pso",
                   "--lags", 4, "--pso-iterations", 10, "--seed", 3, "--out", out, "--quiet") == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    b = load_bundle(tmp_path / "pso0.json")
    assert b.llwnn is not None and b.scaler is not None and b.llwnn.n_inputs == 4


def test_fit_three_factor_report(seasonal_csv, capsys):
    assert run("fit", seasonal_csv, "--mean", 3, "--no-refine", "--restarts", 1, "--out-dir",
               seasonal_csv.parent / "three") == 0
    out = capsys.readouterr().out
    x = load_csv(str(seasonal_csv)).values
    expected = detect_gegenbauer_frequencies(x, 3)
    rows = re.findall(r"lambda_m,(\d)\s+(\S+)\s+\(T = (\S+)\)", out)
    assert [int(r[0]) for r in rows] == [1, 2, 3]
    for (_, f, period), e in zip(rows, expected):
        assert float(f) == pytest.approx(e, abs=5e-5)
        assert float(period) == pytest.approx(1 / e, abs=5e-3)
    assert sorted(round(1 / e) for e in expected) == [8, 12, 24]
    assert len(re.findall(r"d_m,\d", out)) == 3


def test_forecast_output(ggarch_bundle, seasonal_csv, tmp_path):
    args = ("forecast", ggarch_bundle, seasonal_csv, "--horizons", "1,6,24", "--out-dir", tmp_path, "--quiet")
    assert run(*args) == 0
    path = tmp_path / "forecast.csv"
    first = path.read_bytes()
    assert "horizons: 1,6,24" in header(path)
    rows = body(path)
    assert rows[0] == "horizon,timestamp,mean,variance"
    parsed = [r.split(",") for r in rows[1:]]
    assert [int(r[0]) for r in parsed] == [1, 6, 24]
    origin = datetime(2015, 1, 1) + 4095 * timedelta(hours=1)
    assert parsed[0][1] == (origin + timedelta(hours=1)).isoformat()
    assert parsed[2][1] == (origin + timedelta(hours=24)).isoformat()
    assert all(float(r[3]) > 0 for r in parsed)
    assert run(*args) == 0
    assert path.read_bytes() == first


def test_forecast_step_mismatch(ggarch_bundle, tmp_path):
    p = tmp_path / "daily.csv"
    lines = ["t,p"] + [f"2015-01-{d:02d}T00:00:00,{40 + math.sin(d)}" for d in range(1, 32)]
    lines += [f"2015-02-{d:02d}T00:00:00,{40 + math.cos(d)}" for d in range(1, 29)]
    lines += [f"2015-03-{d:02d}T00:00:00,{41 + math.cos(d)}" for d in range(1, 31)]
    p.write_text("\n".join(lines) + "\n")
    assert run("forecast", ggarch_bundle, p, "--out-dir", tmp_path, "--quiet") == 3


def test_evaluate_schema(ggarch_bundle, seasonal_csv, tmp_path):
    assert run("evaluate", seasonal_csv, "--bundles", ggarch_bundle, ggarch_bundle,
               "--out-dir", tmp_path, "--quiet") == 0
    rows = body(tmp_path / "evaluate.csv")
    assert rows[0] == "model,layer,criterion,h6,h12,h24,h48,h72"
    models = {r.split(",")[0] for r in rows[1:]}
    assert models == {"GARMA-G-GARCH", "GARMA-G-GARCH#2", "best"}
    best = [r.split(",") for r in rows if r.startswith("best,")]
    assert len(best) == 12 and all(v == "GARMA-G-GARCH" for r in best for v in r[3:])
    assert any(ln.startswith("split: init 200") for ln in header(tmp_path / "evaluate.csv"))


def test_simulate_deterministic_with_param_echo(tmp_path):
    args = ["simulate", "--model", "ggarch", "--n", 300, "--gamma", -0.2, "--beta", 0.5, "--psi", 0.6,
            "--dv", 0.2, "--fv", 0.25, "--seed", 4, "--out-dir", tmp_path, "--quiet"]
    assert run(*args, "--output", "a.csv") == 0
    assert run(*args, "--output", "b.csv") == 0
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    h = header(tmp_path / "a.csv")
    assert "param gamma = -0.20000000000000001" in h and "param dv = 0.20000000000000001" in h
    rows = body(tmp_path / "a.csv")
    assert rows[0] == "t,value,sigma2" and len(rows) == 301
    assert all(float(r.split(",")[2]) > 0 for r in rows[1:])
    assert run(*args[:-5], "--seed", 5, "--out-dir", tmp_path, "--output", "c.csv", "--quiet") == 0
    assert (tmp_path / "c.csv").read_bytes() != a


def test_joint_simulation_volatility_long_memory(tmp_path):
    # (1 - 2L + L^2)^0.15 = (1 - L)^0.3 in the log-variance
    ds = []
    for s in range(25):
        assert run("simulate", "--model", "joint", "--n", 4096, "--d", 0.2, "--freqs", 0.1,
                   "--beta", 0.6, "--psi", 0.8, "--dv", 0.15, "--fv", 0, "--seed", s,
                   "--out-dir", tmp_path, "--output", "j.csv", "--quiet") == 0
        rows = body(tmp_path / "j.csv")
        assert rows[0] == "t,value,eps,sigma2"
        eps = np.array([float(r.split(",")[2]) for r in rows[1:]])
        ds.append(local_whittle(eps**2, int(4096**0.6)).d_hat)
    assert np.mean(ds) > 0.1
