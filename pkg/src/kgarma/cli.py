"""Command-line interface: diagnose, fit, forecast, evaluate, simulate.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import math
import os
import sys
import warnings
from datetime import datetime, timedelta
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .bench import (
    MeanSpec,
    SplitSpec,
    StageError,
    VarianceSpec,
    compare_report,
    fit_variance_model,
    forecast_from_models,
    split,
)
from .bundle import ModelBundle, SeriesInfo, load_bundle, save_bundle, sha256_of
from .diagnostics import gph_estimate, ljung_box, local_whittle
from .errors import ConvergenceError, DataError, ModelError
from .gegenbauer import GarmaModel, GegenbauerFactor, garma_mean_forecast, garma_residuals, simulate_garma
from .ggarch import GGarchConfig, GGarchModel, ggarch_variance_forecast, simulate_ggarch, simulate_garma_ggarch
from .llwnn import PsoConfig, llwnn_variance_forecast
from .timeseries import CsvSchema, TimeSeries, describe, format_float, load_csv, log_returns
from .wavelets import WhittleConfig, periodogram_peaks, wavelet_whittle_fit

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
BANDWIDTH_GRID = (0.5, 0.6, 0.7, 0.8)
_GLOBAL_KEYS = ("seed", "out_dir", "quiet")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class UsageError(Exception):
    pass


# --- small parsers -----------------------------------------------------------

def _floats(text: str) -> List[float]:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> List[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return vals


def _freqs(text: str):
    return None if text.strip().lower() == "auto" else _floats(text)


def read_config(path: str) -> Dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    if not os.path.exists(path):
        raise DataError(f"config file not found: {path}")
    out: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


# --- provenance --------------------------------------------------------------

def _config_digest(args: argparse.Namespace) -> str:
    skip = {"func", "out_dir", "quiet", "config", "out", "output"}
    items = sorted((k, repr(v)) for k, v in vars(args).items() if k not in skip)
    return hashlib.sha256(repr(items).encode()).hexdigest()


def _header(args, extra: Sequence[str] = (), inputs: Sequence[str] = ()) -> List[str]:
    lines = [f"kgarma {__version__}", f"command: {args.command}", f"seed: {args.seed}",
             f"config_sha256: {_config_digest(args)}"]
    for p in inputs:
        lines.append(f"input: {os.path.basename(p)} sha256={sha256_of(p)}")
    return lines + list(extra)


def _write(args, name: str, header: Sequence[str], body: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(body)
    return path


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# --- input -------------------------------------------------------------------

def _schema(args) -> CsvSchema:
    def col(v):
        return int(v) if str(v).isdigit() else v

    return CsvSchema(col(args.time_column), col(args.value_column), not args.no_header,
                     "ffill" if args.ffill else None, os.path.basename(args.input))


def _load(args) -> TimeSeries:
    if not os.path.exists(args.input):
        raise DataError(f"input file not found: {args.input}")
    try:
        series = load_csv(args.input, _schema(args))
    except DataError as exc:
        raise DataError(f"{args.input}: {exc}") from exc
    if getattr(args, "returns", False):
        series = log_returns(series)
    return series


def _add_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="CSV file with a timestamp and a value column")
    p.add_argument("--time-column", default="0", help="header name or zero-based index")
    p.add_argument("--value-column", default="1", help="header name or zero-based index")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--ffill", action="store_true", help="forward-fill missing timestamps")
    p.add_argument("--returns", action="store_true", help="work on log returns of the values")


def _add_split(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init-length", type=int, default=200)
    p.add_argument("--train-fraction", type=float, default=0.6)
    p.add_argument("--horizons", type=_ints, default="6,12,24,48,72")


def _split_spec(args) -> SplitSpec:
    return SplitSpec(args.init_length, args.train_fraction, tuple(args.horizons))


# --- diagnose ----------------------------------------------------------------

def cmd_diagnose(args) -> int:
    series = _load(args)
    x = series.values
    n = x.shape[0]
    stats = describe(series)
    rows = ["estimator,bandwidth_exponent,m,d_hat,std_error,p_value"]
    lines = [f"series: {args.input} (n = {n})",
             f"mean {stats.mean:.6g}  std {stats.std_dev:.6g}  skewness {stats.skewness:.6g}  "
             f"kurtosis {stats.kurtosis:.6g}",
             f"Jarque-Bera {stats.jarque_bera:.6g} (p = {stats.jb_p_value:.4g})", "",
             f"{'bandwidth':>12} {'GPH d':>9} {'s.e.':>8} {'p':>8} {'LW d':>9} {'s.e.':>8} {'p':>8}"]
    for b in BANDWIDTH_GRID:
        g = gph_estimate(x, b)
        m = max(2, int(math.floor(n**b)))
        lw = local_whittle(x, m)
        for est in (g, lw):
            rows.append(",".join([est.method, format_float(b), str(est.bandwidth), format_float(est.d_hat),
                                  format_float(est.std_error), format_float(est.p_value)]))
        lines.append(f"T^{b:.1f}={m:<7d} {g.d_hat:9.4f} {g.std_error:8.4f} {g.p_value:8.4f} "
                     f"{lw.d_hat:9.4f} {lw.std_error:8.4f} {lw.p_value:8.4f}")
    lb_lags = max(1, min(args.lb_lags, (n - 1) // 2))
    q, p = ljung_box(x, lb_lags)
    rows.append(f"ljung_box,,{lb_lags},{format_float(q)},,{format_float(p)}")
    lines += ["", f"Ljung-Box({lb_lags}) Q = {q:.6g} (p = {p:.4g})"]
    try:
        peaks = periodogram_peaks(x, args.peaks)
        lines += ["", "periodogram peaks:"]
        for i, (f, h) in enumerate(zip(peaks.frequencies, peaks.heights), start=1):
            rows.append(f"peak,,{i},{format_float(f)},,{format_float(h)}")
            lines.append(f"  lambda_{i} = {f:.4f} (T = {1.0 / f:.2f}) height {h:.4g}")
    except DataError as exc:
        lines += ["", f"periodogram peaks: {exc}"]
    header = _header(args, [f"n: {n}"], [args.input])
    csv_path = _write(args, "diagnose.csv", header, "\n".join(rows) + "\n")
    txt_path = _write(args, "diagnose.txt", header, "\n".join(lines) + "\n")
    _say(args, "\n".join(lines))
    _say(args, f"\nwrote {csv_path} and {txt_path}")
    return EXIT_OK


# --- fit ---------------------------------------------------------------------

def _variance_spec(args) -> VarianceSpec:
    kind = args.variance.replace("-", "_")
    vfreqs = args.variance_freqs
    if vfreqs is not None and len(vfreqs) != args.variance_k:
        raise UsageError(f"--variance-freqs lists {len(vfreqs)} values but --variance-k is {args.variance_k}")
    return VarianceSpec(
        kind=kind, k=args.variance_k, fixed_frequencies=tuple(vfreqs) if vfreqs is not None else None,
        ggarch=GGarchConfig(p=args.p_var, q=args.q_var, n_restarts=args.restarts),
        lags=args.lags, bp_epochs=args.epochs, learning_rate=args.learning_rate,
        pso=PsoConfig(n_particles=args.particles, max_iterations=args.pso_iterations),
        mother_wavelet=args.activation,
    )


def _fit_report(fit, k: int) -> List[str]:
    g = fit.model
    lines = ["k-factor GARMA (wavelet Whittle)"]
    for i, f in enumerate(g.factors, start=1):
        lines.append(f"  d_m,{i}       {f.d: .4f}")
    for i, f in enumerate(g.factors, start=1):
        lines.append(f"  lambda_m,{i}  {f.frequency: .4f}  (T = {f.period:.2f})")
    for i, a in enumerate(g.ar, start=1):
        lines.append(f"  phi_{i}       {a: .4f}")
    for i, b in enumerate(g.ma, start=1):
        lines.append(f"  theta_{i}     {b: .4f}")
    lines.append(f"  mu           {g.mu: .6g}")
    lines.append(f"  sigma2       {g.sigma2: .6g}")
    init = ", ".join(f"{f:.4f}" for f in fit.initial_frequencies)
    lines.append(f"  initial frequencies: {init}{' (refined)' if fit.refined else ''}")
    return lines


def cmd_fit(args) -> int:
    series = _load(args)
    vspec = _variance_spec(args)
    if args.freqs is not None and len(args.freqs) != args.mean:
        raise UsageError(f"--freqs lists {len(args.freqs)} values but --mean is {args.mean}")
    if args.holdout:
        parts = split(series, _split_spec(args))
        fit_series = parts.history
        init_length = args.init_length
    else:
        fit_series = series
        init_length = min(args.init_length, len(series) // 4)
    x = fit_series.values
    wcfg = WhittleConfig(wavelet_order=args.wavelet_order, p=args.p, q=args.q,
                         refine_frequencies=not args.no_refine, n_restarts=args.restarts, seed=args.seed)
    try:
        fit = wavelet_whittle_fit(x, args.mean, tuple(args.freqs) if args.freqs is not None else None, wcfg)
    except Exception as exc:  # noqa: BLE001
        raise StageError("mean-fit", exc) from exc
    trunc = max(100, min(args.truncation, x.shape[0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        resid = garma_residuals(fit.model, x, trunc).values
    try:
        gg, nn, scaler = fit_variance_model(resid, init_length, vspec, args.seed)
    except Exception as exc:  # noqa: BLE001
        raise StageError("variance-fit", exc) from exc

    lines = _fit_report(fit, args.mean)
    if gg is not None:
        lines.append("G-GARCH")
        lines.append(f"  gamma        {gg.gamma: .4f}")
        lines += [f"  beta_{i}       {b: .4f}" for i, b in enumerate(gg.beta, start=1)]
        lines += [f"  psi_{i}        {v: .4f}" for i, v in enumerate(gg.psi, start=1)]
        for i, f in enumerate(gg.variance_factors, start=1):
            lines.append(f"  d_v,{i}       {f.d: .4f}")
            lines.append(f"  lambda_v,{i}  {f.frequency: .4f}  (T = {f.period:.2f})")
    else:
        lines.append(f"LLWNN ({vspec.kind}, {nn.n_inputs} inputs, {nn.n_hidden} hidden, {nn.mother_wavelet})")

    provenance = {
        "kgarma_version": __version__,
        "input": os.path.basename(args.input),
        "input_sha256": sha256_of(args.input),
        "seeds": {"fit": args.seed},
        "config": {k: (v if isinstance(v, (int, float, str, bool)) or v is None else list(v))
                   for k, v in sorted(vars(args).items()) if k not in ("func", "config", "quiet", "out_dir", "out")},
        "config_sha256": _config_digest(args),
        # data time span rather than wall clock, so repeated fits are byte-identical
        "fit_timestamps": {"series_start": fit_series.start_time.isoformat(),
                           "series_end": fit_series.end_time.isoformat()},
    }
    names = {"ggarch": "GARMA-G-GARCH", "llwnn_bp": "GARMA-LLWNN-BP", "llwnn_pso": "GARMA-LLWNN-PSO"}
    bundle = ModelBundle(fit.model, gg, nn, scaler, SeriesInfo(fit_series.start_time, fit_series.step, len(fit_series)),
                         trunc, names[vspec.kind], provenance)
    os.makedirs(args.out_dir, exist_ok=True)
    out = args.out or os.path.join(args.out_dir, "model.json")
    save_bundle(bundle, out)
    _say(args, "\n".join(lines))
    _say(args, f"\nwrote {out}")
    return EXIT_OK


# --- forecast ----------------------------------------------------------------

def _check_compatible(bundle: ModelBundle, series: TimeSeries, need: int) -> None:
    if bundle.garma is None or bundle.variance_kind is None:
        raise DataError("bundle lacks a mean or variance model")
    if bundle.series is not None and bundle.series.step != series.step:
        raise DataError(f"series step {series.step} differs from the bundle's {bundle.series.step}")
    if len(series) < need:
        raise DataError(f"series has {len(series)} observations; at least {need} are needed")


def cmd_forecast(args) -> int:
    bundle = load_bundle(args.bundle)
    series = _load(args)
    need = max(2, bundle.llwnn.n_inputs if bundle.llwnn is not None else 2, 60)
    _check_compatible(bundle, series, need)
    x = series.values
    horizon = max(args.horizons)
    trunc = max(100, min(bundle.garma_truncation, x.shape[0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        resid = garma_residuals(bundle.garma, x, trunc).values
    mean_fc = garma_mean_forecast(bundle.garma, x, horizon, trunc)
    if bundle.ggarch is not None:
        var_fc = ggarch_variance_forecast(bundle.ggarch, resid, horizon)
    else:
        var_fc = llwnn_variance_forecast(bundle.llwnn, bundle.scaler, resid**2, horizon)
    rows = ["horizon,timestamp,mean,variance"]
    for h in args.horizons:
        t = series.end_time + h * series.step
        rows.append(f"{h},{t.isoformat()},{format_float(mean_fc[h - 1])},{format_float(var_fc[h - 1])}")
    header = _header(args, [f"horizons: {','.join(str(h) for h in args.horizons)}",
                            f"model: {bundle.name}", f"origin: {series.end_time.isoformat()}"],
                     [args.bundle, args.input])
    path = _write(args, "forecast.csv", header, "\n".join(rows) + "\n")
    _say(args, "\n".join(rows))
    _say(args, f"\nwrote {path}")
    return EXIT_OK


# --- evaluate ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    series = _load(args)
    parts = split(series, _split_spec(args))
    reports = []
    seen: Dict[str, int] = {}
    for path in args.bundles:
        b = load_bundle(path)
        _check_compatible(b, series, 2)
        name = b.name or os.path.basename(path)
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}#{seen[name]}"
        report, _, _ = forecast_from_models(parts, b.garma, b.ggarch, b.llwnn, b.scaler,
                                            b.garma_truncation, name)
        reports.append(report)
    table = compare_report(reports)
    header = _header(args, [f"split: init {parts.boundaries[0]}, train {parts.boundaries[1] - parts.boundaries[0]}, "
                            f"test {len(parts.test)}"], list(args.bundles) + [args.input])
    path = _write(args, "evaluate.csv", header, table.to_csv())
    _say(args, table.to_csv())
    _say(args, f"wrote {path}")
    return EXIT_OK


# --- simulate ----------------------------------------------------------------

def _factors(ds: Sequence[float], fs: Sequence[float], what: str):
    if len(ds) != len(fs):
        raise UsageError(f"{what}: {len(ds)} exponents but {len(fs)} frequencies")
    return tuple(GegenbauerFactor.from_frequency(d, f) for d, f in zip(ds, fs))


def cmd_simulate(args) -> int:
    start = datetime.fromisoformat(args.start)
    step = timedelta(hours=args.step_hours)
    params = []
    garma = gg = None
    if args.model in ("garma", "joint"):
        garma = GarmaModel(args.mu, tuple(args.ar), tuple(args.ma), _factors(args.d, args.freqs, "garma"),
                           args.sigma2)
        garma.check_stationary()
        params += [f"mu = {format_float(args.mu)}", f"sigma2 = {format_float(args.sigma2)}",
                   "ar = " + ",".join(map(format_float, args.ar)), "ma = " + ",".join(map(format_float, args.ma)),
                   "d = " + ",".join(map(format_float, args.d)), "freqs = " + ",".join(map(format_float, args.freqs))]
    if args.model in ("ggarch", "joint"):
        gg = GGarchModel(args.gamma, tuple(args.beta), tuple(args.psi), _factors(args.dv, args.fv, "ggarch"))
        params += [f"gamma = {format_float(args.gamma)}", "beta = " + ",".join(map(format_float, args.beta)),
                   "psi = " + ",".join(map(format_float, args.psi)), "dv = " + ",".join(map(format_float, args.dv)),
                   "fv = " + ",".join(map(format_float, args.fv))]
    burn = args.burn_in
    if args.model == "garma":
        y = simulate_garma(garma, args.n, burn_in=burn, seed=args.seed, truncation=min(burn, 2000))
        cols, data = ("t", "value"), [y.values]
    elif args.model == "ggarch":
        eps, s2 = simulate_ggarch(gg, args.n, seed=args.seed, burn_in=burn)
        cols, data = ("t", "value", "sigma2"), [eps, s2]
    else:
        y, eps, s2 = simulate_garma_ggarch(garma, gg, args.n, seed=args.seed, burn_in=burn,
                                           truncation=min(burn, 2000))
        cols, data = ("t", "value", "eps", "sigma2"), [y.values, eps, s2]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for i in range(args.n):
        buf.write((start + i * step).isoformat() + "," + ",".join(format_float(c[i]) for c in data) + "\n")
    header = _header(args, [f"model: {args.model}", f"n: {args.n}", f"burn_in: {burn}"] +
                     [f"param {p}" for p in params])
    path = _write(args, args.output, header, buf.getvalue())
    _say(args, f"wrote {path} ({args.n} observations)")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="random seed (default 0)")
    p.add_argument("--config", default=d(None), help="key = value file; flags override it")
    p.add_argument("--out-dir", default=d("."), help="directory for output files")
    p.add_argument("--quiet", action="store_true", default=d(False), help="suppress console output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgarma", description="Seasonal long-memory modelling and forecasting.")
    parser.add_argument("--version", action="version", version=f"kgarma {__version__}")
    _globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("diagnose", help="descriptive statistics and long-memory tests")
    _add_input(p)
    p.add_argument("--peaks", type=int, default=3, help="number of periodogram peaks to list")
    p.add_argument("--lb-lags", type=int, default=24)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("fit", help="two-stage GARMA + variance model fit")
    _add_input(p)
    p.add_argument("--mean", type=int, default=1, help="number of Gegenbauer factors in the mean")
    p.add_argument("--freqs", type=_freqs, default="auto", help="'auto' or comma-separated frequencies")
    p.add_argument("--no-refine", action="store_true", help="keep detected frequencies fixed")
    p.add_argument("--p", type=int, default=0, help="AR order of the mean")
    p.add_argument("--q", type=int, default=0, help="MA order of the mean")
    p.add_argument("--wavelet-order", type=int, default=4)
    p.add_argument("--truncation", type=int, default=2000)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--variance", choices=("ggarch", "llwnn-bp", "llwnn-pso"), default="ggarch")
    p.add_argument("--variance-k", type=int, default=0)
    p.add_argument("--variance-freqs", type=_freqs, default="auto")
    p.add_argument("--p-var", type=int, default=1)
    p.add_argument("--q-var", type=int, default=1)
    p.add_argument("--lags", type=int, default=10, help="LLWNN input lags")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.5)
    p.add_argument("--particles", type=int, default=20)
    p.add_argument("--pso-iterations", type=int, default=200)
    p.add_argument("--activation", choices=("mexican_hat", "gaussian_paper"), default="mexican_hat")
    p.add_argument("--holdout", action="store_true", help="fit on the init+train part of the split only")
    _add_split(p)
    p.add_argument("--out", default=None, help="bundle path (default OUT_DIR/model.json)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="iterated forecasts from a fitted bundle")
    p.add_argument("bundle")
    _add_input(p)
    p.add_argument("--horizons", type=_ints, default="6,12,24,48,72")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="out-of-sample comparison table for one or more bundles")
    p.add_argument("input")
    p.add_argument("--bundles", nargs="+", required=True)
    p.add_argument("--time-column", default="0")
    p.add_argument("--value-column", default="1")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--ffill", action="store_true")
    p.add_argument("--returns", action="store_true")
    _add_split(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="simulate GARMA, G-GARCH or joint data")
    p.add_argument("--model", choices=("garma", "ggarch", "joint"), required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--mu", type=float, default=0.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--d", type=_floats, default="0.3")
    p.add_argument("--freqs", type=_floats, default="0.1")
    p.add_argument("--ar", type=_floats, default="")
    p.add_argument("--ma", type=_floats, default="")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--beta", type=_floats, default="0.5")
    p.add_argument("--psi", type=_floats, default="0.6")
    p.add_argument("--dv", type=_floats, default="")
    p.add_argument("--fv", type=_floats, default="")
    p.add_argument("--start", default="2015-01-01T00:00:00")
    p.add_argument("--step-hours", type=float, default=1.0)
    p.add_argument("--output", default="simulate.csv", help="file name inside OUT_DIR")
    p.set_defaults(func=cmd_simulate)

    for sp in sub.choices.values():
        _globals(sp, suppress=True)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub_action.choices), None)
    target = sub_action.choices.get(command) if command else None
    for key, value in values.items():
        owners = []
        if key in _GLOBAL_KEYS:
            owners.append(parser)
        elif target is not None and any(a.dest == key for a in target._actions):
            owners.append(target)
        else:
            raise UsageError(f"unknown config key {key!r}")
        for owner in owners:
            action = next(a for a in owner._actions if a.dest == key)
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                low = value.lower()
                if low not in _TRUE | _FALSE:
                    raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
                owner.set_defaults(**{key: low in _TRUE})
            else:
                owner.set_defaults(**{key: value})


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ConvergenceError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (UsageError, ModelError, ValueError)):
        return EXIT_USAGE
    return EXIT_NUMERIC


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (UsageError, DataError) as exc:
        print(f"kgarma: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        print(f"kgarma: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
