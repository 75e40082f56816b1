"""Out-of-sample evaluation bench: data split, metrics, two-stage pipeline, comparison table."""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DataError, KgarmaError
from .gegenbauer import GarmaModel, garma_mean_forecast, garma_residuals
from .ggarch import GGarchConfig, GGarchModel, fit_ggarch, ggarch_variance_forecast
from .llwnn import (
    LlwnnModel,
    PsoConfig,
    lagged_dataset,
    llwnn_init,
    llwnn_variance_forecast,
    pso_train_llwnn,
    train_bp,
)
from .timeseries import MinMaxScaler, TimeSeries, format_float
from .wavelets import WhittleConfig, wavelet_whittle_fit

__all__ = [
    "SplitSpec",
    "Split",
    "split",
    "MetricsRow",
    "CRITERIA",
    "evaluate_metrics",
    "MeanSpec",
    "VarianceSpec",
    "ForecastReport",
    "PipelineResult",
    "StageError",
    "run_pipeline",
    "fit_variance_model",
    "forecast_from_models",
    "ComparisonTable",
    "compare_report",
]

CRITERIA = ("r2", "mape", "ll", "mae", "mse", "rmse")
_ZERO = 1e-12


@dataclass(frozen=True)
class SplitSpec:
    init_length: int = 200
    train_fraction: float = 0.6
    horizons: Tuple[int, ...] = (6, 12, 24, 48, 72)

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not self.horizons or min(self.horizons) < 1:
            raise ValueError("horizons must be positive")


@dataclass(frozen=True)
class Split:
    init: TimeSeries
    train: TimeSeries
    test: TimeSeries
    # indices where train and test start
    boundaries: Tuple[int, int]
    horizons: Tuple[int, ...] = (6, 12, 24, 48, 72)

    @property
    def history(self) -> TimeSeries:
        """Initialisation and training segments together."""
        return TimeSeries(np.concatenate((self.init.values, self.train.values)),
                          self.init.start_time, self.init.step, self.init.label)


def split(series: TimeSeries, spec: SplitSpec) -> Split:
    """Cut into contiguous init / train / test segments.

    The training length is ``round(train_fraction * (n - init_length))``.
    """
    n = len(series)
    rest = n - spec.init_length
    if spec.init_length < 1 or rest <= 0:
        raise DataError(f"series of length {n} too short for init_length={spec.init_length}")
    n_train = int(round(spec.train_fraction * rest))
    if spec.init_length + n_train + max(spec.horizons) > n or n_train < 1:
        raise DataError(
            f"series of length {n} too short: init {spec.init_length} + train {n_train} "
            f"+ max horizon {max(spec.horizons)}"
        )
    b1 = spec.init_length
    b2 = b1 + n_train
    return Split(series.slice(0, b1), series.slice(b1, b2), series.slice(b2, n), (b1, b2), spec.horizons)


@dataclass(frozen=True)
class MetricsRow:
    r2: float
    mape: float
    ll: float
    mae: float
    mse: float
    rmse: float
    n_eval: int
    # observations dropped from MAPE / LL because a value was (numerically) zero
    n_excluded: int = 0

    def get(self, criterion: str) -> float:
        return getattr(self, criterion)


def evaluate_metrics(actual, predicted, historical_mean_forecast) -> MetricsRow:
    """Six forecast accuracy criteria; MAPE is in percent.

    R^2 compares squared errors with those of the historical-average
    forecast. MAPE and LL skip observations whose actual value is within
    ``1e-12`` of zero (LL also skips zero predictions).
    """
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    b = np.asarray(historical_mean_forecast, dtype=float)
    if a.shape[0] == 0:
        raise DataError("empty evaluation set")
    if a.shape != p.shape or a.shape != b.shape:
        raise DataError("actual, predicted and benchmark must have equal lengths")
    err = a - p
    sse = float(err @ err)
    sbe = float((a - b) @ (a - b))
    if sbe > 0:
        r2 = 1.0 - sse / sbe
    else:
        r2 = 1.0 if sse == 0 else -math.inf
    keep = np.abs(a) >= _ZERO
    if not keep.any():
        raise DataError("all actual values are zero; MAPE undefined")
    mape = float(np.mean(np.abs(err[keep] / a[keep]))) * 100.0
    keep_ll = keep & (np.abs(p) >= _ZERO)
    ll = float(np.mean(np.log((p[keep_ll] / a[keep_ll]) ** 2))) if keep_ll.any() else math.nan
    n = a.shape[0]
    mse = sse / n
    return MetricsRow(r2, mape, ll, float(np.mean(np.abs(err))), mse, math.sqrt(mse), n,
                      int(n - keep_ll.sum()))


# --- pipeline ----------------------------------------------------------------

@dataclass(frozen=True)
class MeanSpec:
    k: int = 1
    fixed_frequencies: Optional[Tuple[float, ...]] = None
    whittle: WhittleConfig = WhittleConfig()
    truncation: int = 2000


@dataclass(frozen=True)
class VarianceSpec:
    kind: str = "ggarch"  # ggarch | llwnn_bp | llwnn_pso
    k: int = 0
    fixed_frequencies: Optional[Tuple[float, ...]] = None
    ggarch: GGarchConfig = GGarchConfig()
    lags: int = 10
    bp_epochs: int = 30
    learning_rate: float = 0.5
    pso: PsoConfig = PsoConfig(max_iterations=200)
    # most recent training samples used by the network trainers
    max_train_samples: int = 2000
    mother_wavelet: str = "mexican_hat"

    def __post_init__(self):
        if self.kind not in ("ggarch", "llwnn_bp", "llwnn_pso"):
            raise ValueError(f"unknown variance model {self.kind!r}")


@dataclass(frozen=True)
class ForecastReport:
    """Metrics per ``(layer, horizon)`` for one model.

    ``layer`` is ``"mean"`` (return forecasts vs. realised returns) or
    ``"variance"`` (variance forecasts vs. squared residuals).
    """

    model: str
    horizons: Tuple[int, ...]
    rows: Dict[Tuple[str, int], MetricsRow]

    @property
    def layers(self) -> Tuple[str, ...]:
        seen = []
        for layer, _ in self.rows:
            if layer not in seen:
                seen.append(layer)
        return tuple(seen)


@dataclass(frozen=True)
class PipelineResult:
    report: ForecastReport
    garma: GarmaModel
    ggarch: Optional[GGarchModel]
    llwnn: Optional[LlwnnModel]
    scaler: Optional[MinMaxScaler]
    mean_forecast: np.ndarray
    variance_forecast: np.ndarray
    split: Split
    notes: Tuple[str, ...] = ()


class StageError(KgarmaError):
    """An error raised inside a pipeline stage, tagged with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage label
        raise StageError(name, exc) from exc


def _variance_label(kind: str) -> str:
    return {"ggarch": "GARMA-G-GARCH", "llwnn_bp": "GARMA-LLWNN-BP", "llwnn_pso": "GARMA-LLWNN-PSO"}[kind]


def fit_variance_model(resid_hist: np.ndarray, init_length: int, spec: VarianceSpec, seed: int):
    """Fit the chosen variance model on the training part of ``resid_hist``.

    Returns ``(ggarch_model, llwnn_model, scaler)`` with the unused entries ``None``.
    """
    train = resid_hist[init_length:]
    if spec.kind == "ggarch":
        fit = fit_ggarch(train, spec.k, spec.fixed_frequencies, _with_seed(spec.ggarch, seed))
        return fit.model, None, None
    sq = resid_hist**2
    start = max(0, init_length - spec.lags)
    used = sq[start:]
    scaler = MinMaxScaler.fit(used)
    X, y = lagged_dataset(scaler.transform(used), spec.lags)
    if X.shape[0] > spec.max_train_samples:
        X, y = X[-spec.max_train_samples :], y[-spec.max_train_samples :]
    model = llwnn_init(spec.lags, seed=seed, mother_wavelet=spec.mother_wavelet)
    if spec.kind == "llwnn_bp":
        model, _ = train_bp(model, X, y, spec.bp_epochs, spec.learning_rate)
    else:
        model, _ = pso_train_llwnn(model, X, y, _with_seed(spec.pso, seed))
    return None, model, scaler


def _with_seed(cfg, seed):
    return replace(cfg, seed=seed)


def _residual_split(garma: GarmaModel, parts: Split, truncation: int) -> Tuple[np.ndarray, np.ndarray]:
    hist = parts.history.values
    # short-series warning is expected when truncation is capped at the history length
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        full = garma_residuals(garma, np.concatenate((hist, parts.test.values)), truncation).values
    return full[: hist.shape[0]], full[hist.shape[0] :]


def _truncation_for(parts: Split, truncation: int) -> int:
    return max(100, min(truncation, parts.history.values.shape[0]))


def forecast_from_models(parts: Split, garma: GarmaModel, ggarch: Optional[GGarchModel] = None,
                         llwnn: Optional[LlwnnModel] = None, scaler: Optional[MinMaxScaler] = None,
                         truncation: int = 2000, name: str = "model"):
    """Forecast the test segment from the end of training with already fitted models.

    Returns ``(report, mean_forecast, variance_forecast)``. The mean layer is
    scored against the training-sample mean and the variance layer against
    the training mean of squared residuals (the constant-variance baseline).
    """
    if (ggarch is None) == (llwnn is None):
        raise ValueError("exactly one of ggarch / llwnn is required")
    if llwnn is not None and scaler is None:
        raise ValueError("an LLWNN forecast needs its scaler")
    init = parts.boundaries[0]
    horizons = parts.horizons
    trunc = _truncation_for(parts, truncation)
    hist = parts.history.values
    resid_hist, resid_test = _stage("residuals", _residual_split, garma, parts, trunc)
    horizon = max(horizons)
    mean_fc = _stage("mean-forecast", garma_mean_forecast, garma, hist, horizon, trunc)
    if ggarch is not None:
        var_fc = _stage("variance-forecast", ggarch_variance_forecast, ggarch, resid_hist[init:], horizon)
    else:
        var_fc = _stage("variance-forecast", llwnn_variance_forecast, llwnn, scaler, resid_hist**2, horizon)
    bench_mean = float(hist.mean())
    bench_var = float(np.mean(resid_hist[init:] ** 2))
    rows: Dict[Tuple[str, int], MetricsRow] = {}
    for h in horizons:
        rows[("mean", h)] = evaluate_metrics(parts.test.values[:h], mean_fc[:h], np.full(h, bench_mean))
    for h in horizons:
        rows[("variance", h)] = evaluate_metrics(resid_test[:h] ** 2, var_fc[:h], np.full(h, bench_var))
    return ForecastReport(name, horizons, rows), mean_fc, var_fc


def run_pipeline(series: TimeSeries, mean_spec: MeanSpec = MeanSpec(),
                 variance_spec: VarianceSpec = VarianceSpec(), split_spec: SplitSpec = SplitSpec(),
                 seed: int = 0, name: Optional[str] = None) -> PipelineResult:
    """Two-stage fit on init+train, single-origin iterated forecasts into test.

    The mean stage never sees the variance specification, so swapping the
    variance model leaves the mean-layer metrics unchanged.
    """
    parts = _stage("split", split, series, split_spec)
    hist = parts.history.values
    trunc = _truncation_for(parts, mean_spec.truncation)
    wcfg = _with_seed(mean_spec.whittle, seed)
    fit = _stage("mean-fit", wavelet_whittle_fit, hist, mean_spec.k, mean_spec.fixed_frequencies, wcfg)
    garma = fit.model
    resid_hist, _ = _stage("residuals", _residual_split, garma, parts, trunc)
    gg, nn, scaler = _stage("variance-fit", fit_variance_model, resid_hist, split_spec.init_length,
                            variance_spec, seed)
    report, mean_fc, var_fc = forecast_from_models(parts, garma, gg, nn, scaler, trunc,
                                                   name or _variance_label(variance_spec.kind))
    return PipelineResult(report, garma, gg, nn, scaler, mean_fc, var_fc, parts)


# --- comparison table ----------------------------------------------------------

@dataclass(frozen=True)
class ComparisonTable:
    """Model x layer x criterion x horizon matrix in insertion order."""

    horizons: Tuple[int, ...]
    rows: List[Tuple[str, str, str, Tuple[float, ...]]]
    # (layer, criterion, horizon) -> name of the best model
    best: Dict[Tuple[str, str, int], str]

    def value(self, model: str, layer: str, criterion: str, h: int) -> float:
        for m, l, c, vals in self.rows:
            if (m, l, c) == (model, layer, criterion):
                return vals[self.horizons.index(h)]
        raise KeyError((model, layer, criterion))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("model,layer,criterion," + ",".join(f"h{h}" for h in self.horizons) + "\n")
        for m, l, c, vals in self.rows:
            buf.write(f"{m},{l},{c}," + ",".join(format_float(v) for v in vals) + "\n")
        layers = []
        for _, l, _, _ in self.rows:
            if l not in layers:
                layers.append(l)
        for l in layers:
            for c in CRITERIA:
                names = [self.best.get((l, c, h), "") for h in self.horizons]
                buf.write(f"best,{l},{c}," + ",".join(names) + "\n")
        return buf.getvalue()


def _score(criterion: str, value: float) -> float:
    if math.isnan(value):
        return math.inf
    if criterion == "r2":
        return -value
    if criterion == "ll":
        return abs(value)
    return value


def compare_report(reports: Sequence[ForecastReport]) -> ComparisonTable:
    """Stack reports into one table and flag the best model per column.

    Higher R^2 wins, LL closest to zero wins, every other criterion is
    minimised. Ties keep the earlier model.
    """
    if not reports:
        raise ValueError("no reports to compare")
    horizons = reports[0].horizons
    for r in reports[1:]:
        if tuple(r.horizons) != tuple(horizons):
            raise DataError(f"report {r.model!r} has horizons {r.horizons}, expected {horizons}")
    rows = []
    best: Dict[Tuple[str, str, int], str] = {}
    best_score: Dict[Tuple[str, str, int], float] = {}
    for r in reports:
        for layer in r.layers:
            for c in CRITERIA:
                vals = tuple(r.rows[(layer, h)].get(c) for h in horizons)
                rows.append((r.model, layer, c, vals))
                for h, v in zip(horizons, vals):
                    key = (layer, c, h)
                    s = _score(c, v)
                    if key not in best or s < best_score[key]:
                        best[key] = r.model
                        best_score[key] = s
    return ComparisonTable(tuple(horizons), rows, best)
