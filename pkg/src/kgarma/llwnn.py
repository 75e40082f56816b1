"""Local linear wavelet neural network (LLWNN) with BP and PSO trainers.

Hidden unit ``i`` computes a product-form wavelet activation

    z_i(x) = |a_i|^{-1/2} prod_j psi((x_j - b_ij) / a_ij),   |a_i| = prod_j a_ij

and the network output is ``y = sum_i (w_i0 + sum_j w_ij x_j) z_i(x)``.

Two activations are available. ``"mexican_hat"`` uses
``psi(u) = (1 - u^2) exp(-u^2 / 2)``. ``"gaussian_paper"`` uses
``psi(u) = exp(-u^2)`` and multiplies the unit output by ``0.5 * ||x||^2``.
Its gradients are those of a Gaussian kernel with an input-norm gain, which
the Mexican-hat form does not produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from .errors import DataError, ModelError
from .timeseries import MinMaxScaler

__all__ = [
    "MOTHER_WAVELETS",
    "LlwnnModel",
    "InitRanges",
    "llwnn_init",
    "llwnn_forward",
    "llwnn_predict",
    "llwnn_gradients",
    "dataset_mse",
    "EpochResult",
    "bp_epoch",
    "train_bp",
    "PsoConfig",
    "PsoResult",
    "pso_train",
    "pso_train_llwnn",
    "lagged_dataset",
    "llwnn_variance_forecast",
]

MOTHER_WAVELETS = ("mexican_hat", "gaussian_paper")
_MIN_SCALE = 1e-6


@dataclass(frozen=True)
class LlwnnModel:
    scales: np.ndarray        # (M, p), strictly positive
    translations: np.ndarray  # (M, p)
    weights: np.ndarray       # (M, p + 1); column 0 is the local intercept
    mother_wavelet: str = "mexican_hat"

    def __post_init__(self):
        a = np.array(self.scales, dtype=float)
        b = np.array(self.translations, dtype=float)
        w = np.array(self.weights, dtype=float)
        if a.ndim != 2 or a.shape != b.shape or w.shape != (a.shape[0], a.shape[1] + 1):
            raise ModelError(f"inconsistent shapes scales{a.shape} translations{b.shape} weights{w.shape}")
        if np.any(a <= _MIN_SCALE):
            raise ModelError("all scales must exceed 1e-6")
        if self.mother_wavelet not in MOTHER_WAVELETS:
            raise ModelError(f"unknown mother wavelet {self.mother_wavelet!r}")
        for arr in (a, b, w):
            arr.setflags(write=False)
        object.__setattr__(self, "scales", a)
        object.__setattr__(self, "translations", b)
        object.__setattr__(self, "weights", w)

    @property
    def n_inputs(self) -> int:
        return self.scales.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.scales.shape[0]

    @property
    def hidden_override(self) -> bool:
        """True when the hidden layer size differs from the input count."""
        return self.n_hidden != self.n_inputs

    @property
    def n_params(self) -> int:
        return self.weights.size + 2 * self.scales.size

    def to_vector(self, log_scales: bool = False) -> np.ndarray:
        a = np.log(self.scales) if log_scales else self.scales
        return np.concatenate((self.weights.ravel(), a.ravel(), self.translations.ravel()))

    def from_vector(self, vec, log_scales: bool = False) -> "LlwnnModel":
        m, p = self.scales.shape
        vec = np.asarray(vec, dtype=float)
        nw = m * (p + 1)
        w = vec[:nw].reshape(m, p + 1)
        a = vec[nw : nw + m * p].reshape(m, p)
        b = vec[nw + m * p :].reshape(m, p)
        if log_scales:
            a = np.exp(a)
        return LlwnnModel(a, b, w, self.mother_wavelet)


@dataclass(frozen=True)
class InitRanges:
    scale: Tuple[float, float] = (0.5, 2.0)
    translation: Tuple[float, float] = (0.0, 1.0)
    weight: Tuple[float, float] = (-0.1, 0.1)


def llwnn_init(n_inputs: int, seed: int = 0, ranges: InitRanges = InitRanges(),
               n_hidden: Optional[int] = None, mother_wavelet: str = "mexican_hat") -> LlwnnModel:
    """Random network with ``n_hidden = n_inputs`` unless overridden."""
    if n_inputs < 1:
        raise ValueError("n_inputs must be >= 1")
    m = n_inputs if n_hidden is None else int(n_hidden)
    rng = np.random.default_rng(seed)
    a = rng.uniform(*ranges.scale, size=(m, n_inputs))
    b = rng.uniform(*ranges.translation, size=(m, n_inputs))
    w = rng.uniform(*ranges.weight, size=(m, n_inputs + 1))
    return LlwnnModel(a, b, w, mother_wavelet)


def _mother(kind: str, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """psi(u) and psi'(u)."""
    if kind == "mexican_hat":
        e = np.exp(-0.5 * u * u)
        return (1.0 - u * u) * e, u * (u * u - 3.0) * e
    e = np.exp(-u * u)
    return e, -2.0 * u * e


def _outer(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "gaussian_paper":
        return 0.5 * np.sum(x * x, axis=-1)
    return np.ones(x.shape[:-1])


def _check_input(model: LlwnnModel, x: np.ndarray) -> None:
    if x.shape[-1] != model.n_inputs:
        raise DataError(f"input has {x.shape[-1]} features, network expects {model.n_inputs}")


def llwnn_predict(model: LlwnnModel, X) -> np.ndarray:
    """Network output for each row of ``X`` (shape ``(n, p)``)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_input(model, X)
    u = (X[:, None, :] - model.translations[None]) / model.scales[None]
    psi, _ = _mother(model.mother_wavelet, u)
    norm = np.prod(model.scales, axis=1) ** -0.5
    z = np.prod(psi, axis=2) * norm[None, :] * _outer(model.mother_wavelet, X)[:, None]
    v = model.weights[:, 0][None, :] + X @ model.weights[:, 1:].T
    return np.sum(v * z, axis=1)


def llwnn_forward(model: LlwnnModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DataError("llwnn_forward takes a single input vector")
    return float(llwnn_predict(model, x[None, :])[0])


def _exclusive_products(vals: np.ndarray) -> np.ndarray:
    """``out[i, j] = prod_{k != j} vals[i, k]`` without division."""
    m, p = vals.shape
    pre = np.ones((m, p))
    suf = np.ones((m, p))
    if p > 1:
        pre[:, 1:] = np.cumprod(vals[:, :-1], axis=1)
        suf[:, :-1] = np.cumprod(vals[:, :0:-1], axis=1)[:, ::-1]
    return pre * suf


def _gradients(a, b, w, kind, x, target):
    u = (x[None, :] - b) / a
    psi, dpsi = _mother(kind, u)
    coef = float(_outer(kind, x)) * np.prod(a, axis=1) ** -0.5
    z = coef * np.prod(psi, axis=1)
    v = w[:, 0] + w[:, 1:] @ x
    y = float(v @ z)
    e = target - y
    dz_du = coef[:, None] * dpsi * _exclusive_products(psi)
    dy_dw = np.concatenate((z[:, None], z[:, None] * x[None, :]), axis=1)
    dy_db = -v[:, None] * dz_du / a
    dy_da = v[:, None] * (-0.5 * z[:, None] / a - dz_du * u / a)
    return -e * dy_dw, -e * dy_da, -e * dy_db, y


def llwnn_gradients(model: LlwnnModel, x, target: float):
    """Gradients of ``E = 0.5 (target - y)^2`` for one sample.

    Returns ``(dE/dweights, dE/dscales, dE/dtranslations, y)``.
    """
    x = np.asarray(x, dtype=float)
    _check_input(model, x)
    return _gradients(model.scales, model.translations, model.weights, model.mother_wavelet, x, target)


def dataset_mse(model: LlwnnModel, X, y) -> float:
    resid = np.asarray(y, dtype=float) - llwnn_predict(model, X)
    return float(np.mean(resid * resid))


class EpochResult(NamedTuple):
    model: LlwnnModel
    mse: float
    skipped: int


def bp_epoch(model: LlwnnModel, X, y, learning_rate: float = 0.5, shuffle: bool = False,
             seed: int = 0) -> EpochResult:
    """One pass of per-sample gradient descent over ``(X, y)``.

    ``mse`` is the mean squared error of the pre-update predictions seen
    during the pass. Samples producing a non-finite gradient are skipped.
    Scales are kept above ``1e-6``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise DataError("dataset must be non-empty with matching inputs and targets")
    if not learning_rate > 0:
        raise ValueError("learning_rate must be positive")
    _check_input(model, X)
    a = model.scales.copy()
    b = model.translations.copy()
    w = model.weights.copy()
    order = np.arange(X.shape[0])
    if shuffle:
        np.random.default_rng(seed).shuffle(order)
    sq = 0.0
    used = 0
    skipped = 0
    for i in order:
        gw, ga, gb, out = _gradients(a, b, w, model.mother_wavelet, X[i], y[i])
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(ga)) and np.all(np.isfinite(gb))):
            skipped += 1
            continue
        sq += (y[i] - out) ** 2
        used += 1
        w = w - learning_rate * gw
        a = np.maximum(a - learning_rate * ga, 2 * _MIN_SCALE)
        b = b - learning_rate * gb
    mse = sq / used if used else math.nan
    return EpochResult(LlwnnModel(a, b, w, model.mother_wavelet), float(mse), skipped)


def train_bp(model: LlwnnModel, X, y, epochs: int, learning_rate: float = 0.5,
             shuffle: bool = False, seed: int = 0) -> Tuple[LlwnnModel, List[float]]:
    """Run ``epochs`` BP passes; returns the final model and per-epoch MSE trace."""
    trace = []
    for ep in range(epochs):
        model, mse, _ = bp_epoch(model, X, y, learning_rate, shuffle, seed + ep)
        trace.append(mse)
    return model, trace


# --- particle swarm --------------------------------------------------------

@dataclass(frozen=True)
class PsoConfig:
    n_particles: int = 20
    inertia: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    max_iterations: int = 500
    # per-dimension speed limit as a fraction of the search-box width
    velocity_clamp: float = 0.5
    seed: int = 0
    zero_initial_velocity: bool = False
    # recorded for reference only; the swarm topology is global-best
    neighborhood_size: int = 16

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 <= self.inertia <= 1.2:
            raise ValueError("inertia must lie in [0, 1.2]")
        if self.c1 < 0 or self.c2 < 0:
            raise ValueError("c1 and c2 must be non-negative")


class PsoResult(NamedTuple):
    best_params: np.ndarray
    best_value: float
    trace: np.ndarray


def pso_train(objective: Callable[[np.ndarray], float], dim: int, config: PsoConfig = PsoConfig(),
              bounds: Tuple = (-1.0, 1.0), initial=None) -> PsoResult:
    """Global-best particle swarm minimisation inside a box.

    ``bounds`` is ``(lo, hi)`` with scalars or length-``dim`` arrays.
    ``initial`` optionally fixes the starting positions of the first rows of
    the swarm. ``trace[0]`` is the best initial value and ``trace[i]`` the
    global best after iteration ``i``.
    """
    rng = np.random.default_rng(config.seed)
    lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (dim,)).copy()
    vmax = config.velocity_clamp * (hi - lo)
    n = config.n_particles
    pos = rng.uniform(lo, hi, size=(n, dim))
    if initial is not None:
        init = np.atleast_2d(np.asarray(initial, dtype=float))
        pos[: init.shape[0]] = np.clip(init, lo, hi)
    if config.zero_initial_velocity:
        vel = np.zeros((n, dim))
    else:
        vel = rng.uniform(-vmax, vmax, size=(n, dim))

    def evaluate(P):
        vals = np.array([objective(p) for p in P], dtype=float)
        return np.where(np.isfinite(vals), vals, np.inf)

    vals = evaluate(pos)
    pbest, pbest_val = pos.copy(), vals.copy()
    g = int(np.argmin(pbest_val))
    gbest, gbest_val = pbest[g].copy(), float(pbest_val[g])
    trace = [gbest_val]
    for _ in range(config.max_iterations):
        r1 = rng.uniform(size=(n, dim))
        r2 = rng.uniform(size=(n, dim))
        vel = config.inertia * vel + config.c1 * r1 * (pbest - pos) + config.c2 * r2 * (gbest - pos)
        vel = np.clip(vel, -vmax, vmax)
        pos = np.clip(pos + vel, lo, hi)
        vals = evaluate(pos)
        better = vals < pbest_val
        pbest[better] = pos[better]
        pbest_val[better] = vals[better]
        g = int(np.argmin(pbest_val))
        if pbest_val[g] < gbest_val:
            gbest, gbest_val = pbest[g].copy(), float(pbest_val[g])
        trace.append(gbest_val)
    return PsoResult(gbest, gbest_val, np.asarray(trace))


def _llwnn_box(model: LlwnnModel) -> Tuple[np.ndarray, np.ndarray]:
    m, p = model.scales.shape
    nw, na = m * (p + 1), m * p
    lo = np.concatenate((np.full(nw, -2.0), np.full(na, math.log(0.05)), np.full(na, -1.0)))
    hi = np.concatenate((np.full(nw, 2.0), np.full(na, math.log(20.0)), np.full(na, 2.0)))
    return lo, hi


def pso_train_llwnn(template: LlwnnModel, X, y, config: PsoConfig = PsoConfig()) -> Tuple[LlwnnModel, PsoResult]:
    """Train all network parameters by PSO on the dataset MSE.

    Scales are searched on a log scale. Particle 0 starts at the template,
    so the returned network is never worse than the template (as long as the
    template lies inside the search box).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise DataError("dataset must be non-empty")
    lo, hi = _llwnn_box(template)

    def objective(vec):
        return dataset_mse(template.from_vector(vec, log_scales=True), X, y)

    start = template.to_vector(log_scales=True)
    res = pso_train(objective, start.size, config, (lo, hi), initial=start)
    return template.from_vector(res.best_params, log_scales=True), res


# --- variance forecasting ---------------------------------------------------

def lagged_dataset(values, p: int) -> Tuple[np.ndarray, np.ndarray]:
    """Rows ``values[t-p:t]`` (oldest first) with target ``values[t]``."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] <= p:
        raise DataError(f"need more than {p} values to build lagged inputs")
    X = np.lib.stride_tricks.sliding_window_view(v[:-1], p)
    return np.ascontiguousarray(X), v[p:].copy()


def llwnn_variance_forecast(model: LlwnnModel, scaler: MinMaxScaler, recent_sq_residuals,
                            horizon: int, floor: float = 1e-12) -> np.ndarray:
    """Iterated variance forecasts from the last ``p`` squared residuals."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    p = model.n_inputs
    r = np.asarray(recent_sq_residuals, dtype=float)
    if r.shape[0] < p:
        raise DataError(f"need at least {p} recent squared residuals")
    window = list(scaler.transform(r[-p:]))
    out = np.empty(horizon)
    for h in range(horizon):
        nxt = llwnn_forward(model, np.asarray(window[-p:]))
        out[h] = nxt
        window.append(nxt)
    return np.maximum(scaler.inverse_transform(out), floor)
