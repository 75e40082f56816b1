"""Bounded Nelder-Mead with jittered restarts, shared by the model fitters."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy import optimize

__all__ = ["OptimResult", "minimize_with_restarts"]

_BAD = 1e300


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_evals: int
    n_restarts: int
    message: str = ""


def minimize_with_restarts(
    fn: Callable[[np.ndarray], float],
    x0: Sequence[float],
    bounds: Sequence[Tuple[float, float]],
    n_restarts: int = 5,
    seed: int = 0,
    jitter: float = 0.1,
    tol: float = 1e-6,
    maxiter: int = 2000,
) -> OptimResult:
    """Minimise ``fn`` inside a box.

    The first start is ``x0``; the others are ``x0`` plus uniform noise of
    ``jitter`` times the box width (clipped). Non-finite objective values are
    mapped to a large constant so the simplex backs away from them. The best
    point over all starts is returned; ``converged`` is true if the winning
    start met the tolerance.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    if x0.size == 0:
        val = float(fn(x0))
        return OptimResult(x0, val, math.isfinite(val), 1, 0)

    def safe(x):
        v = fn(x)
        return v if math.isfinite(v) else _BAD

    rng = np.random.default_rng(seed)
    width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    best = None
    n_evals = 0
    for r in range(max(1, n_restarts)):
        start = x0 if r == 0 else np.clip(x0 + jitter * width * rng.uniform(-1, 1, x0.size), lo, hi)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = optimize.minimize(
                safe,
                start,
                method="Nelder-Mead",
                bounds=list(zip(lo, hi)),
                options={"xatol": tol, "fatol": tol, "maxiter": maxiter, "maxfev": 4 * maxiter},
            )
        n_evals += int(res.nfev)
        if best is None or res.fun < best.fun:
            best = res
    return OptimResult(
        np.asarray(best.x, dtype=float),
        float(best.fun),
        bool(best.success) and best.fun < _BAD,
        n_evals,
        max(1, n_restarts),
        str(best.message),
    )
