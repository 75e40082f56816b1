"""Wavelet packets and wavelet-domain estimation of k-factor GARMA models.

The packet transform follows the sequency-ordered recursion

    W[j, n, t] = sum_l u[n, l] * W[j-1, n // 2, (2t + 1 - l) mod N_{j-1}]

with ``u = g`` when ``n % 4`` is 0 or 3 and ``u = h`` otherwise, so that node
``(j, n)`` is associated with the band ``[n / 2^{j+1}, (n+1) / 2^{j+1}]`` in
cycles per sample.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import roots_jacobi, roots_legendre

from ._daubechies import _DAUBECHIES_SCALING
from .diagnostics import ljung_box, periodogram
from .errors import ConvergenceError, DataError, ModelError
from .gegenbauer import GarmaModel, GegenbauerFactor, _spectral_density_unchecked, _roots_outside
from .optim import minimize_with_restarts
from .timeseries import TimeSeries

__all__ = [
    "WaveletFilterPair",
    "PacketTree",
    "WaveletBasis",
    "daubechies_filters",
    "dwpt",
    "idwpt",
    "best_basis",
    "node_band_variance",
    "band_variances",
    "WhittleConfig",
    "WhittleFit",
    "wavelet_whittle_objective",
    "wavelet_whittle_fit",
    "PeakReport",
    "periodogram_peaks",
    "detect_gegenbauer_frequencies",
    "default_depth",
    "basis_table",
]

Node = Tuple[int, int]


@dataclass(frozen=True)
class WaveletFilterPair:
    g: np.ndarray
    h: np.ndarray
    family_order: int

    @property
    def length(self) -> int:
        return self.g.shape[0]


def daubechies_filters(order: int) -> WaveletFilterPair:
    """Daubechies scaling filter ``g`` and its quadrature mirror ``h``.

    ``h[l] = (-1)**l * g[L-1-l]``; order 1 is the Haar pair.
    """
    if order not in _DAUBECHIES_SCALING:
        raise ValueError(f"unsupported Daubechies order {order}; choose 1..10")
    g = np.array(_DAUBECHIES_SCALING[order], dtype=float)
    L = g.shape[0]
    h = np.array([(-1) ** l * g[L - 1 - l] for l in range(L)])
    g.setflags(write=False)
    h.setflags(write=False)
    return WaveletFilterPair(g, h, order)


def _node_filter(filters: WaveletFilterPair, n: int) -> np.ndarray:
    return filters.g if n % 4 in (0, 3) else filters.h


@lru_cache(maxsize=256)
def _index_matrix(parent_len: int, filt_len: int) -> np.ndarray:
    t = np.arange(parent_len // 2)[:, None]
    l = np.arange(filt_len)[None, :]
    idx = (2 * t + 1 - l) % parent_len
    idx.setflags(write=False)
    return idx


def _analysis_step(parent: np.ndarray, u: np.ndarray) -> np.ndarray:
    return parent[_index_matrix(parent.shape[0], u.shape[0])] @ u


def _synthesis_step(child: np.ndarray, u: np.ndarray) -> np.ndarray:
    m = 2 * child.shape[0]
    idx = _index_matrix(m, u.shape[0])
    return np.bincount(idx.ravel(), weights=(child[:, None] * u[None, :]).ravel(), minlength=m)


@dataclass(frozen=True)
class PacketTree:
    nodes: Dict[Node, np.ndarray]
    depth: int
    original_length: int
    filters: WaveletFilterPair

    def level(self, j: int) -> List[np.ndarray]:
        return [self.nodes[(j, n)] for n in range(2**j)]


def _is_dyadic(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def dwpt(series, filters: WaveletFilterPair, depth: int) -> PacketTree:
    """Full wavelet packet tree to ``depth`` with circular boundary handling."""
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    n = x.shape[0]
    if not _is_dyadic(n):
        raise DataError(f"DWPT needs a dyadic length, got {n}; pad or truncate explicitly")
    jmax = n.bit_length() - 1
    if not 0 <= depth <= jmax:
        raise DataError(f"depth {depth} outside [0, {jmax}] for length {n}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    nodes: Dict[Node, np.ndarray] = {(0, 0): x.astype(float, copy=True)}
    for j in range(1, depth + 1):
        for nn in range(2**j):
            nodes[(j, nn)] = _analysis_step(nodes[(j - 1, nn // 2)], _node_filter(filters, nn))
    return PacketTree(nodes, depth, n, filters)


@dataclass(frozen=True)
class WaveletBasis:
    """A disjoint dyadic cover of ``[0, 1/2]`` by packet nodes."""

    nodes: Tuple[Node, ...]
    lb_pvalues: Mapping[Node, float] = field(default_factory=dict)

    def __post_init__(self):
        nodes = tuple(sorted(tuple(int(v) for v in nd) for nd in self.nodes))
        object.__setattr__(self, "nodes", nodes)
        _check_cover(nodes)

    @staticmethod
    def interval(node: Node) -> Tuple[float, float]:
        j, n = node
        return n / 2 ** (j + 1), (n + 1) / 2 ** (j + 1)

    @property
    def intervals(self) -> List[Tuple[float, float]]:
        return [self.interval(nd) for nd in self.nodes]

    @classmethod
    def level(cls, j: int) -> "WaveletBasis":
        return cls(tuple((j, n) for n in range(2**j)))

    def at_least(self, min_level: int) -> "WaveletBasis":
        """Replace every node coarser than ``min_level`` by its descendants at that level."""
        out = []
        for j, n in self.nodes:
            if j >= min_level:
                out.append((j, n))
            else:
                step = 2 ** (min_level - j)
                out.extend((min_level, n * step + i) for i in range(step))
        kept = {nd: p for nd, p in self.lb_pvalues.items() if nd in out}
        return WaveletBasis(tuple(out), kept)


def _check_cover(nodes: Sequence[Node]) -> None:
    spans = []
    for j, n in nodes:
        if j < 0 or not 0 <= n < 2**j:
            raise DataError(f"invalid packet node {(j, n)}")
        spans.append((Fraction(n, 2**j), Fraction(n + 1, 2**j)))
    spans.sort()
    edge = Fraction(0)
    for lo, hi in spans:
        if lo != edge:
            kind = "overlapping" if lo < edge else "incomplete"
            raise DataError(f"{kind} cover: band starting at {float(lo) / 2} does not follow {float(edge) / 2}")
        edge = hi
    if edge != 1:
        raise DataError("incomplete cover: bands do not reach 1/2")


def idwpt(tree, basis: WaveletBasis, filters: Optional[WaveletFilterPair] = None) -> np.ndarray:
    """Invert the packet transform from the coefficients of ``basis`` nodes.

    ``tree`` may be a :class:`PacketTree` or a mapping ``(j, n) -> coeffs``
    (in which case ``filters`` is required). Only basis nodes are read.
    """
    if isinstance(tree, PacketTree):
        coeffs, filters = tree.nodes, tree.filters
    else:
        coeffs = tree
        if filters is None:
            raise ValueError("filters required when passing a coefficient mapping")
    if not isinstance(basis, WaveletBasis):
        basis = WaveletBasis(tuple(basis))
    members = set(basis.nodes)
    max_j = max(j for j, _ in members)

    def build(node: Node) -> np.ndarray:
        if node in members:
            if node not in coeffs:
                raise DataError(f"coefficients for basis node {node} missing")
            return np.asarray(coeffs[node], dtype=float)
        j, n = node
        if j >= max_j:
            raise DataError(f"node {node} not covered by the basis")
        lo, hi = (j + 1, 2 * n), (j + 1, 2 * n + 1)
        return (_synthesis_step(build(lo), _node_filter(filters, lo[1]))
                + _synthesis_step(build(hi), _node_filter(filters, hi[1])))

    return build((0, 0))


def default_depth(n: int) -> int:
    """``min(6, log2(n) - 4)``: keeps at least 16 coefficients per node."""
    return max(0, min(6, int(math.log2(n)) - 4))


def _lb_lags(n_j: int) -> int:
    return min(10, n_j // 4)


def best_basis(tree: PacketTree, alpha: float = 0.05) -> WaveletBasis:
    """Top-down whiteness-driven basis search.

    A node whose coefficients pass the Ljung-Box test at level ``alpha`` is
    kept; otherwise it is split. Nodes at the tree's maximum depth, and nodes
    too short to test, are kept as leaves.
    """
    if not 0 < alpha <= 0.5:
        raise ValueError("alpha must lie in (0, 0.5]")
    leaves: List[Node] = []
    pvals: Dict[Node, float] = {}

    def visit(node: Node):
        j, n = node
        w = tree.nodes[node]
        lags = _lb_lags(w.shape[0])
        p = math.nan
        if lags >= 1 and w.shape[0] > 2 * lags and np.any(w != w[0]):
            p = ljung_box(w, lags)[1]
        elif j < tree.depth:
            warnings.warn(f"node {node} too short or degenerate for the portmanteau test; kept as leaf",
                          RuntimeWarning, stacklevel=3)
        pvals[node] = p
        if j >= tree.depth or not p <= alpha:
            leaves.append(node)
            return
        visit((j + 1, 2 * n))
        visit((j + 1, 2 * n + 1))

    visit((0, 0))
    return WaveletBasis(tuple(leaves), pvals)


def basis_table(tree: PacketTree, basis: WaveletBasis) -> List[dict]:
    """Per-node rows ``j, n, f_low, f_high, N_j, energy, LB_p`` for export."""
    rows = []
    for nd in basis.nodes:
        w = tree.nodes[nd]
        lo, hi = basis.interval(nd)
        p = basis.lb_pvalues.get(nd, math.nan)
        if math.isnan(p):
            lags = _lb_lags(w.shape[0])
            if lags >= 1 and w.shape[0] > 2 * lags and np.any(w != w[0]):
                p = ljung_box(w, lags)[1]
        rows.append({"j": nd[0], "n": nd[1], "f_low": lo, "f_high": hi, "N_j": w.shape[0],
                     "energy": float(w @ w), "LB_p": p})
    return rows


# --- band-integrated spectral variances -----------------------------------

def _pole_exponents(model: GarmaModel) -> List[Tuple[float, float]]:
    """(frequency in cycles/sample, local power-law exponent) for each factor.

    Near an interior pole the spectrum behaves like ``|f - f0|^{-2d}``; at
    ``f0 = 0`` or ``1/2`` (``nu = +-1``) the squared factor doubles it.
    """
    out = []
    for fac in model.factors:
        if fac.d == 0.0:
            continue
        expo = -4.0 * fac.d if abs(fac.nu) == 1.0 else -2.0 * fac.d
        out.append((fac.frequency, expo))
    return out


@lru_cache(maxsize=64)
def _legendre(npts: int) -> Tuple[np.ndarray, np.ndarray]:
    return roots_legendre(npts)


def _band_integral(model: GarmaModel, lo: float, hi: float, poles, npts: int) -> float:
    """Integral over ``[lo, hi]`` of ``S(f) = 2 pi f(2 pi f)``."""
    snap = 1e-10 * (hi - lo)
    poles = [(lo if abs(f0 - lo) < snap else hi if abs(f0 - hi) < snap else f0, e) for f0, e in poles]
    cuts = [lo]
    for f0, _ in poles:
        if lo < f0 < hi:
            cuts.append(f0)
    cuts.append(hi)
    cuts.sort()
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        ea = sum(e for f0, e in poles if f0 == a)
        eb = sum(e for f0, e in poles if f0 == b)
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        if ea == 0.0 and eb == 0.0:
            x, w = _legendre(npts)
            f = mid + half * x
            total += half * float(w @ (2.0 * np.pi * _spectral_density_unchecked(model, 2.0 * np.pi * f)))
            continue
        # Gauss-Jacobi: weight (1-x)^eb (1+x)^ea absorbs the endpoint singularities
        x, w = roots_jacobi(npts, eb, ea)
        f = mid + half * x
        dist_a = f - a
        dist_b = b - f
        smooth = 2.0 * np.pi * _spectral_density_unchecked(model, 2.0 * np.pi * f)
        smooth = smooth * dist_a ** (-ea) * dist_b ** (-eb)
        total += half ** (1.0 + ea + eb) * float(w @ smooth)
    return total


def band_variances(model: GarmaModel, nodes: Iterable[Node], quadrature_points: int = 32) -> np.ndarray:
    """Vector of :func:`node_band_variance` values for ``nodes``."""
    if quadrature_points < 16:
        raise ValueError("quadrature_points must be >= 16")
    poles = _pole_exponents(model)
    out = []
    for j, n in nodes:
        lo, hi = n / 2 ** (j + 1), (n + 1) / 2 ** (j + 1)
        out.append(2 ** (j + 1) * _band_integral(model, lo, hi, poles, quadrature_points))
    return np.asarray(out)


def node_band_variance(model: GarmaModel, node: Node, quadrature_points: int = 32) -> float:
    """Variance of the packet coefficients of ``node`` implied by ``model``.

    ``2^{j+1}`` times the integral of the spectrum ``S(f) = 2 pi f(2 pi f)``
    (cycles-per-sample density, integrating to the variance over
    ``[-1/2, 1/2]``) over the node's band. Poles are handled exactly by
    splitting the band there and using Gauss-Jacobi rules.
    """
    return float(band_variances(model, [node], quadrature_points)[0])


# --- periodogram peaks -----------------------------------------------------

@dataclass(frozen=True)
class PeakReport:
    frequencies: np.ndarray
    heights: np.ndarray
    # peak height over median smoothed ordinate, per peak
    height_ratio: np.ndarray
    bins: np.ndarray


def periodogram_peaks(series, k: int, span: int = 5, min_separation: Optional[int] = None) -> PeakReport:
    """The ``k`` highest separated local maxima of the Daniell-smoothed periodogram.

    Peaks closer than ``min_separation`` Fourier bins to a higher one are
    skipped; the default ``max(5, n // 256)`` keeps the shoulders of one
    pole from being reported as extra peaks.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    freqs, ords = periodogram(series)
    if min_separation is None:
        min_separation = max(5, 2 * freqs.shape[0] // 256)
    smooth = uniform_filter1d(ords, size=span, mode="nearest")
    m = smooth.shape[0]
    left = np.concatenate(([-np.inf], smooth[:-1]))
    right = np.concatenate((smooth[1:], [-np.inf]))
    cand = np.flatnonzero((smooth > left) & (smooth >= right))
    cand = cand[np.argsort(-smooth[cand], kind="stable")]
    chosen: List[int] = []
    for c in cand:
        if all(abs(int(c) - s) >= min_separation for s in chosen):
            chosen.append(int(c))
            if len(chosen) == k:
                break
    if len(chosen) < k:
        raise DataError(f"only {len(chosen)} separated periodogram peaks found, {k} requested")
    idx = np.array(chosen)
    med = float(np.median(smooth))
    ratio = smooth[idx] / med if med > 0 else np.full(idx.shape, np.inf)
    return PeakReport(freqs[idx], smooth[idx], ratio, idx + 1)


def detect_gegenbauer_frequencies(series, k: int, span: int = 5,
                                  min_separation: Optional[int] = None) -> np.ndarray:
    """Candidate Gegenbauer frequencies (cycles/sample), highest peak first."""
    return periodogram_peaks(series, k, span, min_separation).frequencies


# --- wavelet Whittle estimation --------------------------------------------

@dataclass(frozen=True)
class WhittleConfig:
    wavelet_order: int = 4
    alpha: float = 0.05
    depth: Optional[int] = None
    p: int = 0
    q: int = 0
    refine_frequencies: bool = True
    n_restarts: int = 5
    seed: int = 0
    tol: float = 1e-6
    maxiter: int = 2000
    quadrature_points: int = 32
    d_bounds: Tuple[float, float] = (-0.49, 0.49)
    nu_margin: float = 1e-6
    # finest level every estimation node must reach; None means depth - 2
    min_level: Optional[int] = None


@dataclass(frozen=True)
class WhittleFit:
    model: GarmaModel
    objective: float
    basis: WaveletBasis
    n_used: int
    converged: bool
    n_evals: int
    initial_frequencies: Tuple[float, ...]
    refined: bool
    messages: Tuple[str, ...] = ()


def wavelet_whittle_objective(tree: PacketTree, basis: WaveletBasis, model: GarmaModel,
                              quadrature_points: int = 32) -> Tuple[float, float]:
    """Profiled approximate negative log-likelihood and the profiled ``sigma^2``.

    With unit-innovation band variances ``s_{j,n}`` the full objective
    ``sum N_j ln(sigma^2 s) + ||W||^2 / (sigma^2 s)`` is minimised by
    ``sigma^2 = (1/N) sum ||W||^2 / s``.
    """
    unit = GarmaModel(0.0, model.ar, model.ma, model.factors, 1.0)
    s = band_variances(unit, basis.nodes, quadrature_points)
    n_j = np.array([tree.nodes[nd].shape[0] for nd in basis.nodes], dtype=float)
    energy = np.array([float(tree.nodes[nd] @ tree.nodes[nd]) for nd in basis.nodes])
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        return math.inf, math.nan
    n = n_j.sum()
    sigma2 = float(np.sum(energy / s) / n)
    if not sigma2 > 0:
        return math.inf, math.nan
    return float(n * math.log(sigma2) + n_j @ np.log(s) + n), sigma2


def _dyadic_prefix(x: np.ndarray) -> np.ndarray:
    n = 1 << (x.shape[0].bit_length() - 1)
    return x[:n]


def wavelet_whittle_fit(series, k: int, fixed_frequencies=None,
                        config: WhittleConfig = WhittleConfig()) -> WhittleFit:
    """Fit a k-factor GARMA model by wavelet-packet approximate likelihood.

    The longest dyadic prefix of the demeaned series is transformed, a best
    basis is selected, and the profiled objective is minimised over the
    long-memory exponents, AR and MA coefficients and, when
    ``refine_frequencies`` is set and the frequencies were not fixed by the
    caller, the Gegenbauer frequencies themselves (second pass).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    x = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    mu = float(x.mean())
    xs = _dyadic_prefix(x - mu)
    n = xs.shape[0]
    if n < 64:
        raise DataError(f"usable dyadic length {n} too short (need >= 64)")
    depth = default_depth(n) if config.depth is None else config.depth
    tree = dwpt(xs, daubechies_filters(config.wavelet_order), depth)
    basis = best_basis(tree, config.alpha)
    min_level = max(0, depth - 2) if config.min_level is None else min(config.min_level, depth)
    basis = basis.at_least(min_level)

    user_fixed = fixed_frequencies is not None
    if user_fixed:
        freqs = np.atleast_1d(np.asarray(fixed_frequencies, dtype=float))
        if freqs.shape[0] != k:
            raise ValueError(f"{freqs.shape[0]} fixed frequencies given for k={k}")
    else:
        freqs = detect_gegenbauer_frequencies(xs, k)
    nus0 = np.clip(np.cos(2.0 * np.pi * freqs), -1.0, 1.0)
    nu_lim = 1.0 - config.nu_margin
    p, q = config.p, config.q

    def unpack(theta, nus):
        d = theta[:k]
        ar = theta[k : k + p]
        ma = theta[k + p : k + p + q]
        return d, tuple(ar), tuple(ma), nus

    def build(d, ar, ma, nus) -> GarmaModel:
        facs = tuple(GegenbauerFactor(float(di), float(ni)) for di, ni in zip(d, nus))
        return GarmaModel(0.0, ar, ma, facs, 1.0)

    def evaluate(model: GarmaModel) -> float:
        if not (model.ar_stationary and model.ma_invertible):
            return math.inf
        if any(not f.is_stationary for f in model.factors):
            return math.inf
        return wavelet_whittle_objective(tree, basis, model, config.quadrature_points)[0]

    # pass 1: frequencies held at their initial values
    base_bounds = [config.d_bounds] * k + [(-0.99, 0.99)] * (p + q)
    theta0 = np.concatenate((np.full(k, 0.1), np.zeros(p + q)))
    res = minimize_with_restarts(
        lambda th: evaluate(build(*unpack(th, nus0))),
        theta0, base_bounds, config.n_restarts, config.seed, 0.1, config.tol, config.maxiter,
    )
    n_evals = res.n_evals
    converged = res.converged
    theta, nus = res.x, nus0
    refined = False
    messages = [res.message]

    if config.refine_frequencies and not user_fixed:
        fixed_unit = np.abs(nus0) == 1.0
        lim = np.where(fixed_unit, nus0, nu_lim)

        def full(th):
            nus = th[-k:].copy()
            nus[fixed_unit] = nus0[fixed_unit]
            return evaluate(build(*unpack(th[:-k], nus)))

        bounds2 = base_bounds + [(-l if not u else l, l) for l, u in zip(lim, fixed_unit)]
        start = np.concatenate((theta, np.clip(nus0, -nu_lim, nu_lim)))
        res2 = minimize_with_restarts(full, start, bounds2, config.n_restarts, config.seed + 1,
                                      0.02, config.tol, config.maxiter)
        n_evals += res2.n_evals
        messages.append(res2.message)
        if res2.fun <= res.fun:
            theta = res2.x[:-k]
            nus = res2.x[-k:].copy()
            nus[fixed_unit] = nus0[fixed_unit]
            converged = res2.converged
        refined = True

    d, ar, ma, nus = unpack(theta, nus)
    unit_model = build(d, ar, ma, nus)
    obj, sigma2 = wavelet_whittle_objective(tree, basis, unit_model, config.quadrature_points)
    if not math.isfinite(obj):
        raise ConvergenceError("wavelet Whittle fit ended at a non-finite objective")
    model = GarmaModel(mu, ar, ma, unit_model.factors, sigma2)
    return WhittleFit(model, obj, basis, n, converged, n_evals, tuple(float(f) for f in freqs),
                      refined, tuple(messages))
