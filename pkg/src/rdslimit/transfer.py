"""Ulam discretisation of transfer operators and the densities built from them.

A density is a vector of ``k`` cell values on the uniform grid of [0, 1]; mass
is the mean of the cell values.  An :class:`UlamOperator` is row-stochastic:
entry ``(i, j)`` is the fraction of cell ``i`` that the map sends into cell
``j``, so densities are pushed forward as row vectors, ``v -> v @ P``.
Entries are computed from exact branch preimages of the grid, not sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .driving import OmegaPath
from .maps import BETA, LSV, MapFamily, MapSpec, branch_image, branch_inverse, branch_partition


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class DensityVector:
    values: np.ndarray
    residual: float | None = None
    iterations: int | None = None

    @property
    def k(self) -> int:
        return self.values.size

    @property
    def mass(self) -> float:
        return float(self.values.mean())

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.k) + 0.5) / self.k

    def normalized(self) -> "DensityVector":
        return DensityVector(self.values / self.mass, self.residual, self.iterations)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class UlamOperator:
    k: int
    matrix: sp.csr_matrix
    source: str
    _pt: sp.csr_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))
        object.__setattr__(self, "_pt", self.matrix.T.tocsr())

    def push(self, v):
        """``v @ P`` for one density (1-d) or a stack of densities (rows)."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            return self._pt @ v
        return (self._pt @ v.T).T

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _branch_formula(spec: MapSpec, index: int, x):
    if spec.family == BETA:
        return spec.param * x - index
    if index == 1:
        return 2.0 * x - 1.0
    return x * (1.0 + 2.0**spec.param * x**spec.param)


def ulam_matrix(spec: MapSpec, k: int) -> UlamOperator:
    """Ulam matrix ``m(I_i n T^-1 I_j) / m(I_i)`` via exact branch preimages."""
    if k < 2:
        raise ValueError("k must be at least 2")
    grid = np.arange(k + 1) / k
    rows, cols, vals = [], [], []
    for b, (lo, hi) in enumerate(branch_partition(spec)):
        ilo, ihi = branch_image(spec, b)
        ys = grid[(grid > ilo) & (grid < ihi)]
        cuts = np.concatenate((
            [lo, hi],
            grid[(grid > lo) & (grid < hi)],
            branch_inverse(spec, b, ys),
        ))
        cuts = np.unique(np.clip(cuts, lo, hi))
        left, right = cuts[:-1], cuts[1:]
        width = right - left
        keep = width > 0
        left, right, width = left[keep], right[keep], width[keep]
        mid = 0.5 * (left + right)
        src = np.minimum((mid * k).astype(np.int64), k - 1)
        dst = np.clip((_branch_formula(spec, b, mid) * k).astype(np.int64), 0, k - 1)
        rows.append(src)
        cols.append(dst)
        vals.append(width * k)
    mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(k, k)).tocsr()
    mat.sum_duplicates()
    return UlamOperator(k, mat, spec.label)


def family_operators(family: MapFamily, k: int) -> list[UlamOperator]:
    return [ulam_matrix(s, k) for s in family.specs]


def annealed_operator(family: MapFamily, probs: Sequence[float], k: int,
                      operators: Sequence[UlamOperator] | None = None) -> UlamOperator:
    """``sum_i p_i P_i``."""
    ops = list(operators) if operators is not None else family_operators(family, k)
    if len(ops) != len(probs) or len(ops) != family.m:
        raise ValueError("need one probability per map")
    if any(op.k != k for op in ops):
        raise ValueError("operator grid sizes disagree")
    mat = sum(p * op.matrix for p, op in zip(probs, ops))
    return UlamOperator(k, mat, "annealed")


def stationary_density(op: UlamOperator, tol: float = 1e-12, max_iter: int = 200_000,
                       block: int = 100) -> DensityVector:
    """Fixed point of ``v -> v @ P`` by power iteration.

    Every ``block`` steps the iterate is replaced by the block average
    (Cesaro), which damps any cyclic component.  The residual is the L1 norm
    of ``v P - v`` (grid measure).
    """
    v = np.ones(op.k)
    acc = np.zeros(op.k)
    residual = math.inf
    for it in range(1, max_iter + 1):
        v = op.push(v)
        acc += v
        if it % block == 0:
            v = acc / block
            v /= v.mean()
            acc[:] = 0.0
            residual = float(np.abs(op.push(v) - v).mean())
            if residual <= tol:
                return DensityVector(v, residual, it)
    raise NonConvergenceError(f"no fixed point after {max_iter} steps (residual {residual:.3e})")


def pullback_density(family: MapFamily, omega: OmegaPath, n: int, k: int,
                     operators: Sequence[UlamOperator] | None = None) -> DensityVector:
    """``P_{w_-1} ... P_{w_-n} 1``: the depth-``n`` approximant of the fiber density."""
    ops = list(operators) if operators is not None else family_operators(family, k)
    syms = omega.window_symbols(-n, 0)
    v = np.ones(k)
    for s in syms:
        v = ops[s].push(v)
    return DensityVector(v)


def pullback_batch(operators: Sequence[UlamOperator], symbols: np.ndarray) -> np.ndarray:
    """Pullback densities for many paths at once.

    ``symbols`` has shape ``(paths, depth)`` holding ``w_-depth .. w_-1`` in
    that order; returns ``(paths, k)`` densities.
    """
    symbols = np.asarray(symbols)
    k = operators[0].k
    v = np.ones((symbols.shape[0], k))
    for col in symbols.T:
        nxt = np.empty_like(v)
        for i, op in enumerate(operators):
            sel = col == i
            if sel.any():
                nxt[sel] = op.push(v[sel])
        v = nxt
    return v


def pullback_depth(family: MapFamily, n: int) -> int:
    """Pullback depth used to stand in for the limit fiber density."""
    if family.is_beta:
        return 50
    return min(math.ceil(math.sqrt(n)), 400)


def sample_from_density(values, u_cell, u_pos) -> np.ndarray:
    """Inverse-CDF draws from a piecewise-constant density.

    ``values`` is one density (1-d) shared by all draws, or one density per
    draw (2-d, row ``i`` used for draw ``i``).
    """
    values = np.asarray(values, dtype=np.float64)
    u_cell = np.asarray(u_cell, dtype=np.float64)
    u_pos = np.asarray(u_pos, dtype=np.float64)
    k = values.shape[-1]
    if values.ndim == 1:
        cdf = np.cumsum(values)
        cdf /= cdf[-1]
        cell = np.searchsorted(cdf, u_cell, side="right")
    else:
        cdf = np.cumsum(values, axis=1)
        cdf /= cdf[:, -1:]
        cell = (cdf <= u_cell[:, None]).sum(axis=1)
    cell = np.minimum(cell, k - 1)
    return (cell + u_pos) / k


def interval_cell_weights(k: int, intervals: Sequence[tuple[float, float]]) -> np.ndarray:
    """Length of ``union(intervals) n cell_i`` for each cell (intervals disjoint)."""
    w = np.zeros(k)
    a = np.arange(k) / k
    b = np.arange(1, k + 1) / k
    for lo, hi in intervals:
        w += np.clip(np.minimum(b, hi) - np.maximum(a, lo), 0.0, None)
    return w


def measure_of(density, intervals: Sequence[tuple[float, float]]) -> float:
    values = np.asarray(density, dtype=np.float64)
    return float(values @ interval_cell_weights(values.size, intervals))


def cone_check(f, gamma_max: float, a: float, rtol: float = 1e-9) -> tuple[bool, dict]:
    """Discrete membership test for the LSV cone.

    On cell midpoints: ``f`` non-increasing, ``x^(gamma+1) f`` non-decreasing,
    and ``f(x) <= a x^(-gamma) m(f)``.  Returns the verdict and the worst
    violation of each condition (0 when satisfied).
    """
    f = np.asarray(f, dtype=np.float64)
    k = f.size
    x = (np.arange(k) + 0.5) / k
    scale = np.max(np.abs(f)) or 1.0
    mono = float(np.max(np.diff(f), initial=0.0)) / scale
    g = x ** (gamma_max + 1.0) * f
    rising = float(np.max(-np.diff(g), initial=0.0)) / (np.max(np.abs(g)) or 1.0)
    bound = a * x**-gamma_max * f.mean()
    cap = float(np.max((f - bound) / bound, initial=0.0))
    report = {
        "nonneg": float(max(0.0, -f.min())),
        "non_increasing": max(mono, 0.0),
        "weighted_increasing": max(rising, 0.0),
        "upper_bound": max(cap, 0.0),
    }
    ok = all(v <= rtol for v in report.values())
    return ok, report


def comparability_constant(f, delta: float = 0.1) -> float:
    """Smallest ``C`` with ``1/C <= f/m(f) <= C`` on cells inside ``[delta, 1]``."""
    f = np.asarray(f, dtype=np.float64)
    x = (np.arange(f.size) + 0.5) / f.size
    r = f[x >= delta] / f.mean()
    return float(max(r.max(), 1.0 / r.min()))


@dataclass
class DecayFit:
    lags: np.ndarray
    correlations: np.ndarray
    kind: str
    rate: float
    r2: float
    fit_lags: np.ndarray


def _linfit(x, y):
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return float(slope), float(r2)


def fit_decay(lags, values, kind: str, floor: float = 1e-13) -> tuple[float, float, np.ndarray]:
    """Fit ``values ~ C rate^n`` (``kind='exp'``, returns rate) or ``C n^slope``
    (``kind='poly'``, returns slope) over the lags where ``values > floor``."""
    lags = np.asarray(lags, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    keep = values > floor
    if keep.sum() < 3:
        return (0.0 if kind == "exp" else -math.inf), 1.0, lags[keep]
    x = lags[keep] if kind == "exp" else np.log(lags[keep])
    slope, r2 = _linfit(x, np.log(values[keep]))
    return (math.exp(slope) if kind == "exp" else slope), r2, lags[keep]


def decay_estimate(family: MapFamily, probs, k: int, f: Callable | np.ndarray,
                   g: Callable | np.ndarray, n_max: int, kind: str | None = None,
                   n_min: int = 1, operator: UlamOperator | None = None,
                   density: DensityVector | None = None, floor: float = 1e-13) -> DecayFit:
    """Annealed correlations ``|int f g(U^n) dnu - int f dnu int g dnu|``.

    Computed as ``<(f h) P^n, g>``; ``f`` and ``g`` are grid vectors or
    callables evaluated at cell midpoints.  Only lags with correlation above
    ``floor`` enter the fit.
    """
    op = operator or annealed_operator(family, probs, k)
    h = (density or stationary_density(op)).values
    x = (np.arange(k) + 0.5) / k
    fv = f(x) if callable(f) else np.asarray(f, dtype=np.float64)
    gv = g(x) if callable(g) else np.asarray(g, dtype=np.float64)
    product = np.mean(fv * h) * np.mean(gv * h)
    v = fv * h
    corr = np.empty(n_max)
    for n in range(1, n_max + 1):
        v = op.push(v)
        corr[n - 1] = abs(np.mean(v * gv) - product)
    lags = np.arange(1, n_max + 1)
    kind = kind or ("exp" if family.is_beta else "poly")
    sel = lags >= n_min
    rate, r2, used = fit_decay(lags[sel], corr[sel], kind, floor)
    return DecayFit(lags, corr, kind, rate, r2, used)


def fiber_measure_sum(family: MapFamily, omega: OmegaPath, intervals, s: float, t: float,
                      n: int, k: int, depth: int | None = None,
                      operators: Sequence[UlamOperator] | None = None) -> float:
    """``sum_{j = floor(ns)+1}^{floor(nt)} nu^{sigma^j w}(A)``.

    The fiber density at ``j0 = floor(ns)+1`` is the depth-``depth`` pullback;
    later fibers are obtained by pushing it forward along the path, which only
    deepens the pullback.
    """
    ops = list(operators) if operators is not None else family_operators(family, k)
    depth = pullback_depth(family, n) if depth is None else depth
    j0, j1 = math.floor(n * s) + 1, math.floor(n * t)
    if j1 < j0 or not len(intervals):
        return 0.0
    weights = interval_cell_weights(k, intervals)
    syms = omega.symbols(j0 - depth, j1)
    v = np.ones(k)
    for sym in syms[:depth]:
        v = ops[sym].push(v)
    total = 0.0
    for sym in syms[depth:]:
        total += float(v @ weights)
        v = ops[sym].push(v)
    return total + float(v @ weights)
