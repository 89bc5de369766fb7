"""The heavy-tailed observable ``|x - x0|^(-1/alpha)`` and its tail constants.

Densities are piecewise constant on a uniform grid of ``k`` cells over [0, 1]
(a 1-d array of cell values).  Every moment or tail probability of the
observable against such a density reduces to integrals of ``r^(-q)`` over
intervals of the distance ``r = |x - x0|``, which are done in closed form cell
by cell.  The pole cell needs no special treatment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_EPS_GRID = tuple(0.1 * 2.0**-j for j in range(7))


class NonConvergentLimitError(ArithmeticError):
    pass


@dataclass(frozen=True)
class TailModel:
    """Regular-variation data for ``phi_star`` with a constant slowly varying part."""

    alpha: float
    x0: float
    b_const: float
    p_pos: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not self.b_const > 0.0:
            raise ValueError("b_const must be positive")
        if not 0.0 <= self.p_pos <= 1.0:
            raise ValueError("p_pos must lie in [0, 1]")
        if not 0.0 <= self.x0 <= 1.0:
            raise ValueError("x0 must lie in [0, 1]")

    @property
    def beta_skew(self) -> float:
        return 2.0 * self.p_pos - 1.0

    def bn(self, n) -> float:
        return scaling_bn(n, self)

    def phi(self, x):
        return phi_star(x, self)

    def tail(self, t):
        """Constant-L model tail ``b t^(-alpha)``."""
        return self.b_const * np.asarray(t, dtype=np.float64) ** -self.alpha


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of disjoint half-open intervals ``(x, y]`` avoiding 0."""

    parts: tuple[tuple[float, float], ...]

    def __post_init__(self):
        parts = tuple(sorted((float(a), float(b)) for a, b in self.parts))
        for a, b in parts:
            if not a < b:
                raise ValueError(f"empty interval ({a}, {b}]")
            if a <= 0.0 <= b:
                raise ValueError(f"interval ({a}, {b}] touches 0")
        for (_, b1), (a2, _) in zip(parts, parts[1:]):
            if a2 < b1:
                raise ValueError("intervals overlap")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def of(cls, *parts) -> "IntervalUnion":
        return cls(tuple(parts))

    def contains(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(v.shape, dtype=bool)
        for a, b in self.parts:
            out |= (v > a) & (v <= b)
        return out

    def scaled(self, c: float) -> "IntervalUnion":
        return IntervalUnion(tuple((a * c, b * c) for a, b in self.parts))

    def __str__(self):
        return " u ".join(f"({a:g},{b:g}]" for a, b in self.parts)


def phi_star(x, model: TailModel):
    """``|x - x0|^(-1/alpha)``; the pole maps to ``+inf``."""
    d = np.abs(np.asarray(x, dtype=np.float64) - model.x0)
    with np.errstate(divide="ignore"):
        return d ** (-1.0 / model.alpha)


def _r_power_integral(u, v, q):
    """``int_u^v r^(-q) dr`` elementwise for ``0 <= u <= v``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if q == 0.0:
            return v - u
        if q == 1.0:
            return np.log(v) - np.log(u)
        return (v ** (1.0 - q) - u ** (1.0 - q)) / (1.0 - q)


def power_integral(density, x0: float, q: float, r_lo: float = 0.0,
                   r_hi: float = math.inf) -> float:
    """``int h(x) |x-x0|^(-q) 1{r_lo <= |x-x0| < r_hi} dx`` for a grid density."""
    h = np.asarray(density, dtype=np.float64)
    k = h.size
    a = np.arange(k) / k
    b = np.arange(1, k + 1) / k
    total = 0.0
    for u, v in ((a - x0, b - x0), (x0 - b, x0 - a)):
        u = np.maximum(np.maximum(u, r_lo), 0.0)
        v = np.minimum(v, r_hi)
        live = (v > u) & (h != 0.0)
        if live.any():
            total += float(np.sum(h[live] * _r_power_integral(u[live], v[live], q)))
    return total


def tail_probability(density, x0: float, alpha: float, t) -> float:
    """``nu(phi_star > t)`` under the grid density."""
    return power_integral(density, x0, 0.0, 0.0, float(t) ** -alpha)


def truncated_moment(density, x0: float, alpha: float, power: float, level: float) -> float:
    """``E_nu(phi^power 1{phi <= level})``."""
    return power_integral(density, x0, power / alpha, float(level) ** -alpha, math.inf)


def expected_phi(density, x0: float, alpha: float) -> float:
    """``E_nu(phi_star)``; infinite for ``alpha <= 1``."""
    if alpha <= 1.0:
        return math.inf
    return power_integral(density, x0, 1.0 / alpha)


def local_density_constant(density, x0: float,
                           eps_grid: Sequence[float] = DEFAULT_EPS_GRID,
                           tol: float = 0.25) -> float:
    """Estimate ``lim (1/eps) nu(|x - x0| < eps)`` by linear extrapolation in eps.

    Radii reaching past the boundary of [0, 1] are dropped for interior
    ``x0``; if none survive the grid is rescaled to fit.  Raises
    :class:`NonConvergentLimitError` when the relative spread of the ratios
    over the grid exceeds ``tol``.
    """
    eps = np.sort(np.asarray(eps_grid, dtype=np.float64))[::-1]
    room = min(x0, 1.0 - x0)
    if room > 0.0:
        keep = eps[eps <= room]
        if keep.size < 2:
            keep = room * eps / eps[0]
        eps = keep
    ratios = np.array([power_integral(density, x0, 0.0, 0.0, e) / e for e in eps])
    spread = (ratios.max() - ratios.min()) / ratios.mean()
    if not np.isfinite(spread) or spread > tol:
        raise NonConvergentLimitError(
            f"ratios {ratios.round(4).tolist()} spread {spread:.3f} > {tol}")
    slope, intercept = np.polyfit(eps, ratios, 1)
    return float(intercept)


def scaling_bn(n, model: TailModel):
    """``b_n = (b n)^(1/alpha)``, solving ``n * b * b_n^(-alpha) = 1``."""
    return (model.b_const * np.asarray(n, dtype=np.float64)) ** (1.0 / model.alpha)


def centering_cn(n: int, model: TailModel, mean_phi: float | Callable[[float], float] | None = None,
                 density=None) -> float:
    """Deterministic centering constant.

    ``alpha < 1``: 0.  ``alpha == 1``: ``(n/b_n) E(phi 1{phi <= b_n})`` from a
    callable ``mean_phi(level)`` or a grid density.  ``alpha in (1, 2)``:
    ``(n/b_n) E(phi)`` from a number or a grid density.
    """
    a = model.alpha
    if a < 1.0:
        return 0.0
    bn = float(scaling_bn(n, model))
    if a == 1.0:
        if callable(mean_phi):
            m = mean_phi(bn)
        elif density is not None:
            m = truncated_moment(density, model.x0, a, 1.0, bn)
        else:
            raise ValueError("alpha = 1 needs a truncated-mean provider or a density")
        return n / bn * m
    if mean_phi is None:
        if density is None:
            raise ValueError("alpha in (1,2) needs E(phi) or a density")
        mean_phi = expected_phi(density, model.x0, a)
    if callable(mean_phi) or not math.isfinite(mean_phi):
        raise ValueError("alpha in (1,2) needs a finite mean")
    return n / bn * mean_phi


def c_alpha_eps(alpha: float, beta_skew: float, eps: float) -> float:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if alpha < 1.0:
        return 0.0
    if alpha == 1.0:
        return -beta_skew * math.log(eps)
    return eps ** (1.0 - alpha) * beta_skew * alpha / (alpha - 1.0)


def levy_measure(J: IntervalUnion, model: TailModel) -> float:
    """Mass of ``J`` under ``alpha (p 1{x>0} + (1-p) 1{x<0}) |x|^(-alpha-1) dx``."""
    a, p = model.alpha, model.p_pos
    total = 0.0
    for x, y in J.parts:
        if x >= 0.0:
            total += p * (x**-a - (0.0 if math.isinf(y) else y**-a))
        else:
            total += (1.0 - p) * ((-y) ** -a - (0.0 if math.isinf(x) else (-x) ** -a))
    return total


def levy_density(x, model: TailModel):
    x = np.asarray(x, dtype=np.float64)
    w = np.where(x > 0, model.p_pos, 1.0 - model.p_pos)
    return model.alpha * w * np.abs(x) ** (-model.alpha - 1.0)


def karamata_ratio_check(alpha: float, trunc_level: float, n: int, density,
                         x0: float, b_const: float | None = None) -> dict:
    """Observed vs asymptotic truncated-moment ratios at level ``eps * b_n``.

    Second moment: ``E(phi^2 1{phi <= L}) / (L^2 nu(phi > L))`` against
    ``alpha / (2 - alpha)``; for ``alpha < 1`` also the first moment
    ``E(phi 1{phi <= L}) / (L nu(phi > L))`` against ``alpha / (1 - alpha)``.
    """
    if b_const is None:
        b_const = local_density_constant(density, x0)
    model = TailModel(alpha, x0, b_const)
    bn = float(scaling_bn(n, model))
    level = trunc_level * bn
    tail = tail_probability(density, x0, alpha, level)
    rows = {
        "n": n,
        "b_n": bn,
        "c_n": centering_cn(n, model, density=density),
        "level": level,
        "second_observed": truncated_moment(density, x0, alpha, 2.0, level) / (level**2 * tail),
        "second_target": alpha / (2.0 - alpha),
    }
    if alpha < 1.0:
        rows["first_observed"] = truncated_moment(density, x0, alpha, 1.0, level) / (level * tail)
        rows["first_target"] = alpha / (1.0 - alpha)
    return rows


def as_interval_union(parts: Iterable) -> IntervalUnion:
    if isinstance(parts, IntervalUnion):
        return parts
    return IntervalUnion(tuple(tuple(p) for p in parts))
