"""Interval maps: LSV intermittent maps and beta-transformations.

Both families act on [0, 1].  Boundary convention (fixed once, measure zero):

* LSV: left branch ``x (1 + 2^g x^g)`` on ``[0, 1/2]`` (so ``T(1/2) = 1``),
  right branch ``2x - 1`` on ``(1/2, 1]``.
* beta-map: ``T(x) = beta x - floor(beta x)``; ``T(1)`` is the fractional part
  of beta (0 for integer beta).

All evaluation is vectorised over numpy arrays.  Orbits are plain float64
iterates; nothing is shadowed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LSV = "lsv"
BETA = "beta"


@dataclass(frozen=True)
class MapSpec:
    """One interval map.  ``param`` is gamma for LSV and beta for beta-maps."""

    family: str
    param: float
    branch_points: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        if self.family == LSV:
            if not 0.0 < self.param < 1.0:
                raise ValueError(f"LSV gamma must lie in (0,1), got {self.param}")
            pts = (0.0, 0.5, 1.0)
        elif self.family == BETA:
            if not self.param > 1.0:
                raise ValueError(f"beta must exceed 1, got {self.param}")
            top = math.ceil(self.param) - 1
            pts = (0.0, *(j / self.param for j in range(1, top + 1)), 1.0)
        else:
            raise ValueError(f"unknown map family {self.family!r}")
        object.__setattr__(self, "branch_points", pts)

    @property
    def branch_count(self) -> int:
        return len(self.branch_points) - 1

    @property
    def label(self) -> str:
        return f"{self.family}:{self.param:g}"

    def __call__(self, x):
        return eval_map(self, x)


def lsv(gamma: float) -> MapSpec:
    return MapSpec(LSV, float(gamma))


def beta_map(beta: float) -> MapSpec:
    return MapSpec(BETA, float(beta))


def parse_map(text: str) -> MapSpec:
    """Parse ``"beta:2.1"`` / ``"lsv:0.25"``."""
    name, _, value = text.strip().partition(":")
    if not value:
        raise ValueError(f"map spec {text!r} must look like family:param")
    return MapSpec(name.strip().lower(), float(value))


def eval_map(spec: MapSpec, x):
    x = np.asarray(x, dtype=np.float64)
    if spec.family == LSV:
        g = spec.param
        left = x * (1.0 + 2.0**g * x**g)
        return np.where(x <= 0.5, left, 2.0 * x - 1.0)
    y = spec.param * x
    return y - np.floor(y)


def eval_derivative(spec: MapSpec, x):
    x = np.asarray(x, dtype=np.float64)
    if spec.family == LSV:
        g = spec.param
        return np.where(x <= 0.5, 1.0 + 2.0**g * (1.0 + g) * x**g, 2.0)
    return np.full_like(x, spec.param)


def branch_partition(spec: MapSpec) -> list[tuple[float, float]]:
    """Monotonicity intervals as ``(lo, hi)`` pairs covering [0, 1]."""
    p = spec.branch_points
    return list(zip(p[:-1], p[1:]))


def branch_image(spec: MapSpec, index: int) -> tuple[float, float]:
    """Image interval ``(T(lo+), T(hi-))`` of branch ``index``."""
    lo, hi = branch_partition(spec)[index]
    if spec.family == LSV:
        return (0.0, 1.0)
    return (0.0, spec.param * hi - index)


def branch_inverse(spec: MapSpec, index: int, y, tol: float = 1e-14):
    """Inverse of branch ``index`` at points ``y`` of its image."""
    y = np.asarray(y, dtype=np.float64)
    if spec.family == BETA:
        return (y + index) / spec.param
    if index == 1:
        return (y + 1.0) / 2.0
    # left LSV branch is increasing on [0, 1/2]; bisection to tol
    lo = np.zeros_like(y)
    hi = np.full_like(y, 0.5)
    c = 2.0**spec.param
    while np.max(hi - lo, initial=0.0) > tol:
        mid = 0.5 * (lo + hi)
        below = mid * (1.0 + c * mid**spec.param) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MapFamily:
    specs: tuple[MapSpec, ...]

    def __post_init__(self):
        if len(self.specs) < 1:
            raise ValueError("a map family needs at least one map")
        object.__setattr__(self, "specs", tuple(self.specs))

    @property
    def m(self) -> int:
        return len(self.specs)

    @property
    def gammas(self) -> list[float]:
        return [s.param for s in self.specs if s.family == LSV]

    @property
    def is_lsv(self) -> bool:
        return all(s.family == LSV for s in self.specs)

    @property
    def is_beta(self) -> bool:
        return all(s.family == BETA for s in self.specs)

    def apply(self, symbol, x):
        """Apply ``T_symbol`` to ``x``; ``symbol`` may be a per-element array."""
        if np.ndim(symbol) == 0:
            return eval_map(self.specs[int(symbol)], x)
        out = np.empty_like(x)
        for i, spec in enumerate(self.specs):
            sel = symbol == i
            if sel.any():
                out[sel] = eval_map(spec, x[sel])
        return out

    def discontinuity_set_probe(self, max_len: int = 6, max_points: int = 2_000_000):
        """Discontinuities of ``T_w`` for all words with ``|w| <= max_len``.

        Finite stand-in for the countable discontinuity set.  ``T_w`` jumps at
        ``x`` iff some prefix image ``T_{w<j}(x)`` is an interior branch point
        of ``T_{w_j}``, so the set is built by pulling the branch points back
        one letter at a time.  The endpoints 0 and 1 are included.
        """
        base = np.unique(np.concatenate(
            [np.array(s.branch_points, dtype=np.float64) for s in self.specs]))
        current = base
        for _ in range(max_len - 1):
            pulled = [base]
            for spec in self.specs:
                for b in range(spec.branch_count):
                    ilo, ihi = branch_image(spec, b)
                    y = current[(current >= ilo) & (current <= ihi)]
                    if y.size:
                        pulled.append(branch_inverse(spec, b, y))
            current = np.unique(np.concatenate(pulled))
            if current.size > max_points:
                raise MemoryError(f"discontinuity probe exceeds {max_points} points")
        return current

    def distance_to_discontinuities(self, x0: float, max_len: int = 6) -> float:
        probe = self.discontinuity_set_probe(max_len)
        return float(np.min(np.abs(probe - x0)))


def cocycle_orbit(family: MapFamily, omega, x, n: int) -> np.ndarray:
    """``[x, T_w^1 x, ..., T_w^n x]`` along the symbols ``omega[0..n-1]``.

    ``x`` may be an array; the result then has shape ``(n + 1, *x.shape)``.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    syms = omega.window_symbols(0, n)
    x = np.asarray(x, dtype=np.float64)
    orbit = np.empty((n + 1, *x.shape))
    orbit[0] = x
    for j in range(n):
        orbit[j + 1] = eval_map(family.specs[syms[j]], orbit[j])
    return orbit


def compose_word(family: MapFamily, word: Sequence[int], x):
    """``T_{w_{k-1}} o ... o T_{w_0} (x)``."""
    x = np.asarray(x, dtype=np.float64)
    for sym in word:
        x = eval_map(family.specs[sym], x)
    return x


def words(m: int, length: int):
    return itertools.product(range(m), repeat=length)
