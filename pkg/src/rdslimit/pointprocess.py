"""Rescaled point patterns, hitting times and the Poisson/exponential experiments.

Marks are ``phi_star(T^{j-1} x) / b_n`` at times ``j / n``.  Targets in
state space are :class:`StateSet` unions of ``[a, b)`` intervals, or the
shrinking targets ``A_n = {x : phi_star(x) / b_n in J}`` built by
:func:`mark_target`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import orbits
from .driving import OmegaPath, derive_seed, uniforms
from .maps import MapFamily, compose_word
from .tailmodel import IntervalUnion, TailModel, levy_measure, phi_star, scaling_bn
from .transfer import (family_operators, interval_cell_weights, pullback_density,
                       pullback_depth)


class DegenerateTargetError(ValueError):
    pass


@dataclass(frozen=True)
class StateSet:
    """Union of intervals ``[a, b)`` in [0, 1]; a part ending at 1 also contains 1."""

    parts: tuple[tuple[float, float], ...]

    def __post_init__(self):
        parts = tuple(sorted((float(a), float(b)) for a, b in self.parts))
        for a, b in parts:
            if not 0.0 <= a < b <= 1.0:
                raise ValueError(f"bad interval [{a}, {b})")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def of(cls, *parts) -> "StateSet":
        return cls(tuple(parts))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.parts:
            out |= (x >= a) & ((x < b) | ((b == 1.0) & (x == 1.0)))
        return out

    @property
    def length(self) -> float:
        return float(sum(b - a for a, b in self.parts))


def _membership(U) -> Callable[[np.ndarray], np.ndarray]:
    return U.contains if hasattr(U, "contains") else U


@dataclass(frozen=True)
class MarkTarget:
    """``{x : phi_star(x) / b_n in J}`` as a membership test plus its state intervals."""

    model: TailModel
    bn: float
    J: IntervalUnion

    def contains(self, x) -> np.ndarray:
        return self.J.contains(phi_star(x, self.model) / self.bn)

    def intervals(self) -> list[tuple[float, float]]:
        """State-space pieces ``x0 +- [r_lo, r_hi)``, clipped to [0, 1]."""
        out = []
        x0, a = self.model.x0, self.model.alpha
        for u, v in self.J.parts:
            if v <= 0.0:
                continue
            u = max(u, 0.0)
            r_hi = math.inf if u == 0.0 else (u * self.bn) ** -a
            r_lo = 0.0 if math.isinf(v) else (v * self.bn) ** -a
            for lo, hi in ((x0 + r_lo, x0 + r_hi), (x0 - r_hi, x0 - r_lo)):
                lo, hi = max(lo, 0.0), min(hi, 1.0)
                if hi > lo:
                    out.append((lo, hi))
        return out


def mark_target(model: TailModel, n: int, J: IntervalUnion) -> MarkTarget:
    return MarkTarget(model, float(scaling_bn(n, model)), J)


@dataclass(frozen=True)
class PointPattern:
    n: int
    steps: np.ndarray      # j >= 1; time is j / n
    marks: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.steps / self.n

    def __len__(self):
        return self.steps.size


def build_pattern(orbit, n: int, bn: float, model: TailModel, mark_floor: float = 0.0,
                  ell: float = 1.0) -> PointPattern:
    """Points ``(j/n, phi(orbit[j-1]) / b_n)`` for ``1 <= j <= ell n`` with mark above the floor."""
    orbit = np.asarray(orbit, dtype=np.float64)
    count = math.floor(ell * n)
    if orbit.size < count + 1:
        raise ValueError(f"orbit has {orbit.size} points, need {count + 1}")
    marks = phi_star(orbit[:count], model) / bn
    keep = np.abs(marks) > mark_floor
    return PointPattern(n, np.arange(1, count + 1)[keep], marks[keep])


Rect = tuple[float, float, IntervalUnion]


def _overlap(r1: Rect, r2: Rect) -> bool:
    s1, t1, J1 = r1
    s2, t2, J2 = r2
    if min(t1, t2) <= max(s1, s2):
        return False
    return any(min(b1, b2) > max(a1, a2) for a1, b1 in J1.parts for a2, b2 in J2.parts)


def validate_rects(rects: Sequence[Rect]) -> list[Rect]:
    rects = [(float(s), float(t), J) for s, t, J in rects]
    for s, t, _ in rects:
        if not 0.0 <= s < t:
            raise ValueError(f"bad time interval ({s}, {t}]")
    for r1, r2 in itertools.combinations(rects, 2):
        if _overlap(r1, r2):
            raise ValueError("rectangles overlap")
    return rects


def count_in(pattern: PointPattern, rects: Sequence[Rect]) -> int:
    total = 0
    for s, t, J in validate_rects(rects):
        # s < j/n <= t in integer form
        live = (pattern.steps > s * pattern.n) & (pattern.steps <= t * pattern.n)
        total += int(np.count_nonzero(J.contains(pattern.marks[live])))
    return total


@dataclass(frozen=True)
class HittingRecord:
    hit_time: int | None
    cap: int
    start_fiber: int = 0
    target: object = None

    @property
    def censored(self) -> bool:
        return self.hit_time is None


def hitting_time(family: MapFamily, omega: OmegaPath, x: float, U, cap: int,
                 start_fiber: int = 0) -> HittingRecord:
    """First ``k >= 1`` with ``T_w^k x`` in ``U``, following ``omega`` from ``start_fiber``."""
    if cap < 1:
        raise ValueError("cap must be at least 1")
    r = orbits.hitting_run(family, orbits.QuenchedFeed(omega, start_fiber), np.array([x]),
                           _membership(U), cap)[0]
    return HittingRecord(None if r < 0 else int(r), cap, start_fiber, U)


def _grid_in(V: StateSet, grid_n: int) -> np.ndarray:
    pts = []
    total = V.length
    for a, b in V.parts:
        m = max(1, round(grid_n * (b - a) / total))
        pts.append(a + (b - a) * (np.arange(m) + 0.5) / m)
    return np.concatenate(pts)


def shortest_return(family: MapFamily, V: StateSet, word_len: int, grid_n: int = 200,
                    exhaustive_len: int = 12, max_states: int = 1 << 18, seed: int = 0) -> int:
    """Smallest ``j <= word_len`` for which some word and some grid point of ``V`` return
    to ``V`` at step ``j``; ``word_len + 1`` when none does.

    Levels up to ``exhaustive_len`` expand every word; deeper levels keep a
    seeded random subset of at most ``max_states`` (word, point) states.
    """
    inside = _membership(V)
    states = _grid_in(V, grid_n)
    m = family.m
    for j in range(1, word_len + 1):
        states = np.concatenate([family.specs[i](states) for i in range(m)])
        if inside(states).any():
            return j
        if j >= exhaustive_len and states.size > max_states:
            u = uniforms(derive_seed(seed, j), np.arange(states.size))
            states = states[np.argsort(u, kind="stable")[:max_states]]
    return word_len + 1


@dataclass(frozen=True)
class PeriodicityVerdict:
    periodic: bool
    word: tuple[int, ...] | None
    distance: float
    max_word_len: int
    tol: float

    @property
    def verdict(self) -> str:
        return "periodic-within-tol" if self.periodic else "no-period-found"


def periodicity_probe(family: MapFamily, x0: float, max_word_len: int = 12, tol: float = 1e-9,
                      max_states: int = 1 << 22) -> PeriodicityVerdict:
    """Search all words of length ``<= max_word_len`` for ``|T_w x0 - x0| <= tol``.

    Coinciding images are merged before expanding the next level.
    """
    if not 1 <= max_word_len <= 20:
        raise ValueError("max_word_len must lie in 1..20")
    m = family.m
    pts = np.array([float(x0)])
    codes = np.array([0], dtype=np.int64)
    best = math.inf
    for length in range(1, max_word_len + 1):
        pts = np.concatenate([family.specs[i](pts) for i in range(m)])
        codes = np.concatenate([codes * m + i for i in range(m)])
        dist = np.abs(pts - x0)
        i = int(np.argmin(dist))
        best = min(best, float(dist[i]))
        if dist[i] <= tol:
            word = tuple(int(c) for c in np.base_repr(codes[i], m).zfill(length)) if m > 1 \
                else (0,) * length
            return PeriodicityVerdict(True, word, float(dist[i]), max_word_len, tol)
        pts, first = np.unique(pts, return_index=True)
        codes = codes[first]
        if pts.size * m > max_states:
            raise ValueError(f"{pts.size * m} states at length {length + 1} exceed the cap")
    return PeriodicityVerdict(False, None, best, max_word_len, tol)


def short_return_set_measure(family: MapFamily, omega: OmegaPath, n: int, eps: float,
                             grid: int = 10_000) -> float:
    """Grid estimate of ``m{x : |T_w^n x - x| <= eps}``."""
    if grid < 10_000:
        raise ValueError("grid resolution must be at least 10^4")
    x = (np.arange(grid) + 0.5) / grid
    y = compose_word(family, omega.symbols(0, n), x)
    return float(np.mean(np.abs(y - x) <= eps))


def fiber_start_density(family: MapFamily, omega: OmegaPath, n: int, k: int = 1024,
                        start_fiber: int = 0, depth: int | None = None) -> np.ndarray:
    """Pullback density for ``nu^{sigma^j w}`` with ``j = start_fiber``."""
    depth = pullback_depth(family, n) if depth is None else depth
    shifted = OmegaPath(omega.probs, omega.seed, -depth, 1, omega.origin_offset + start_fiber)
    return pullback_density(family, shifted, depth, k, family_operators(family, k)).values


@dataclass
class ExponentialLawResult:
    tau: np.ndarray
    survival: np.ndarray
    target: np.ndarray
    sup_distance: float
    levy_mass: float
    cap: int
    censored: int
    hit_times: np.ndarray = field(repr=False)

    @property
    def censor_rate(self) -> float:
        return self.censored / self.hit_times.size


def exponential_law_experiment(family: MapFamily, omega: OmegaPath, model: TailModel,
                               J: IntervalUnion, n: int, trials: int, seed: int,
                               s: float = 0.0, tau_max: float = 3.0, tau_points: int = 301,
                               start: str = "fiber", k: int = 1024, depth: int | None = None,
                               cap_factor: float = 50.0) -> ExponentialLawResult:
    """Survival of ``R_{A_n} / n`` from fiber ``floor(ns)`` against ``exp(-tau Pi(J))``.

    Hitting times are searched up to ``cap = cap_factor n / Pi(J)``; censored
    trials count as surviving every grid point.
    """
    target = mark_target(model, n, J)
    mass = levy_measure(J, model)
    if mass <= 0.0:
        raise DegenerateTargetError(f"J = {J} has zero Levy mass")
    if sum(b - a for a, b in target.intervals()) < 1e-15:
        raise DegenerateTargetError("target is empty at grid scale")
    j0 = math.floor(n * s)
    density = fiber_start_density(family, omega, n, k, j0, depth) if start == "fiber" else None
    feed = orbits.QuenchedFeed(omega, j0)
    cap = math.ceil(cap_factor * n / mass)

    def run(lo, hi):
        x = orbits.draw_starts(start, seed, lo, hi, density=density)
        return orbits.hitting_run(family, feed, x, target.contains, cap, lo, hi)

    r = np.concatenate(orbits.map_chunks(trials, run))
    tau = np.linspace(0.0, tau_max, tau_points)
    steps = np.floor(n * tau).astype(np.int64)
    alive = np.where(r < 0, np.iinfo(np.int64).max, r)
    survival = np.array([np.mean(alive > m) for m in steps])
    expect = np.exp(-tau * mass)
    return ExponentialLawResult(tau, survival, expect, float(np.max(np.abs(survival - expect))),
                                mass, cap, int((r < 0).sum()), r)


@dataclass
class CountSummary:
    mass: float
    mean: float
    void: float
    target_void: float
    tv: float
    histogram: np.ndarray
    pmf: np.ndarray


def poisson_tv(counts, mass: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Total variation between the empirical count law and Poisson(``mass``)."""
    counts = np.asarray(counts, dtype=np.int64)
    top = int(max(counts.max(initial=0), stats.poisson.ppf(1 - 1e-12, mass) if mass > 0 else 0))
    freq = np.bincount(counts, minlength=top + 1) / counts.size
    pmf = stats.poisson.pmf(np.arange(top + 1), mass)
    tv = 0.5 * (np.abs(freq - pmf).sum() + max(0.0, 1.0 - pmf.sum()))
    return float(tv), freq, pmf


def summarize_counts(counts, mass: float) -> CountSummary:
    counts = np.asarray(counts)
    tv, freq, pmf = poisson_tv(counts, mass)
    return CountSummary(mass, float(counts.mean()), float(np.mean(counts == 0)), math.exp(-mass),
                        tv, freq, pmf)


def rank_correlation(a, b) -> float:
    """Spearman correlation; 0 when either side is constant."""
    a, b = np.asarray(a), np.asarray(b)
    if np.all(a == a[0]) or np.all(b == b[0]):
        return 0.0
    return float(stats.spearmanr(a, b)[0])


@dataclass
class PoissonResult:
    summaries: list[CountSummary]
    counts: np.ndarray
    poles: int


def rect_mass(rect: Rect, model: TailModel) -> float:
    s, t, J = rect
    return (t - s) * levy_measure(J, model)


def poisson_experiment(family: MapFamily, omega: OmegaPath, model: TailModel,
                       rects: Sequence[Rect], n: int, trials: int, seed: int,
                       start: str = "fiber", k: int = 1024, depth: int | None = None,
                       feed=None) -> PoissonResult:
    """Counts of each rectangle over ``trials`` orbits started in fiber 0.

    Each rectangle is summarised separately with its own Poisson target
    ``(t - s) Pi(J)``; rectangles must be pairwise disjoint.
    """
    rects = validate_rects(rects)
    bn = float(scaling_bn(n, model))
    n_steps = max(math.floor(t * n) for _, t, _ in rects)
    density = fiber_start_density(family, omega, n, k, 0, depth) if start == "fiber" else None
    feed = feed or orbits.QuenchedFeed(omega)

    def run(lo, hi):
        x = orbits.draw_starts(start, seed, lo, hi, density=density)
        return orbits.birkhoff_run(family, feed, x, n_steps, model, (), bn, rects, n, lo, hi)

    res = orbits.RunResult.concat(orbits.map_chunks(trials, run))
    summaries = [summarize_counts(res.counts[:, i], rect_mass(r, model))
                 for i, r in enumerate(rects)]
    return PoissonResult(summaries, res.counts, int(res.pole.sum()))
