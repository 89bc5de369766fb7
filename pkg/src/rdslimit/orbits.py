"""Vectorised orbit engine shared by the experiments.

Trials are processed in fixed-size chunks keyed by trial index, so the worker
count (``RDS_THREADS``) only changes scheduling, never values.  Within a chunk
all trials advance together one map application at a time.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .driving import OmegaPath, derive_seed, draw_symbols, uniforms
from .maps import MapFamily
from .tailmodel import IntervalUnion, TailModel
from .transfer import UlamOperator, pullback_batch, sample_from_density

CHUNK = 1024
POLE_TOL = 1e-15

# stream keys for derive_seed(master_seed, STREAM, ...)
STREAM_OMEGA = 1
STREAM_START = 2
STREAM_X0 = 3
STREAM_IID = 4
STREAM_ANNEALED = 5


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("RDS_THREADS", "1")))
    except ValueError:
        return 1


def map_chunks(trials: int, fn: Callable[[int, int], object], chunk: int = CHUNK) -> list:
    """Run ``fn(lo, hi)`` over fixed chunks of ``range(trials)``; results in order."""
    bounds = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    workers = worker_count()
    if workers == 1 or len(bounds) == 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))


class QuenchedFeed:
    """One fixed path shared by every trial."""

    def __init__(self, omega: OmegaPath, offset: int = 0):
        self.omega = omega
        self.offset = offset

    def block(self, j0: int, j1: int, lo: int = 0, hi: int = 0) -> np.ndarray:
        return self.omega.symbols(self.offset + j0, self.offset + j1)


class AnnealedFeed:
    """An independent path per trial, trial ``i`` seeded by ``(master, STREAM_ANNEALED, i)``."""

    def __init__(self, probs, master_seed: int):
        self.probs = tuple(probs)
        self.master_seed = master_seed

    def seeds(self, lo: int, hi: int) -> np.ndarray:
        return np.array([derive_seed(self.master_seed, STREAM_ANNEALED, i) for i in range(lo, hi)],
                        dtype=np.uint64)

    def block(self, j0: int, j1: int, lo: int = 0, hi: int = 0) -> np.ndarray:
        seeds = self.seeds(lo, hi)
        return draw_symbols(self.probs, seeds[:, None], np.arange(j0, j1)[None, :])


def start_uniforms(master_seed: int, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    seed = derive_seed(master_seed, STREAM_START)
    idx = np.arange(lo, hi)
    return uniforms(seed, 2 * idx), uniforms(seed, 2 * idx + 1)


def draw_starts(mode: str, master_seed: int, lo: int, hi: int, density=None,
                feed=None, operators: Sequence[UlamOperator] | None = None,
                depth: int = 0) -> np.ndarray:
    """Initial points for trials ``lo..hi-1``.

    ``lebesgue``: uniform.  ``fiber``: inverse CDF of a fiber density; either a
    shared one (``density``, quenched) or one pulled back along each trial's
    own path (annealed, needs ``feed``, ``operators`` and ``depth``).
    """
    u1, u2 = start_uniforms(master_seed, lo, hi)
    if mode == "lebesgue":
        return u1
    if mode != "fiber":
        raise ValueError(f"unknown start measure {mode!r}")
    if density is not None:
        return sample_from_density(density, u1, u2)
    syms = feed.block(-depth, 0, lo, hi)
    return sample_from_density(pullback_batch(operators, syms), u1, u2)


@dataclass
class RunResult:
    sums: np.ndarray        # (trials, checkpoints): sum_{j < m} phi(T^j x)
    counts: np.ndarray      # (trials, rects)
    pole: np.ndarray        # (trials,) orbit came within POLE_TOL of x0

    @classmethod
    def concat(cls, parts: Sequence["RunResult"]) -> "RunResult":
        return cls(np.concatenate([p.sums for p in parts]),
                   np.concatenate([p.counts for p in parts]),
                   np.concatenate([p.pole for p in parts]))


Rect = tuple[float, float, IntervalUnion]


def _step(family: MapFamily, sym, x):
    return family.apply(sym, x)


def birkhoff_run(family: MapFamily, feed, x: np.ndarray, n_steps: int, model: TailModel,
                 checkpoints: Sequence[int] = (), bn: float | None = None,
                 rects: Sequence[Rect] = (), n_scale: int | None = None,
                 lo: int = 0, hi: int = 0, block: int = 4096) -> RunResult:
    """Advance ``x`` for ``n_steps`` maps, accumulating Birkhoff sums and counts.

    Step ``j`` (0-based) sees ``x_j = T^j x``.  Sums are recorded after the
    terms ``j < m`` for each checkpoint ``m``.  A rectangle ``(s, t] x J``
    counts ``j`` with ``s < (j+1)/n <= t`` and ``phi(x_j)/b_n in J``.
    """
    x = np.array(x, dtype=np.float64)
    trials = x.size
    cps = sorted(set(int(c) for c in checkpoints))
    cp_index = {c: i for i, c in enumerate(cps)}
    sums = np.zeros((trials, len(cps)))
    counts = np.zeros((trials, len(rects)), dtype=np.int64)
    pole = np.zeros(trials, dtype=bool)
    total = np.zeros(trials)
    inv_alpha = -1.0 / model.alpha
    n = n_scale or n_steps
    windows = [(s * n, t * n, J) for s, t, J in rects]
    if 0 in cp_index:
        sums[:, cp_index[0]] = 0.0
    for j0 in range(0, n_steps, block):
        j1 = min(j0 + block, n_steps)
        syms = feed.block(j0, j1, lo, hi)
        for j in range(j0, j1):
            d = np.abs(x - model.x0)
            hit = d < POLE_TOL
            if hit.any():
                pole |= hit
            with np.errstate(divide="ignore"):
                phi = d**inv_alpha
            total += np.where(hit, 0.0, phi)
            if windows:
                marks = phi / bn
                for r, (a, b, J) in enumerate(windows):
                    if a < j + 1 <= b:
                        counts[:, r] += J.contains(marks)
            if j + 1 in cp_index:
                sums[:, cp_index[j + 1]] = total
            sym = syms[j - j0] if syms.ndim == 1 else syms[:, j - j0]
            x = _step(family, sym, x)
    return RunResult(sums, counts, pole)


def hitting_run(family: MapFamily, feed, x: np.ndarray, contains: Callable[[np.ndarray], np.ndarray],
                cap: int, lo: int = 0, hi: int = 0, block: int = 4096) -> np.ndarray:
    """First ``k >= 1`` with ``T^k x`` in the target, or ``-1`` if none up to ``cap``."""
    x = np.array(x, dtype=np.float64)
    out = np.full(x.size, -1, dtype=np.int64)
    active = np.arange(x.size)
    for j0 in range(0, cap, block):
        j1 = min(j0 + block, cap)
        syms = feed.block(j0, j1, lo, hi)
        for j in range(j0, j1):
            sym = syms[j - j0] if syms.ndim == 1 else syms[active, j - j0]
            x = _step(family, sym, x)
            inside = contains(x)
            if inside.any():
                out[active[inside]] = j + 1
                keep = ~inside
                active, x = active[keep], x[keep]
                if not active.size:
                    return out
    return out
