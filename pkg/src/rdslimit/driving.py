"""Bernoulli driving sequences with counter-based, order-free generation.

Symbol ``j`` of a path depends only on ``(seed, j)``: a splitmix64 hash of the
pair gives a uniform in [0, 1) which is mapped through the inverse CDF of the
probability vector.  Negative indices work the same way, which is what the
pullback densities need, and no evaluation order or worker count can change
a symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class WindowTooShortError(IndexError):
    pass


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash64(seed: int, index) -> np.ndarray:
    """splitmix64 of ``seed`` combined with integer ``index``.

    Both arguments broadcast; ``seed`` may be a uint64 array.
    """
    idx = np.asarray(index, dtype=np.int64).astype(np.uint64)
    if isinstance(seed, np.ndarray):
        s = seed.astype(np.uint64)
    else:
        s = np.uint64(int(seed) & _MASK64)
    with np.errstate(over="ignore"):
        z = _mix(s + _GOLDEN) ^ (idx * _GOLDEN)
        return _mix(z + _GOLDEN)


def uniforms(seed: int, index) -> np.ndarray:
    """Uniforms in [0, 1) addressed by ``(seed, index)``; 53-bit resolution."""
    return (hash64(seed, index) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(master_seed: int, *keys: int) -> int:
    """Child seed for ``(master_seed, key0, key1, ...)``, e.g. a trial index."""
    s = int(master_seed) & _MASK64
    for k in keys:
        s = int(hash64(s, k))
    return s


def validate_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probability vector must be a non-empty 1-d list")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"invalid probability vector {probs!r}")
    return p


def draw_symbols(probs, seed: int, index) -> np.ndarray:
    p = validate_probs(probs)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = uniforms(seed, index)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


@dataclass(frozen=True)
class OmegaPath:
    """Window ``[lo, hi)`` of a two-sided iid symbol sequence.

    Indices are relative to the current origin; ``origin_offset`` records how
    far the path has been shifted from the sequence generated by ``seed``.
    """

    probs: tuple[float, ...]
    seed: int
    lo: int
    hi: int
    origin_offset: int = 0
    window: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(v) for v in validate_probs(self.probs)))
        if not self.lo <= 0 < self.hi:
            raise ValueError(f"window [{self.lo}, {self.hi}) must contain index 0")
        if self.window is None:
            w = draw_symbols(self.probs, self.seed,
                             np.arange(self.lo, self.hi) + self.origin_offset)
            w.setflags(write=False)
            object.__setattr__(self, "window", w)

    @property
    def m(self) -> int:
        return len(self.probs)

    def symbols(self, lo: int, hi: int) -> np.ndarray:
        """Symbols at relative indices ``lo..hi-1``; regenerates outside the window."""
        if self.lo <= lo and hi <= self.hi:
            return self.window[lo - self.lo:hi - self.lo]
        return draw_symbols(self.probs, self.seed, np.arange(lo, hi) + self.origin_offset)

    def window_symbols(self, lo: int, hi: int) -> np.ndarray:
        """Like :meth:`symbols` but refuses indices outside the stored window."""
        if lo < self.lo or hi > self.hi:
            raise WindowTooShortError(
                f"requested [{lo}, {hi}) but window is [{self.lo}, {self.hi})")
        return self.window[lo - self.lo:hi - self.lo]

    def __getitem__(self, j: int) -> int:
        return int(self.symbols(j, j + 1)[0])

    def extended(self, lo: int, hi: int) -> "OmegaPath":
        return OmegaPath(self.probs, self.seed, min(lo, self.lo), max(hi, self.hi),
                         self.origin_offset)

    def prefix(self, count: int = 16) -> list[int]:
        return self.symbols(0, count).tolist()


def sample_omega(probs, seed: int, lo: int, hi: int) -> OmegaPath:
    return OmegaPath(tuple(probs), int(seed), int(lo), int(hi))


def shift(omega: OmegaPath, k: int) -> OmegaPath:
    """Left shift by ``k``: new symbol ``j`` equals old symbol ``j + k``.

    The window keeps its length and is recentred so it still contains 0.
    """
    lo = omega.lo - k
    hi = omega.hi - k
    if not lo <= 0:
        lo = 0
    if not hi > 0:
        hi = 1
    return OmegaPath(omega.probs, omega.seed, lo, max(hi, lo + 1),
                     omega.origin_offset + k)
