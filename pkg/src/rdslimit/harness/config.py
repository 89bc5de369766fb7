"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, keys are order-insensitive.
Lists are comma separated; interval unions and rectangles use ``;`` between
parts, e.g. ``J = 1:inf`` or ``rects = 0:0.5:1:inf; 0.5:1:1:inf``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..maps import MapFamily, parse_map
from ..tailmodel import DEFAULT_EPS_GRID, IntervalUnion


class ConfigError(ValueError):
    pass


MODES = ("stable", "functional", "poisson", "hitting", "annealed", "transfer", "karamata")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _union(text: str) -> IntervalUnion:
    parts = []
    for chunk in text.split(";"):
        a, b = chunk.split(":")
        parts.append((float(a), float(b)))
    return IntervalUnion(tuple(parts))


def _rects(text: str) -> tuple:
    out = []
    for chunk in text.split(";"):
        s, t, a, b = (float(v) for v in chunk.split(":"))
        out.append((s, t, IntervalUnion(((a, b),))))
    return tuple(out)


def _x0(text: str):
    text = text.strip()
    return text if text == "draw-lebesgue" else float(text)


def _window(text: str):
    text = text.strip().strip("[]()")
    lo, hi = _ints(text)
    return (lo, hi)


@dataclass(frozen=True)
class ExperimentConfig:
    maps: tuple[str, ...] = ("beta:2.1", "beta:3.3")
    probs: tuple[float, ...] = (0.5, 0.5)
    seed: int = 12345
    omega_index: int = 0
    omega_window: tuple[int, int] | None = None
    alpha: float = 0.75
    p_pos: float = 1.0
    x0: float | str = 0.7071067811865476
    n: int = 10_000
    trials: int = 5000
    t_grid: tuple[float, ...] = (0.25, 0.5, 1.0)
    start_measure: str = "fiber"
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID
    trunc_eps: float = 0.5
    k: int = 4096
    k_fiber: int = 1024
    J: IntervalUnion = IntervalUnion(((1.0, math.inf),))
    rects: tuple = ((0.0, 0.5, IntervalUnion(((1.0, math.inf),))),
                    (0.5, 1.0, IntervalUnion(((1.0, math.inf),))))
    tau_max: float = 3.0
    cap_factor: float = 50.0
    periodicity_len: int = 12
    periodicity_tol: float = 1e-9
    density: str = "stationary"
    n_list: tuple[int, ...] = (10**4, 10**5, 10**6)
    report: str = "stationary"
    n_max: int = 200
    cone_a: float = 2.0
    gamma_max: float | None = None
    out: str = "out"
    mode: str = "stable"

    def __post_init__(self):
        if not self.maps:
            raise ConfigError("maps must name at least one map")
        try:
            family = self.family
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(self.probs) != family.m:
            raise ConfigError(f"{family.m} maps but {len(self.probs)} probabilities")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ConfigError(f"invalid probability vector {self.probs}")
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not 0.0 <= self.p_pos <= 1.0:
            raise ConfigError("p_pos must lie in [0, 1]")
        if isinstance(self.x0, float) and not 0.0 <= self.x0 <= 1.0:
            raise ConfigError("x0 must lie in [0, 1]")
        if isinstance(self.x0, str) and self.x0 != "draw-lebesgue":
            raise ConfigError(f"x0 must be a number or draw-lebesgue, got {self.x0!r}")
        if self.n < 1 or self.trials < 1:
            raise ConfigError("n and trials must be at least 1")
        tg = self.t_grid
        if not tg or any(b <= a for a, b in zip(tg, tg[1:])) or tg[0] <= 0.0:
            raise ConfigError("t_grid must be strictly increasing in (0, ell]")
        if self.start_measure not in ("fiber", "lebesgue"):
            raise ConfigError("start_measure must be fiber or lebesgue")
        if self.density not in ("stationary", "lebesgue"):
            raise ConfigError("density must be stationary or lebesgue")
        if self.report not in ("stationary", "pullback", "decay", "cone"):
            raise ConfigError("report must be stationary, pullback, decay or cone")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.k < 2 or self.k_fiber < 2:
            raise ConfigError("grid sizes must be at least 2")
        if not 0.0 < self.trunc_eps:
            raise ConfigError("trunc_eps must be positive")

    @property
    def family(self) -> MapFamily:
        return MapFamily(tuple(parse_map(s) for s in self.maps))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        """Settings that determine results; the output location is left out."""
        out = {}
        for f in dataclasses.fields(self):
            if f.name == "out":
                continue
            v = getattr(self, f.name)
            if isinstance(v, IntervalUnion):
                v = str(v)
            elif f.name == "rects":
                v = [f"({s:g},{t:g}]x{J}" for s, t, J in v]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out


_PARSERS = {
    "maps": lambda s: tuple(v.strip() for v in s.split(",") if v.strip()),
    "probs": _floats,
    "seed": int,
    "omega_index": int,
    "omega_window": _window,
    "alpha": float,
    "p_pos": float,
    "p": float,
    "x0": _x0,
    "n": int,
    "trials": int,
    "t_grid": _floats,
    "start_measure": str.strip,
    "eps_grid": _floats,
    "trunc_eps": float,
    "k": int,
    "k_fiber": int,
    "J": _union,
    "rects": _rects,
    "tau_max": float,
    "cap_factor": float,
    "periodicity_len": int,
    "periodicity_tol": float,
    "density": str.strip,
    "n_list": _ints,
    "report": str.strip,
    "n_max": int,
    "cone_a": float,
    "gamma_max": float,
    "out": str.strip,
    "mode": str.strip,
}


def parse_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings; rejects malformed lines and repeated keys."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        raw[key] = value
    return raw


def build(raw: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    changes = {}
    for key, value in raw.items():
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            parsed = _PARSERS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from exc
        changes["p_pos" if key == "p" else key] = parsed
    try:
        return dataclasses.replace(base or ExperimentConfig(), **changes)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = parse_text(text)
    raw.update(overrides or {})
    return build(raw)
