"""Acceptance criteria 1-10 as callable checks.

Used by ``rdslimit selftest`` and by the acceptance tests.  Every criterion
returns a :class:`Criterion` with the measured values and the tolerances
they were held to.  Monte Carlo criteria use the configs in :data:`CONFIGS`
with one fixed master seed.
"""

from __future__ import annotations

import filecmp
import math
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from ..maps import MapFamily, beta_map, lsv
from ..stable import StableLaw, stable_cf
from ..tailmodel import IntervalUnion, TailModel, c_alpha_eps, levy_density, levy_measure
from ..transfer import annealed_operator, family_operators, stationary_density, ulam_matrix
from . import experiments
from .config import build, parse_text

SEED = 20240611

BETA = """
maps = beta:2.1, beta:3.3
probs = 0.5, 0.5
alpha = 0.75
x0 = 0.7071067811865476
n = 10000
seed = {seed}
"""

LSV = """
maps = lsv:0.2, lsv:0.25
probs = 0.5, 0.5
alpha = 0.5
x0 = draw-lebesgue
n = 20000
trials = 4000
seed = {seed}
"""

CONFIGS = {
    "karamata": """
maps = beta:2
probs = 1
density = lebesgue
alpha = 0.5
x0 = 0.5
n_list = 1000000
trunc_eps = 0.5
""",
    "hitting": BETA + "trials = 4000\nJ = 1:inf\nperiodicity_len = 12\nperiodicity_tol = 1e-9\n",
    "poisson": BETA + "trials = 4000\nrects = 0:0.5:1:inf; 0.5:1:1:inf\n",
    "stable": BETA + "trials = 5000\n",
    "functional": BETA + "trials = 4000\nt_grid = 0.25, 0.5, 1\n",
    "lsv_stable": LSV,
    "lsv_poisson": LSV + "rects = 0:1:1:inf\n",
    "annealed": BETA + "trials = 5000\n",
    "lsv_annealed": LSV,
    "pullback": "maps = beta:2.1, beta:3.3\nprobs = 0.5, 0.5\nreport = pullback\nn_max = 60\n"
                "seed = {seed}\n",
    "cone": "maps = lsv:0.2, lsv:0.25\nprobs = 0.5, 0.5\nreport = cone\nn_max = 200\ncone_a = 2\n"
            "seed = {seed}\n",
    "decay": "maps = lsv:0.25\nprobs = 1\nreport = decay\nn_max = 400\n",
}

MODES = {"lsv_stable": "stable", "lsv_poisson": "poisson", "lsv_annealed": "annealed",
         "pullback": "transfer", "cone": "transfer", "decay": "transfer"}


def config_text(name: str, seed: int = SEED) -> str:
    return CONFIGS[name].format(seed=seed) + f"mode = {MODES.get(name, name)}\n"


def config(name: str, seed: int = SEED, **overrides):
    raw = parse_text(config_text(name, seed))
    raw.update({k: str(v) for k, v in overrides.items()})
    return build(raw)


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"criterion {self.number:>2} {'PASS' if self.passed else 'FAIL'}  {self.title}: {parts}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _from_report(number: int, title: str, reports: list, extra: dict | None = None) -> Criterion:
    details, ok = {}, True
    for prefix, rep in reports:
        for name, c in rep.checks.items():
            details[f"{prefix}{name}"] = c["value"]
            ok &= c["pass"]
    details.update(extra or {})
    return Criterion(number, title, bool(ok), details)


def analytic_invariants() -> Criterion:
    """Criterion 1."""
    t0 = time.perf_counter()
    d = {}
    specs = [beta_map(2.0), beta_map(2.1), beta_map(3.3), beta_map(2.5), lsv(0.2), lsv(0.25)]
    d["row_sum_err"] = max(float(np.max(np.abs(ulam_matrix(s, 4096).row_sums() - 1.0)))
                           for s in specs)
    for fam in (MapFamily((beta_map(2.1), beta_map(3.3))), MapFamily((lsv(0.2), lsv(0.25)))):
        op = annealed_operator(fam, (0.5, 0.5), 4096)
        d["row_sum_err"] = max(d["row_sum_err"], float(np.max(np.abs(op.row_sums() - 1.0))))
    h = stationary_density(ulam_matrix(beta_map(2.0), 4096)).values
    d["doubling_density_err"] = float(np.max(np.abs(h - 1.0)))

    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(50):
        alpha, p = rng.uniform(0.2, 1.9), rng.uniform(0.0, 1.0)
        a, b = np.sort(rng.uniform(0.05, 5.0, 2))
        if rng.random() < 0.5:
            a, b = -b, -a
        model = TailModel(alpha, 0.5, 1.0, p)
        closed = levy_measure(IntervalUnion(((a, b),)), model)
        quad, _ = integrate.quad(lambda x: float(levy_density(x, model)), a, b,
                                 epsabs=1e-13, epsrel=1e-12)
        worst = max(worst, abs(closed - quad))
    d["levy_quad_err"] = worst

    table = [c_alpha_eps(0.5, 1.0, 0.3) == 0.0,
             c_alpha_eps(1.0, 1.0, math.exp(-1.0)) == 1.0,
             c_alpha_eps(1.5, 1.0, 1.0) == 3.0]
    d["c_alpha_table"] = all(table)

    law = StableLaw(0.75, 1.0)
    cf = stable_cf(law, np.linspace(-20.0, 20.0, 200))
    d["cf0"] = complex(stable_cf(law, 0.0)) == 1.0
    d["cf_max_modulus"] = float(np.max(np.abs(cf)))
    d["seconds"] = time.perf_counter() - t0
    ok = (d["row_sum_err"] <= 1e-10 and d["doubling_density_err"] <= 1e-8
          and d["levy_quad_err"] <= 1e-8 and d["c_alpha_table"] and d["cf0"]
          and d["cf_max_modulus"] <= 1.0 + 1e-12 and d["seconds"] < 60.0)
    return Criterion(1, "analytic invariants", ok, d)


def karamata() -> Criterion:
    """Criterion 2."""
    t0 = time.perf_counter()
    rep = experiments.run(config("karamata"))
    seconds = time.perf_counter() - t0
    crit = _from_report(2, "Karamata ratios", [("", rep)], {"seconds": seconds})
    crit.passed &= seconds < 10.0
    return crit


def exponential_law() -> Criterion:
    """Criterion 3."""
    rep = experiments.run(config("hitting"))
    periodic = rep.summary["periodicity"]["verdict"]
    crit = _from_report(3, "exponential law", [("", rep)],
                        {"periodicity": periodic, "censored": rep.summary["censored"]})
    crit.passed &= periodic == "no-period-found"
    return crit


def poisson_law() -> Criterion:
    """Criterion 4."""
    return _from_report(4, "Poisson law", [("", experiments.run(config("poisson")))])


def quenched_stable() -> Criterion:
    """Criterion 5, for two independent driving paths."""
    reps = [(f"omega{i}_", experiments.run(config("stable", omega_index=i))) for i in (0, 1)]
    crit = _from_report(5, "quenched stable law", reps)
    crit.details["distinct_paths"] = (reps[0][1].summary["omega_prefix"]
                                      != reps[1][1].summary["omega_prefix"])
    crit.passed &= crit.details["distinct_paths"]
    return crit


def functional_marginals() -> Criterion:
    """Criterion 6."""
    return _from_report(6, "functional marginals", [("", experiments.run(config("functional")))])


def intermittent() -> Criterion:
    """Criterion 7."""
    s = experiments.run(config("lsv_stable"))
    p = experiments.run(config("lsv_poisson"))
    return _from_report(7, "intermittent stable and Poisson", [("", s), ("", p)],
                        {"x0": s.summary["x0"]})


def annealed() -> Criterion:
    """Criterion 8."""
    b = experiments.run(config("annealed"))
    lsv_rep = experiments.run(config("lsv_annealed"))
    crit = Criterion(8, "annealed", True, {
        "beta_ks_annealed_vs_quenched": b.checks["ks_annealed_vs_quenched"]["value"],
        "lsv_ks_annealed_vs_oracle": lsv_rep.checks["ks_annealed_vs_oracle"]["value"],
    })
    crit.passed = (b.checks["ks_annealed_vs_quenched"]["pass"]
                   and lsv_rep.checks["ks_annealed_vs_oracle"]["pass"])
    return crit


def transfer_diagnostics() -> Criterion:
    """Criterion 9."""
    reps = [(name + "_", experiments.run(config(name))) for name in ("pullback", "cone", "decay")]
    return _from_report(9, "transfer diagnostics", reps)


def determinism(name: str = "poisson", threads=("1", "8")) -> Criterion:
    """Criterion 10: the CLI run of ``name`` under each thread count gives identical files."""
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "run.cfg"
        cfg.write_text(config_text(name))
        dirs = []
        for t in threads:
            out = tmp / f"out{t}"
            env = dict(os.environ, RDS_THREADS=t)
            code = subprocess.run([sys.executable, "-m", "rdslimit", MODES.get(name, name),
                                   "--config", str(cfg), "--out", str(out)], env=env,
                                  capture_output=True).returncode
            if code != 0:
                return Criterion(10, "determinism", False, {"exit_code": code, "threads": t})
            dirs.append(out)
        files = sorted(p.name for p in dirs[0].iterdir())
        same = files == sorted(p.name for p in dirs[1].iterdir()) and all(
            filecmp.cmp(dirs[0] / f, dirs[1] / f, shallow=False) for f in files)
        return Criterion(10, "determinism", same, {"run": name, "files": len(files),
                                                   "threads": "/".join(threads)})


QUICK = (analytic_invariants, karamata)
FULL = QUICK + (exponential_law, poisson_law, quenched_stable, functional_marginals,
                intermittent, annealed, transfer_diagnostics, determinism)


def run_all(quick: bool = False) -> list[Criterion]:
    return [fn() for fn in (QUICK if quick else FULL)]
