"""Command-line entry point.

Exit codes: 0 success, 2 configuration or domain error, 3 a selftest check
failed.  ``RDS_THREADS`` sets the worker count and never changes outputs.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..stable import StableLaw, cms_sampler, stable_cf
from . import experiments
from .config import ConfigError, ExperimentConfig, build, load
from .io import SCHEMA, write_csv, write_json

log = logging.getLogger("rdslimit")

EXIT_OK, EXIT_CONFIG, EXIT_SELFTEST = 0, 2, 3

# flags accepted by every experiment subcommand, mapped onto config keys
_COMMON = {
    "seed": int, "n": int, "trials": int, "alpha": float, "x0": str, "out": str,
    "start_measure": str, "omega_index": int, "k": int,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, needs_config: bool) -> None:
    p.add_argument("--config", required=needs_config, help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    for key, typ in _COMMON.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdslimit", description="stable limit experiments for random maps")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stable", help="limit-law CF table, CMS draws, or the quenched experiment")
    _add_common(p, needs_config=False)
    p.add_argument("--p", type=float, dest="p_pos")
    p.add_argument("--cf-grid", default="-5:5:201", help="lo:hi:count for the CF table")
    p.add_argument("--samples", type=int, default=0, help="CMS draws to dump")

    for name in ("functional", "poisson", "hitting", "annealed", "karamata"):
        _add_common(sub.add_parser(name), needs_config=True)

    p = sub.add_parser("transfer")
    _add_common(p, needs_config=False)
    p.add_argument("--family", help="comma separated maps, e.g. lsv:0.2,lsv:0.25")
    p.add_argument("--probs")
    p.add_argument("--report", choices=("stationary", "pullback", "decay", "cone"))

    p = sub.add_parser("selftest")
    p.add_argument("--quick", action="store_true", help="analytic checks only")
    return parser


def _overrides(args) -> dict[str, str]:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    for key in _COMMON:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = str(v)
    for key, attr in (("maps", "family"), ("probs", "probs"), ("report", "report"),
                      ("p_pos", "p_pos")):
        v = getattr(args, attr, None)
        if v is not None:
            out[key] = str(v)
    return out


def _config(args, mode: str) -> ExperimentConfig:
    raw = _overrides(args)
    raw["mode"] = mode
    if args.config:
        return load(args.config, raw)
    return build(raw)


def _cf_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ConfigError(f"--cf-grid expects lo:hi:count, got {text!r}") from exc


def _law_outputs(args) -> int:
    law_alpha = args.alpha if args.alpha is not None else ExperimentConfig.alpha
    p = args.p_pos if args.p_pos is not None else 1.0
    try:
        law = StableLaw(law_alpha, p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    t = _cf_grid(args.cf_grid)
    cf = stable_cf(law, t)
    write_csv(out / "cf.csv", ["t", "re_cf", "im_cf"], zip(t, cf.real, cf.imag))
    summary = {"schema": SCHEMA, "mode": "stable-law", "alpha": law.alpha, "p": law.p_pos,
               "beta": law.beta_skew, "a_alpha": law.a_alpha}
    if args.samples:
        if law.alpha == 1.0:
            raise ConfigError("CMS draws are not provided at alpha = 1")
        seed = args.seed if args.seed is not None else ExperimentConfig.seed
        s = cms_sampler(law, args.samples, seed)
        write_csv(out / "cms_samples.csv", ["index", "value"], enumerate(s.values))
        summary["cms"] = {"count": len(s), "seed": seed, **s.meta}
    write_json(out / "summary.json", summary)
    return EXIT_OK


def _run_mode(args, mode: str) -> int:
    cfg = _config(args, mode)
    report = experiments.run(cfg)
    experiments.write_report(report, cfg.out)
    for name, c in report.checks.items():
        log.info("%s %s = %.6g (target %.6g, tol %.6g)", "pass" if c["pass"] else "FAIL",
                 name, c["value"], c["target"], c["tolerance"])
    return EXIT_OK


def _selftest(quick: bool) -> int:
    from . import acceptance

    t0 = time.perf_counter()
    results = acceptance.run_all(quick=quick)
    for r in results:
        print(r.line())
    log.info("selftest finished in %.1f s", time.perf_counter() - t0)
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        if args.command == "selftest":
            return _selftest(args.quick)
        if args.command == "stable" and not args.config:
            return _law_outputs(args)
        return _run_mode(args, args.command)
    except ConfigError as exc:
        print(f"rdslimit: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"rdslimit: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
