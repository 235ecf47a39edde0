"""Command line entry point: ``sppa <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .config import CHECKS, load_config
from .engine import PowerSchedule, validate_schedule
from .errors import SPPAError


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = ex.run_experiment(cfg, workers=args.workers)
    if out.report is not None:
        for line in ex.summarize(out.report):
            print(line)
        for k, p in out.paths.items():
            print(f"{k}: {p}")
    stream = sys.stdout if out.exit_code == 0 else sys.stderr
    print(out.message, file=stream)
    return out.exit_code


def _cmd_validate(args) -> int:
    verdict = validate_schedule(PowerSchedule(args.c, args.p, args.n0))
    print(("accepted: " if verdict else "rejected: ") + verdict.reason)
    return 0 if verdict else 1


def _cmd_diagnose(args) -> int:
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    report = ex.diagnose_trace(
        args.trace,
        checks,
        args.manifest,
        min_F=args.min_F,
        eps=args.eps,
        levels=[float(v) for v in args.levels.split(",")],
        mc_samples=args.mc_samples,
        states=args.states,
        seed=args.seed,
    )
    for line in ex.summarize(report):
        print(line)
    if args.out:
        report.write(args.out, Path(args.out).parent / "detail")
    return 0 if report.passed else 1


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    res = ex.run_simulation(cfg, args.lemma)
    print(json.dumps(res.to_dict()["summary"], indent=2, sort_keys=True))
    out = cfg.path("output.dir")
    out.mkdir(parents=True, exist_ok=True)
    ex.write_check(out / f"{res.name}.json", res)
    return 0 if res.passed else 1


def _cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    base = ex._baseline(cfg)
    if base is None:
        print("baseline.kind = none; nothing to compute", file=sys.stderr)
        return 2
    space = ex.build_space(cfg)
    print(
        json.dumps(
            {
                "argmin": space.encode(base.argmin),
                "argmin_set": [space.encode(a) for a in base.argmin_set],
                "min_value": base.min_value,
                "min_sum": base.min_sum,
                "method": base.method,
                "accuracy": base.accuracy,
                "iterations": base.iterations,
            },
            indent=2,
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sppa", description="Stochastic proximal point experiments on geodesic spaces.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="baseline, ensemble run and diagnostics from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None, help="process count (default: SPPA_THREADS or all CPUs)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate-schedule", help="check lam_n = c (n + n0)^-p against the step conditions")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--n0", type=float, default=1.0)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("diagnose", help="diagnostics on a written trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--checks", required=True, help=f"comma list from: {', '.join(CHECKS)}")
    p.add_argument("--manifest")
    p.add_argument("--min-F", dest="min_F", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--levels", default="0.1,0.5")
    p.add_argument("--mc-samples", type=int, default=10_000)
    p.add_argument("--states", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report JSON path")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("simulate", help="simulate the sequence lemmas")
    p.add_argument("--lemma", required=True, choices=["lipschitz-sum", "two-series"])
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("baseline", help="deterministic argmin and min F for a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_baseline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SPPAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    except Exception as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ex.EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
