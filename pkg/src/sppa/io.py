"""Trace CSV, manifest and report files.

Trace floats are written with 17 significant digits (``repr``-exact round
trip); NaN marks fields that are undefined on a row, e.g. the step fields of
the final row or ``F_hat`` between Monte Carlo estimates.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .baseline import BaselineResult
from .engine import ReplicaEnsemble, RunConfig, RunTrace, schedule_from_dict
from .errors import ConfigError
from .geometry import parse_space
from .integrands import integrand_from_dict, integrand_to_dict

TRACE_COLUMNS = ("replica", "n", "lambda", "event", "step_len", "step_bound", "dist_ref", "F_hat", "F_se", "dist_base")
MANIFEST_VERSION = 1


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def write_trace(path, ens: ReplicaEnsemble) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in ens.traces:
            cols = (t.lam, t.step_len, t.step_bound, t.dist_ref, t.F_hat, t.F_se, t.dist_base)
            for i in range(len(t.n)):
                w.writerow([t.replica, int(t.n[i]), fmt_float(cols[0][i]), t.events[i], *(fmt_float(c[i]) for c in cols[1:])])


def read_trace(path) -> ReplicaEnsemble:
    """Per-replica traces without stored iterates.

    ``alpha`` is recovered from ``step_bound = 2 lam alpha (1 + dist_base)``.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc.strerror}") from None
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ConfigError(f"{path} is not a trace file (expected columns {', '.join(TRACE_COLUMNS)})")
    by_rep: dict = {}
    for r in rows[1:]:
        by_rep.setdefault(int(r[0]), []).append(r)
    traces = []
    for rep in sorted(by_rep):
        body = by_rep[rep]
        num = np.array([[float(r[i]) for i in (2, 4, 5, 6, 7, 8, 9)] for r in body]).T
        lam, step_len, step_bound, dist_ref, F_hat, F_se, dist_base = num
        traces.append(
            RunTrace(
                n=np.array([int(r[1]) for r in body]),
                lam=lam,
                events=[r[3] for r in body],
                alpha=step_bound / (2.0 * lam * (1.0 + dist_base)),
                step_len=step_len,
                step_bound=step_bound,
                dist_ref=dist_ref,
                dist_base=dist_base,
                F_hat=F_hat,
                F_se=F_se,
                replica=rep,
            )
        )
    return ReplicaEnsemble(traces, [None] * len(traces))


def manifest_dict(cfg: RunConfig, ens: ReplicaEnsemble, splitting: bool, baseline: BaselineResult | None = None) -> dict:
    from . import __version__

    enc = cfg.space.encode
    out = {
        "version": MANIFEST_VERSION,
        "package_version": __version__,
        "mode": "splitting" if splitting else "sppa",
        "space": str(cfg.space),
        "integrand": integrand_to_dict(cfg.integrand),
        "x0": enc(cfg.x0),
        "schedule": cfg.schedule.to_dict(),
        "iterations": cfg.iterations,
        "trace_stride": cfg.trace_stride,
        "big_F_samples": cfg.big_F_samples,
        "master_seed": cfg.seed,
        "replicas": len(ens),
        "replica_seeds": [int(s) for s in ens.seeds],
        "reference": None if cfg.reference is None else enc(cfg.reference),
        "trace_float_format": ".17g",
    }
    if baseline is not None:
        out["baseline"] = {
            "argmin": enc(baseline.argmin),
            "argmin_set": [enc(a) for a in baseline.argmin_set],
            "min_value": baseline.min_value,
            "min_sum": baseline.min_sum,
            "method": baseline.method,
            "accuracy": baseline.accuracy,
        }
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_manifest(path) -> dict:
    try:
        m = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    if m.get("version") != MANIFEST_VERSION:
        raise ConfigError(f"unsupported manifest version {m.get('version')!r}")
    return m


def run_config_from_manifest(m: dict) -> tuple[RunConfig, int, bool]:
    """``(RunConfig, replicas, splitting)`` reproducing the recorded run."""
    space = parse_space(m["space"])
    cfg = RunConfig(
        space=space,
        integrand=integrand_from_dict(m["integrand"]),
        x0=space.decode(m["x0"]),
        schedule=schedule_from_dict(m["schedule"]),
        iterations=m["iterations"],
        seed=m["master_seed"],
        trace_stride=m["trace_stride"],
        reference=None if m["reference"] is None else space.decode(m["reference"]),
        big_F_samples=m["big_F_samples"],
    )
    return cfg.validated(), m["replicas"], m["mode"] == "splitting"
