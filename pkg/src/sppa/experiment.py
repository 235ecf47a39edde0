"""End-to-end experiments: baseline, ensemble run, diagnostics, artifacts.

Exit codes: 0 all requested checks pass, 1 a check fails, 2 configuration
error, 3 internal error.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .baseline import BaselineResult, calibrated_eps, compute_baseline
from .config import ExperimentConfig, build_integrand, build_run_config, build_space, eps_value
from .engine import ReplicaEnsemble, RunConfig, run_ensemble
from .errors import ConfigError, SPPAError
from .integrands import SquaredDistance
from .io import manifest_dict, write_json, write_trace

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


@dataclass
class ExperimentOutcome:
    exit_code: int
    message: str = ""
    report: dg.DiagnosticsReport | None = None
    baseline: BaselineResult | None = None
    ensemble: ReplicaEnsemble | None = None
    paths: dict = field(default_factory=dict)


def _family(g):
    comps = getattr(g, "components", None)
    return type(comps[0]) if comps else type(g)


def auto_eps(rc: RunConfig, base: BaselineResult) -> float:
    if _family(rc.integrand) is not SquaredDistance:
        raise ConfigError("diagnostics.eps = auto needs a squared-distance family; give a number")
    return calibrated_eps(base.min_value, rc.schedule.value(rc.iterations), base.accuracy)


def run_diagnostics(
    checks,
    rc: RunConfig,
    ens: ReplicaEnsemble,
    base: BaselineResult | None,
    *,
    eps: float | None = None,
    mc_samples: int = 10_000,
    states: int = 200,
    levels=(0.1, 0.5),
    min_fraction: float = 0.9,
    seed: int = 0,
) -> dg.DiagnosticsReport:
    report = dg.DiagnosticsReport()
    z = rc.reference

    def need_ref(name):
        if z is None:
            raise ConfigError(f"check {name} needs a reference point (run.reference)")

    def need_base(name):
        if base is None:
            raise ConfigError(f"check {name} needs a baseline (baseline.kind)")

    for name in checks:
        if name == "step_bound":
            report.add(dg.step_bound_check(ens))
        elif name == "convergence":
            need_base(name)
            e = auto_eps(rc, base) if eps is None else eps
            report.add(dg.convergence_verdict(ens, base.argmin_set, e, rc.space, min_fraction))
        elif name in ("quasi_fejer", "quasi_fejer_exact"):
            need_ref(name)
            report.add(dg.quasi_fejer_check(rc, ens.traces, z, states, mc_samples, seed, exact=name.endswith("exact")))
        elif name == "summability":
            need_ref(name)
            need_base(name)
            report.add(dg.summability_check(ens, z, base.min_value))
        elif name == "boundedness":
            need_ref(name)
            report.add(dg.estimate_boundedness_modulus(ens, z, levels, rc.space))
        elif name == "lipschitz_sum":
            need_base(name)
            lcfg = dg.lipschitz_from_traces(ens.traces, rc.integrand, base.min_value, rc.schedule)
            report.add(dg.simulate_lipschitz_sum(lcfg, rc.iterations, seed=seed))
        elif name == "asymptotic_center":
            report.add(dg.asymptotic_center_check(ens, z, rc.space))
        else:
            raise ConfigError(f"unknown check {name!r}")
    return report


def _baseline(cfg: ExperimentConfig) -> BaselineResult | None:
    kind = cfg["baseline.kind"]
    if kind == "none":
        return None
    space = build_space(cfg)
    x0 = None if cfg["run.x0"] is None else space.decode(cfg["run.x0"])
    g = build_integrand(cfg, space, x0)
    try:
        return compute_baseline(g, None if kind == "auto" else kind)
    except SPPAError as exc:
        raise ConfigError(f"baseline: {exc}") from None


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentOutcome:
    try:
        return _run(cfg, workers)
    except SPPAError as exc:
        return ExperimentOutcome(EXIT_CONFIG, f"configuration error: {exc}")
    except Exception as exc:  # exit-code contract: anything unexpected is internal
        log.exception("internal error")
        return ExperimentOutcome(EXIT_INTERNAL, f"internal error: {type(exc).__name__}: {exc}")


def _run(cfg: ExperimentConfig, workers) -> ExperimentOutcome:
    t0 = time.perf_counter()
    checks = cfg["diagnostics.checks"]
    if "boundedness" in checks and cfg["run.replicas"] < 20:
        raise ConfigError("the boundedness check needs run.replicas >= 20")
    base = _baseline(cfg)
    ref = None
    if base is not None and cfg["run.reference"] in (None, "baseline"):
        ref = base.argmin
    rc = build_run_config(cfg, reference=ref)
    eps = eps_value(cfg)
    if "convergence" in checks and eps is None and base is not None:
        auto_eps(rc, base)  # fail fast before the run

    splitting = cfg["run.mode"] == "splitting"
    ens = run_ensemble(rc, cfg["run.replicas"], splitting=splitting, workers=workers)
    t_run = time.perf_counter() - t0

    out = cfg.path("output.dir")
    out.mkdir(parents=True, exist_ok=True)
    paths = {"trace": out / "trace.csv", "manifest": out / "manifest.json", "report": out / "report.json"}
    write_trace(paths["trace"], ens)
    write_json(paths["manifest"], manifest_dict(rc, ens, splitting, base))

    report = run_diagnostics(
        checks,
        rc,
        ens,
        base,
        eps=eps,
        mc_samples=cfg["diagnostics.mc_samples"],
        states=cfg["diagnostics.states"],
        levels=cfg["diagnostics.levels"],
        min_fraction=cfg["diagnostics.min_fraction"],
        seed=cfg["diagnostics.seed"],
    )
    report.meta = {
        "replicas": len(ens),
        "iterations": rc.iterations,
        "run_seconds": t_run,
        "total_seconds": time.perf_counter() - t0,
        "final_step": float(rc.schedule.value(rc.iterations)),
        "baseline": None if base is None else {"min_value": base.min_value, "method": base.method, "accuracy": base.accuracy},
    }
    report.write(paths["report"], out / "detail")
    code = EXIT_OK if report.passed else EXIT_CHECK
    failed = [n for n, c in report.checks.items() if not c.passed]
    msg = "all checks passed" if code == EXIT_OK else f"failed checks: {', '.join(failed)}"
    return ExperimentOutcome(code, msg, report, base, ens, paths)


def run_simulation(cfg: ExperimentConfig, lemma: str) -> dg.CheckResult:
    from .engine import PowerSchedule

    sched = PowerSchedule(cfg["simulate.schedule.c"], cfg["simulate.schedule.p"], cfg["simulate.schedule.n0"])
    alpha = dg.AlphaSampler(cfg["simulate.alpha"], cfg["simulate.alpha.a"], cfg["simulate.alpha.b"])
    N, R, seed = cfg["simulate.N"], cfg["simulate.replicas"], cfg["simulate.seed"]
    if N < 4:
        raise ConfigError("simulate.N must be at least 4")
    if lemma == "two-series":
        return dg.two_series_check(sched, alpha, N, R, seed, adversarial=cfg["simulate.adversarial"])
    if lemma == "lipschitz-sum":
        rule = dg.BetaRule(cfg["simulate.beta"], cfg["simulate.beta.kappa"], cfg["simulate.beta.rho"], cfg["simulate.beta.q"])
        lcfg = dg.LipschitzSumConfig(
            schedule=sched,
            theta=cfg["simulate.theta"],
            alpha=alpha,
            gamma=cfg["simulate.gamma"],
            beta=rule,
            beta0=cfg["simulate.beta0"],
            admissible=cfg["simulate.admissible"],
        )
        return dg.simulate_lipschitz_sum(lcfg, N, R, seed)
    raise ConfigError(f"unknown lemma {lemma!r}")


def summarize(report: dg.DiagnosticsReport) -> list[str]:
    lines = []
    for name, c in report.checks.items():
        keys = [k for k, v in c.summary.items() if isinstance(v, (int, float, bool, str, np.floating))][:4]
        body = ", ".join(f"{k}={c.summary[k]:.4g}" if isinstance(c.summary[k], float) else f"{k}={c.summary[k]}" for k in keys)
        lines.append(f"{'PASS' if c.passed else 'FAIL'} {name}: {body}")
    return lines


def write_check(path: Path, result: dg.CheckResult) -> None:
    rep = dg.DiagnosticsReport()
    rep.add(result)
    rep.write(path, path.parent / "detail")


ITERATE_CHECKS = ("quasi_fejer", "quasi_fejer_exact", "asymptotic_center")


def diagnose_trace(
    trace_path,
    checks,
    manifest_path=None,
    *,
    min_F: float | None = None,
    eps: float | None = None,
    levels=(0.1, 0.5),
    mc_samples: int = 10_000,
    states: int = 200,
    min_fraction: float = 0.9,
    seed: int = 0,
) -> dg.DiagnosticsReport:
    """Diagnostics on a written trace.

    Checks that need iterates, the integrand or ``min F`` use the manifest;
    iterates are regenerated by re-running it, and the re-run must
    reproduce the trace file exactly.
    """
    from .io import read_manifest, read_trace, run_config_from_manifest

    ens = read_trace(trace_path)
    rc = None
    if manifest_path is not None:
        m = read_manifest(manifest_path)
        rc, R, split = run_config_from_manifest(m)
        if min_F is None and "baseline" in m:
            min_F = m["baseline"]["min_value"]
    if any(c in ITERATE_CHECKS or c == "lipschitz_sum" for c in checks) and rc is None:
        raise ConfigError(f"checks {', '.join(c for c in checks if c in ITERATE_CHECKS + ('lipschitz_sum',))} need --manifest")
    if any(c in ITERATE_CHECKS for c in checks):
        rerun = run_ensemble(rc, R, splitting=split)
        for a, b in zip(rerun.traces, ens.traces):
            if not (np.array_equal(a.step_len, b.step_len, equal_nan=True) and np.array_equal(a.dist_base, b.dist_base)):
                raise ConfigError("trace file does not match the run reconstructed from the manifest")
        full = rerun
    else:
        full = ens

    report = dg.DiagnosticsReport()
    for name in checks:
        if name == "step_bound":
            report.add(dg.step_bound_check(ens))
        elif name == "convergence":
            if eps is None:
                raise ConfigError("convergence from a trace needs --eps")
            if not all(np.isfinite(t.dist_ref[-1]) for t in ens.traces):
                raise ConfigError("trace has no reference distances")
            report.add(dg.convergence_from_errors(ens, [t.dist_ref[-1] for t in ens.traces], eps, min_fraction))
        elif name == "summability":
            if min_F is None:
                raise ConfigError("summability needs --min-F or a manifest with a baseline")
            report.add(dg.summability_check(ens, None, min_F))
        elif name == "boundedness":
            report.add(dg.estimate_boundedness_modulus(ens, None, levels))
        elif name == "lipschitz_sum":
            if min_F is None:
                raise ConfigError("lipschitz_sum needs --min-F or a manifest with a baseline")
            lcfg = dg.lipschitz_from_traces(ens.traces, rc.integrand, min_F, rc.schedule)
            report.add(dg.simulate_lipschitz_sum(lcfg, rc.iterations, seed=seed))
        elif name in ("quasi_fejer", "quasi_fejer_exact"):
            if rc.reference is None:
                raise ConfigError("quasi-Fejer check needs a run with a reference point")
            report.add(dg.quasi_fejer_check(rc, full.traces, rc.reference, states, mc_samples, seed, exact=name.endswith("exact")))
        elif name == "asymptotic_center":
            report.add(dg.asymptotic_center_check(full, rc.reference, rc.space))
        else:
            raise ConfigError(f"unknown check {name!r}")
    return report
