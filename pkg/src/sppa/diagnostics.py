"""Empirical certification of the inequalities behind SPPA convergence.

Every check returns a :class:`CheckResult` naming its tolerances and sample
counts; a :class:`DiagnosticsReport` collects them and serialises to JSON
(summary) plus CSV (per-state or per-replica detail rows).

Almost-sure statements are checked as replica fractions, ``limsup`` as the
max over the second half of the realised window, and Monte Carlo pass
margins are three standard errors throughout.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .engine import ReplicaEnsemble, RunConfig, RunTrace, validate_schedule
from .errors import ConfigError, DomainError
from .geometry import Space
from .integrands import Integrand, big_F

MC_MARGIN = 3.0
FLOAT_SLACK = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    tolerance: dict
    samples: dict
    summary: dict
    detail: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("detail")
        return _jsonable(d)


@dataclass
class DiagnosticsReport:
    checks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, result: CheckResult) -> CheckResult:
        self.checks[result.name] = result
        return result

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "meta": _jsonable(self.meta),
            "checks": {k: v.to_dict() for k, v in self.checks.items()},
        }

    def write(self, path, detail_dir=None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        if detail_dir is None:
            return
        detail_dir = Path(detail_dir)
        detail_dir.mkdir(parents=True, exist_ok=True)
        for name, res in self.checks.items():
            if not res.detail:
                continue
            cols = list(res.detail[0].keys())
            with open(detail_dir / f"{name}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=cols)
                w.writeheader()
                for row in res.detail:
                    w.writerow({k: _jsonable(v) for k, v in row.items()})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


# ---------------------------------------------------------------------------
# quasi-Fejer inequality


def fejer_constant(g: Integrand, z) -> float:
    """``C = 8 (1 + d(z, p)**2)``.

    From ``f(xi,x_n) - f(xi,x_{n+1}) <= 4 lam L^2 (1 + d(x_n,p)^2)`` and
    ``1 + d(x,p)^2 <= 2 (1 + d(z,p)^2)(1 + d(x,z)^2)``.
    """
    return 8.0 * (1.0 + g.space.dist(z, g.base_point) ** 2)


@dataclass
class QuasiFejerRow:
    n: int
    lam: float
    lhs: float
    lhs_se: float
    rhs: float
    chi: float
    eta: float
    theta: float
    C: float
    dist_sq: float
    se_total: float
    exact: bool
    passed: bool


def check_quasi_fejer(
    cfg: RunConfig,
    x,
    z,
    n: int,
    mc_samples: int = 10_000,
    rng: np.random.Generator | None = None,
    exact: bool = False,
) -> QuasiFejerRow:
    """Compare ``E_n d(x_{n+1}, z)**2`` with ``(1 + chi) d(x_n, z)**2 - theta + eta``.

    ``exact=True`` sums over a finite event space instead of sampling.
    """
    if mc_samples < 1:
        raise DomainError("quasi-Fejer check needs at least one Monte Carlo sample")
    g, space = cfg.integrand, cfg.space
    rng = np.random.default_rng() if rng is None else rng
    lam = float(cfg.schedule.value(n))
    d = space.dist
    if not exact and mc_samples < 100:
        raise DomainError("Monte Carlo quasi-Fejer check needs at least 100 samples")
    if g.events.is_finite and g.events.size == 1:
        exact = True  # deterministic integrand: the conditional law is a point mass
    if exact:
        if not g.events.is_finite:
            raise DomainError("exact quasi-Fejer mode needs a finite event space")
        p = g.events.probabilities
        vals = np.array([d(g.prox(lam, e, x), z) ** 2 for e in range(g.events.size)])
        lhs, lhs_se = float(p @ vals), 0.0
    else:
        vals = np.array([d(g.prox(lam, e, x), z) ** 2 for e in g.events.sample_many(rng, mc_samples)])
        lhs = float(vals.mean())
        lhs_se = float(vals.std(ddof=1) / math.sqrt(mc_samples))
    Fx, se_x = big_F(g, x, cfg.big_F_samples, rng)
    Fz, se_z = big_F(g, z, cfg.big_F_samples, rng)
    C = fejer_constant(g, z)
    chi = eta = 2.0 * C * lam**2 * g.mean_L_sq
    theta = 2.0 * lam * (Fx - Fz)
    d2 = d(x, z) ** 2
    rhs = (1.0 + chi) * d2 - theta + eta
    se_total = lhs_se + 2.0 * lam * math.hypot(se_x, se_z)
    ok = lhs <= rhs + MC_MARGIN * se_total + FLOAT_SLACK
    return QuasiFejerRow(n, lam, lhs, lhs_se, rhs, chi, eta, theta, C, d2, se_total, exact, bool(ok))


def quasi_fejer_check(
    cfg: RunConfig,
    traces: Sequence[RunTrace],
    z,
    states: int = 200,
    mc_samples: int = 10_000,
    seed: int = 0,
    exact: bool = False,
    min_pass_rate: float = 0.99,
) -> CheckResult:
    """Quasi-Fejer inequality at ``states`` stored iterates drawn from the traces."""
    rng = np.random.default_rng(seed)
    pool = [(t, n) for t in traces for n in sorted(t.iterates) if n < t.iterations]
    if not pool:
        raise ConfigError("traces hold no stored iterates before the final step")
    pick = rng.choice(len(pool), size=min(states, len(pool)), replace=False)
    rows = []
    for i in sorted(pick):
        t, n = pool[i]
        row = check_quasi_fejer(cfg, t.iterates[n], z, n, mc_samples, rng, exact)
        rows.append({"replica": t.replica, **asdict(row)})
    rate = sum(r["passed"] for r in rows) / len(rows)
    need = 1.0 if exact else min_pass_rate
    return CheckResult(
        name="quasi_fejer_exact" if exact else "quasi_fejer",
        passed=rate >= need,
        tolerance={"mc_margin_se": MC_MARGIN, "float_slack": FLOAT_SLACK, "min_pass_rate": need},
        samples={"states": len(rows), "mc_samples": 0 if exact else mc_samples},
        summary={
            "pass_rate": rate,
            "C_constant": rows[0]["C"],
            "C_rule": "8 * (1 + d(z, p)^2)",
            "min_slack": min(r["rhs"] - r["lhs"] for r in rows),
            "theta_negative": sum(r["theta"] < -MC_MARGIN * r["se_total"] - FLOAT_SLACK for r in rows),
        },
        detail=rows,
    )


# ---------------------------------------------------------------------------
# summability, boundedness, tail oscillation


def _window(n_end: int) -> slice:
    return slice(n_end // 2, n_end + 1)


def tail_oscillation(values: np.ndarray, n_end: int) -> float:
    w = values[_window(n_end)]
    return float(w.max() - w.min())


def _weighted_gap_sum(trace: RunTrace, min_F: float, n_end: int) -> tuple[float, float]:
    """``sum_{n < n_end} lam_n (F_hat(x_n) - min_F)`` over rows with an F estimate."""
    idx = np.flatnonzero(np.isfinite(trace.F_hat[:n_end]))
    if idx.size == 0:
        return 0.0, 0.0
    gaps = np.diff(np.append(idx, n_end))
    w = trace.lam[idx] * gaps
    s = float(w @ (trace.F_hat[idx] - min_F))
    se = float(np.sqrt(np.sum((w * trace.F_se[idx]) ** 2)))
    return s, se


def _require_ref(trace: RunTrace):
    if not np.isfinite(trace.dist_ref[-1]):
        raise ConfigError("trace carries no reference distances; rerun with a reference point")


def summability_report(trace: RunTrace, z, min_F: float) -> dict:
    """Partial sums of ``lam_n (F(x_n) - min F)``, ``sup d(x_n, z)`` and tail oscillation.

    Distances come from the trace's reference column, which must have been
    measured to ``z``; ``z`` may be None for traces read back from CSV.
    """
    _require_ref(trace)
    N = trace.iterations
    S_full, se_full = _weighted_gap_sum(trace, min_F, N)
    S_half, se_half = _weighted_gap_sum(trace, min_F, N // 2)
    gaps = trace.F_hat - min_F
    neg = int(np.sum(gaps < -MC_MARGIN * np.nan_to_num(trace.F_se) - FLOAT_SLACK))
    osc_full = tail_oscillation(trace.dist_ref, N) if N else 0.0
    osc_half = tail_oscillation(trace.dist_ref, N // 2) if N else 0.0
    return {
        "replica": trace.replica,
        "N": N,
        "S_half": S_half,
        "S_full": S_full,
        "S_increment": S_full - S_half,
        "S_se": se_full,
        "sup_dist": float(np.nanmax(trace.dist_ref)),
        "osc_half": osc_half,
        "osc_full": osc_full,
        "osc_decreasing": bool(osc_full < osc_half or osc_full == 0.0),
        "negative_increments": neg,
    }


def summability_check(ens: ReplicaEnsemble, z, min_F: float, min_osc_fraction: float = 0.9) -> CheckResult:
    """Ensemble-level summability and tail-oscillation verdict.

    ``S_N`` counts as stable when the mean increment over the last doubling
    lies within three standard errors, the error combining the replica
    spread of ``S_N`` and the propagated ``F`` estimation error.
    """
    rows = [summability_report(t, z, min_F) for t in ens.traces]
    S = np.array([r["S_full"] for r in rows])
    inc = np.array([r["S_increment"] for r in rows])
    se_rep = float(S.std(ddof=1) / math.sqrt(len(S))) if len(S) > 1 else 0.0
    se_F = float(np.mean([r["S_se"] for r in rows]))
    bound = MC_MARGIN * (se_rep + se_F) + FLOAT_SLACK
    stable = float(inc.mean()) <= bound
    osc_frac = float(np.mean([r["osc_decreasing"] for r in rows]))
    sups = np.array([r["sup_dist"] for r in rows])
    finite = bool(np.all(np.isfinite(sups)))
    return CheckResult(
        name="summability",
        passed=bool(stable and finite and osc_frac >= min_osc_fraction),
        tolerance={"mc_margin_se": MC_MARGIN, "min_osc_fraction": min_osc_fraction},
        samples={"replicas": len(rows), "iterations": rows[0]["N"]},
        summary={
            "S_mean": float(S.mean()),
            "S_increment_mean": float(inc.mean()),
            "S_increment_bound": bound,
            "S_stable": bool(stable),
            "sup_dist_max": float(sups.max()),
            "osc_decreasing_fraction": osc_frac,
            "negative_increments": int(sum(r["negative_increments"] for r in rows)),
        },
        detail=rows,
    )


def estimate_boundedness_modulus(ens: ReplicaEnsemble, z, levels: Sequence[float], space: Space | None = None) -> CheckResult:
    """Empirical modulus ``psi(level)``: at most ``floor(level * R)`` replicas exceed it."""
    R = len(ens)
    if R < 20:
        raise DomainError(f"boundedness modulus needs at least 20 replicas, got {R}")
    for t in ens.traces:
        _require_ref(t)
        if space is not None and z is not None and t.final is not None and abs(space.dist(t.final, z) - t.dist_ref[-1]) > 1e-9:
            raise ConfigError("trace reference distances were not measured to z")
    sups = np.sort([float(np.nanmax(t.dist_ref)) for t in ens.traces])
    table = []
    for lv in levels:
        if not 0.0 < lv < 1.0:
            raise DomainError(f"levels must lie in (0, 1), got {lv}")
        allowed = int(math.floor(lv * R + 1e-12))
        psi = float(sups[R - 1 - allowed])
        table.append(
            {
                "level": lv,
                "psi": psi,
                "exceedances": int(np.sum(sups > psi)),
                "allowed": allowed,
                "resolvable": lv >= 1.0 / R,
            }
        )
    ok = all(r["exceedances"] <= r["allowed"] for r in table) and bool(np.all(np.isfinite(sups)))
    return CheckResult(
        name="boundedness",
        passed=ok,
        tolerance={"quantile": "lower empirical (1 - level)"},
        samples={"replicas": R},
        summary={"psi": {str(r["level"]): r["psi"] for r in table}, "unresolvable": [r["level"] for r in table if not r["resolvable"]]},
        detail=table,
    )


# ---------------------------------------------------------------------------
# lemma simulators


@dataclass(frozen=True)
class AlphaSampler:
    """I.i.d. nonnegative square-integrable draws with known mean."""

    kind: str = "uniform"
    a: float = 0.0
    b: float = 2.0

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        if self.kind in ("constant", "exponential"):
            return self.a
        raise DomainError(f"unknown alpha sampler {self.kind!r}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "uniform":
            if self.a < 0 or self.b < self.a:
                raise DomainError("uniform alpha needs 0 <= a <= b")
            return rng.uniform(self.a, self.b, size)
        if self.kind == "constant":
            return np.full(size, float(self.a))
        if self.kind == "exponential":
            return rng.exponential(self.a, size)
        raise DomainError(f"unknown alpha sampler {self.kind!r}")


@dataclass(frozen=True)
class BetaRule:
    """How ``beta_{n+1}`` is proposed before the Lipschitz-type cap is enforced.

    ``decay``     ``(1 - kappa lam_n) beta_n + theta lam_n^2 gamma_n alpha_n``; sum lam beta < inf.
    ``persistent``  ``(1 - kappa lam_n) beta_n + rho theta lam_n gamma_n alpha_n``; beta stays
                    bounded away from 0, so sum lam beta diverges.
    ``saturate``  ``beta_n + theta lam_n gamma_n alpha_n``, the largest admissible increment.
    ``power``     ``(n + 1) ** -q``.
    """

    kind: str = "decay"
    kappa: float = 2.0
    rho: float = 0.5
    q: float = 0.25


@dataclass
class LipschitzSumConfig:
    schedule: object
    theta: float = 1.0
    alpha: AlphaSampler = field(default_factory=AlphaSampler)
    gamma: float = 1.0
    beta: BetaRule = field(default_factory=BetaRule)
    beta0: float = 1.0
    admissible: bool = True
    # trace-derived sequences, one array per replica: (alpha, gamma, beta)
    traces: list | None = None

    def __post_init__(self):
        if not self.theta > 0:
            raise DomainError("theta must be positive")
        if self.gamma < 0:
            raise DomainError("gamma must be nonnegative")


def lipschitz_from_traces(traces: Sequence[RunTrace], g: Integrand, min_F: float, schedule) -> LipschitzSumConfig:
    """Sequences from SPPA runs: ``beta_n = F(x_n) - min F``,
    ``gamma_n = (1 + d(x_{n+1},p))(1 + d(x_n,p))``, ``alpha_n = L(xi_{n+1})``,
    ``theta = 2 int L dmu``."""
    seqs = []
    for t in traces:
        if not np.all(np.isfinite(t.F_hat)):
            raise ConfigError("trace-derived beta needs an F estimate on every row")
        beta = np.maximum(t.F_hat - min_F, 0.0)
        gamma = (1.0 + t.dist_base[1:]) * (1.0 + t.dist_base[:-1])
        seqs.append((t.alpha[:-1], gamma, beta))
    return LipschitzSumConfig(schedule=schedule, theta=2.0 * g.mean_L, beta=BetaRule("trace"), traces=seqs)


def _windows(N: int) -> list[int]:
    return [N // 4, N // 2, N]


def simulate_lipschitz_sum(cfg: LipschitzSumConfig, N: int, replicas: int = 50, seed: int = 0) -> CheckResult:
    """Generate ``(alpha_n, gamma_n, beta_n)`` honouring ``beta_{n+1} - beta_n <= theta lam_n gamma_n alpha_n``
    and report tail maxima of ``beta`` at ``N/4``, ``N/2`` and ``N``.

    The tail max at ``M`` is ``max beta_n`` over ``M/2 <= n <= M``.  A replica
    shrinks when the tail max at ``N`` is strictly below the one at ``N/4``.
    Configs declared inadmissible, or whose ``sum lam_n beta_n`` increments
    fail to contract over doubling windows in most replicas, are flagged as
    hypothesis violations and never reported converged.
    """
    verdict = validate_schedule(cfg.schedule)
    if not verdict:
        raise ConfigError(f"schedule rejected: {verdict.reason}")
    rng = np.random.default_rng(seed)
    lam = cfg.schedule.values(N + 1)

    if cfg.beta.kind == "trace":
        if not cfg.traces:
            raise ConfigError("trace beta rule needs trace sequences")
        N = min(N, min(len(b) for _, _, b in cfg.traces) - 1)
        lam = lam[: N + 1]
        alpha = np.stack([a[:N] for a, _, _ in cfg.traces])
        gamma = np.stack([gm[:N] for _, gm, _ in cfg.traces])
        proposed = np.stack([b[: N + 1] for _, _, b in cfg.traces])
        R = alpha.shape[0]
        beta = proposed.copy()
        cap = beta[:, :-1] + cfg.theta * lam[:N] * gamma * alpha
        over = proposed[:, 1:] > cap + FLOAT_SLACK
        clips = int(over.sum())
        # enforcing the cap on a realised trajectory: cap relative to the previous value
        for n in np.flatnonzero(over.any(axis=0)):
            beta[:, n + 1] = np.minimum(beta[:, n + 1], beta[:, n] + cfg.theta * lam[n] * gamma[:, n] * alpha[:, n])
    else:
        R = replicas
        alpha = cfg.alpha.sample(rng, (R, N))
        gamma = np.full((R, N), cfg.gamma)
        beta = np.empty((R, N + 1))
        beta[:, 0] = cfg.beta0
        clips = 0
        b = cfg.beta
        for n in range(N):
            inc_cap = cfg.theta * lam[n] * gamma[:, n] * alpha[:, n]
            cur = beta[:, n]
            if b.kind == "decay":
                prop = max(1.0 - b.kappa * lam[n], 0.0) * cur + cfg.theta * lam[n] ** 2 * gamma[:, n] * alpha[:, n]
            elif b.kind == "persistent":
                prop = max(1.0 - b.kappa * lam[n], 0.0) * cur + b.rho * inc_cap
            elif b.kind == "saturate":
                prop = cur + inc_cap
            elif b.kind == "power":
                prop = np.full(R, (n + 2.0) ** (-b.q))
            else:
                raise DomainError(f"unknown beta rule {b.kind!r}")
            over = prop > cur + inc_cap + FLOAT_SLACK
            clips += int(over.sum())
            beta[:, n + 1] = np.maximum(np.where(over, cur + inc_cap, prop), 0.0)
        if b.kind == "power":
            beta[:, 0] = 1.0

    Ns = _windows(N)
    tail = np.stack([beta[:, k // 2 : k + 1].max(axis=1) for k in Ns], axis=1)
    lb = lam[: N + 1] * beta
    incs = np.stack([lb[:, k // 2 : k].sum(axis=1) for k in Ns], axis=1)
    # compared across the two doublings, N/4 -> N
    shrink = tail[:, 2] < tail[:, 0]
    monotone = (tail[:, 1] < tail[:, 0]) & (tail[:, 2] < tail[:, 1])
    halves = tail[:, 2] <= 0.5 * tail[:, 0]
    summable = (incs[:, 2] < 0.95 * incs[:, 1]) & (incs[:, 1] < 0.95 * incs[:, 0])
    degenerate = bool(np.all(alpha == 0.0) and np.all(beta == beta[:, :1]))

    shrink_frac = float(shrink.mean())
    hyp_violated = (not cfg.admissible) or float(summable.mean()) < 0.5
    if degenerate:
        status = "degenerate-constant"
    elif hyp_violated:
        status = "hypothesis-violated"
    elif shrink_frac >= 0.8:
        status = "converged"
    else:
        status = "not-converged"
    detail = [
        {
            "replica": r,
            **{f"tail_max_{k}": float(tail[r, i]) for i, k in enumerate(Ns)},
            **{f"sum_lam_beta_window_{k}": float(incs[r, i]) for i, k in enumerate(Ns)},
            "sum_lam_beta": float(lb[r].sum()),
            "shrinks": bool(shrink[r]),
            "halves": bool(halves[r]),
        }
        for r in range(R)
    ]
    return CheckResult(
        name="lipschitz_sum",
        passed=status != "not-converged",
        tolerance={"min_shrink_fraction": 0.8, "summable_increment_ratio": 0.95},
        samples={"replicas": R, "N": N, "windows": Ns},
        summary={
            "status": status,
            "converged": status == "converged",
            "hypothesis_violated": hyp_violated,
            "degenerate_constant": degenerate,
            "admissible_declared": cfg.admissible,
            "shrink_fraction": shrink_frac,
            "halving_fraction": float(halves.mean()),
            "monotone_fraction": float(monotone.mean()),
            "summable_fraction": float(summable.mean()),
            "clip_events": clips,
            "median_tail_max": [float(v) for v in np.median(tail, axis=0)],
            "theta": cfg.theta,
        },
        detail=detail,
    )


def two_series_check(
    schedule,
    alpha: AlphaSampler,
    N: int,
    replicas: int = 50,
    seed: int = 0,
    adversarial: bool = False,
) -> CheckResult:
    """Tail oscillation of ``E_n = sum_{k<=n} lam_k (alpha_k - mean)`` across two doublings of ``N``.

    A rejected schedule is only simulated with ``adversarial=True`` and is
    always flagged.
    """
    verdict = validate_schedule(schedule)
    if not verdict and not adversarial:
        raise ConfigError(f"schedule rejected: {verdict.reason}")
    rng = np.random.default_rng(seed)
    lam = schedule.values(N + 1)
    a = alpha.sample(rng, (replicas, N + 1))
    E = np.cumsum(lam * (a - alpha.mean), axis=1)
    Ns = _windows(N)
    osc = np.stack([E[:, k // 2 : k + 1].max(axis=1) - E[:, k // 2 : k + 1].min(axis=1) for k in Ns], axis=1)
    med = np.median(osc, axis=0)
    shrinks = bool(np.all(med == 0.0) or (med[1] < med[0] and med[2] < med[1]))
    flagged = (not verdict.accepted) or not shrinks
    return CheckResult(
        name="two_series",
        passed=(not flagged) or adversarial,
        tolerance={"shrink": "median tail oscillation strictly decreasing at each doubling"},
        samples={"replicas": replicas, "N": N, "windows": Ns},
        summary={
            "median_oscillation": {str(k): float(m) for k, m in zip(Ns, med)},
            "shrinks": shrinks,
            "flagged": flagged,
            "schedule_accepted": verdict.accepted,
            "schedule_reason": verdict.reason,
            "alpha_mean": alpha.mean,
        },
        detail=[{"replica": r, **{f"osc_{k}": float(osc[r, i]) for i, k in enumerate(Ns)}} for r in range(replicas)],
    )


# ---------------------------------------------------------------------------
# asymptotic centre and convergence


def _minimax(space: Space, pts, c) -> float:
    return max(space.dist(c, q) for q in pts) ** 2


def estimate_asymptotic_center(points: Sequence, space: Space, iterations: int = 500, seed: int = 0):
    """Approximate minimiser of ``x -> max_i d(x_i, x)**2`` over a finite window.

    Iterated geodesic averaging towards the farthest point, then a shrinking
    pattern search along geodesics towards window points, midpoints of the
    active set and random points.  Returns ``(center, radius)`` with the
    radius being the attained squared value.
    """
    pts = [space.validate(p) for p in points]
    if not pts:
        raise DomainError("asymptotic centre of an empty window")
    rng = np.random.default_rng(seed)
    d = space.dist
    c = pts[0]
    best_c, best = c, _minimax(space, pts, c)
    for k in range(1, iterations + 1):
        far = max(pts, key=lambda q: d(c, q))
        c = space.geodesic(c, far, 1.0 / (k + 1))
        v = _minimax(space, pts, c)
        if v < best:
            best_c, best = c, v
    if best == 0.0:
        return best_c, 0.0

    extent = math.sqrt(best)
    far_scale = d(space.base_point(), best_c) + 4.0 * extent
    step = 0.5 * extent
    c, val = best_c, best
    while step > 1e-12 * max(1.0, extent):
        dists = np.array([d(c, q) for q in pts])
        active = [pts[i] for i in np.argsort(-dists)[:6]]
        targets = list(pts)
        targets += [space.geodesic(a, b, 0.5) for i, a in enumerate(active) for b in active[i + 1 :]]
        targets += [space.random_point(rng, far_scale) for _ in range(16)]
        improved = False
        for q in targets:
            dq = d(c, q)
            if dq == 0.0:
                continue
            cand = space.geodesic(c, q, min(1.0, step / dq))
            v = _minimax(space, pts, cand)
            if v < val - 1e-15:
                c, val, improved = cand, v, True
        if not improved:
            step *= 0.5
    return c, val


def converged_fraction(finals: Sequence, argmin, eps: float, space: Space) -> tuple[float, list[float]]:
    targets = argmin if isinstance(argmin, list) else [argmin]
    errs = [min(space.dist(x, a) for a in targets) for x in finals]
    return float(np.mean([e <= eps for e in errs])), errs


def convergence_verdict(ens: ReplicaEnsemble, argmin, eps: float, space: Space, min_fraction: float = 0.9) -> CheckResult:
    """Fraction of replicas whose final iterate lies within ``eps`` of the argmin set."""
    _, errs = converged_fraction(ens.finals(), argmin, eps, space)
    return convergence_from_errors(ens, errs, eps, min_fraction)


def convergence_from_errors(ens: ReplicaEnsemble, errs: Sequence[float], eps: float, min_fraction: float = 0.9) -> CheckResult:
    if not eps > 0:
        raise DomainError("eps must be positive")
    errs = [float(e) for e in errs]
    frac = float(np.mean([e <= eps for e in errs]))
    return CheckResult(
        name="convergence",
        passed=frac >= min_fraction,
        tolerance={"eps": eps, "min_fraction": min_fraction},
        samples={"replicas": len(errs)},
        summary={"fraction": frac, "median_error": float(np.median(errs)), "max_error": float(np.max(errs))},
        detail=[{"replica": t.replica, "final_error": e} for t, e in zip(ens.traces, errs)],
        notes=[
            "strong convergence is tested; on the locally compact model spaces used here "
            "it witnesses the weak (Delta-) convergence of the iterates"
        ],
    )


def step_bound_check(ens: ReplicaEnsemble, tol: float = FLOAT_SLACK) -> CheckResult:
    viol = [t.step_violations(tol) for t in ens.traces]
    ratio = max(float(np.nanmax(t.step_len[:-1] / t.step_bound[:-1])) if t.iterations else 0.0 for t in ens.traces)
    return CheckResult(
        name="step_bound",
        passed=sum(viol) == 0,
        tolerance={"abs": tol},
        samples={"replicas": len(viol), "steps": sum(t.iterations for t in ens.traces)},
        summary={"violations": sum(viol), "max_ratio": ratio},
        detail=[{"replica": t.replica, "violations": v} for t, v in zip(ens.traces, viol)],
    )


def asymptotic_center_check(ens: ReplicaEnsemble, z, space: Space) -> CheckResult:
    """Informational: minimax centre of the stored second-half window per replica."""
    rows = []
    for t in ens.traces:
        N = t.iterations
        window = [x for n, x in sorted(t.iterates.items()) if n >= N // 2]
        if len(window) < 2:
            continue
        c, r = estimate_asymptotic_center(window, space)
        rows.append(
            {
                "replica": t.replica,
                "window": len(window),
                "radius": r,
                "center_to_ref": space.dist(c, z) if z is not None else float("nan"),
                "radius_at_ref": _minimax(space, window, z) if z is not None else float("nan"),
            }
        )
    return CheckResult(
        name="asymptotic_center",
        passed=True,
        tolerance={},
        samples={"replicas": len(rows)},
        summary={
            "median_center_to_ref": float(np.median([r["center_to_ref"] for r in rows])) if rows else float("nan"),
            "median_radius": float(np.median([r["radius"] for r in rows])) if rows else float("nan"),
        },
        detail=rows,
        notes=["informational finite-window surrogate; never fails"],
    )
