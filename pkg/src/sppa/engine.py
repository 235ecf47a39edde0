"""Stochastic proximal point iteration, step schedules and replica ensembles.

One run computes ``x_{n+1} = prox_{lam_n}(xi_{n+1}, x_n)`` with i.i.d. events
``xi_{n+1}`` and records a :class:`RunTrace`.  Runs are pure functions of
their :class:`RunConfig`; the seed fixes both the event sequence and the
Monte Carlo streams used for ``F`` estimates.
"""

from __future__ import annotations

import logging
import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import Space
from .integrands import FiniteSum, Integrand

log = logging.getLogger(__name__)

THREADS_ENV = "SPPA_THREADS"

# ---------------------------------------------------------------------------
# step schedules


@dataclass(frozen=True)
class PowerSchedule:
    """``lam_n = c * (n + n0) ** -p``."""

    c: float = 1.0
    p: float = 0.75
    n0: float = 1.0

    def value(self, n: int) -> float:
        return self.c * (n + self.n0) ** (-self.p)

    def values(self, count: int) -> np.ndarray:
        return self.c * (np.arange(count, dtype=float) + self.n0) ** (-self.p)

    def to_dict(self) -> dict:
        return {"kind": "power", "c": self.c, "p": self.p, "n0": self.n0}


@dataclass(frozen=True)
class ExplicitSchedule:
    """A finite list of steps, optionally continued by a power-law tail rule."""

    prefix: tuple
    tail: PowerSchedule | None = None

    def value(self, n: int) -> float:
        if n < len(self.prefix):
            return float(self.prefix[n])
        if self.tail is None:
            raise DomainError(f"explicit schedule has no step {n} and no tail rule")
        return self.tail.value(n)

    def values(self, count: int) -> np.ndarray:
        k = min(count, len(self.prefix))
        head = np.asarray(self.prefix[:k], dtype=float)
        if count <= k:
            return head
        if self.tail is None:
            raise DomainError(f"explicit schedule has only {len(self.prefix)} steps and no tail rule")
        return np.concatenate([head, self.tail.values(count)[k:]])

    def to_dict(self) -> dict:
        return {
            "kind": "explicit",
            "prefix": list(self.prefix),
            "tail": None if self.tail is None else self.tail.to_dict(),
        }


DEFAULT_SCHEDULE = PowerSchedule(1.0, 0.75, 1.0)


def schedule_from_dict(d: dict):
    if d["kind"] == "power":
        return PowerSchedule(d["c"], d["p"], d["n0"])
    tail = None if d.get("tail") is None else schedule_from_dict(d["tail"])
    return ExplicitSchedule(tuple(d["prefix"]), tail)


@dataclass(frozen=True)
class ScheduleVerdict:
    accepted: bool
    reason: str

    def __bool__(self):
        return self.accepted


RM_CONDITION = "Robbins-Monro step condition (sum lam_n = inf, sum lam_n^2 < inf)"


def validate_schedule(s) -> ScheduleVerdict:
    """Decide the Robbins-Monro conditions analytically.

    Power laws qualify exactly for ``1/2 < p <= 1``.  Explicit lists qualify
    only through a tail rule; a finite prefix says nothing about the tail.
    """
    if isinstance(s, PowerSchedule):
        if not s.c > 0 or not s.n0 > 0:
            raise DomainError(f"power schedule needs c > 0 and n0 > 0, got c={s.c}, n0={s.n0}")
        if s.p <= 0:
            return ScheduleVerdict(False, f"{RM_CONDITION} fails: non-decaying schedule (p={s.p}) has divergent squared sum")
        if s.p <= 0.5:
            return ScheduleVerdict(False, f"{RM_CONDITION} fails: squared steps not summable for p={s.p} <= 1/2")
        if s.p > 1:
            return ScheduleVerdict(False, f"{RM_CONDITION} fails: steps summable for p={s.p} > 1")
        return ScheduleVerdict(True, f"power law with 1/2 < p={s.p} <= 1 satisfies the {RM_CONDITION}")
    if isinstance(s, ExplicitSchedule):
        if any(not v > 0 for v in s.prefix):
            raise DomainError("explicit schedule steps must be positive")
        if s.tail is None:
            return ScheduleVerdict(False, "undecidable from finite prefix")
        v = validate_schedule(s.tail)
        return ScheduleVerdict(v.accepted, f"tail rule: {v.reason}")
    raise DomainError(f"unknown schedule type {type(s).__name__}")


def partial_sums(s, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Running sums of ``lam_n`` and ``lam_n**2`` for ``n < count``."""
    lam = s.values(count)
    return np.cumsum(lam), np.cumsum(lam * lam)


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunConfig:
    space: Space
    integrand: Integrand
    x0: object
    schedule: object = DEFAULT_SCHEDULE
    iterations: int = 1000
    seed: int = 0
    trace_stride: int = 100
    reference: object = None
    big_F_samples: int = 1000

    def validated(self) -> "RunConfig":
        if self.integrand.space != self.space:
            raise ConfigError(f"integrand lives on {self.integrand.space}, run space is {self.space}")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be positive")
        if self.big_F_samples < 1:
            raise ConfigError("big_F_samples must be positive")
        verdict = validate_schedule(self.schedule)
        if not verdict:
            raise ConfigError(f"step schedule rejected: {verdict.reason}")
        x0 = self.space.validate(self.x0)
        z = None if self.reference is None else self.space.validate(self.reference)
        R = self.integrand.operating_radius
        if R is not None:
            r0 = self.space.dist(x0, self.integrand.base_point)
            if r0 > R + 1e-12:
                raise ConfigError(f"x0 lies at distance {r0} from the base point, outside the operating radius {R}")
        return replace(self, x0=x0, reference=z)


@dataclass
class RunTrace:
    """Per-iteration record.  Row ``n`` describes the step from ``x_n`` to ``x_{n+1}``.

    The last row (``n = N``) carries only ``x_N`` quantities; its step fields are NaN
    and its event is -1.
    """

    n: np.ndarray
    lam: np.ndarray
    events: list
    alpha: np.ndarray  # L(xi_{n+1})
    step_len: np.ndarray
    step_bound: np.ndarray
    dist_ref: np.ndarray
    dist_base: np.ndarray
    F_hat: np.ndarray
    F_se: np.ndarray
    iterates: dict = field(default_factory=dict)
    final: object = None
    seed: int = 0
    replica: int = 0

    @property
    def iterations(self) -> int:
        return len(self.n) - 1

    def step_violations(self, tol: float = 1e-9) -> int:
        s, b = self.step_len[:-1], self.step_bound[:-1]
        return int(np.sum(s > b + tol))


def _fresh_F(g: Integrand, samples: int, rng):
    from .integrands import big_F

    if g.events.is_finite:
        return lambda x: (g.mean_value(x), 0.0)
    return lambda x: big_F(g, x, samples, rng)


def run_sppa(cfg: RunConfig, replica: int = 0) -> RunTrace:
    cfg = cfg.validated()
    g, space = cfg.integrand, cfg.space
    N = cfg.iterations
    ss = np.random.SeedSequence(cfg.seed)
    event_rng = np.random.default_rng(ss)
    mc_rng = np.random.default_rng(ss.spawn(1)[0])

    lam = cfg.schedule.values(N + 1)
    events = g.events.sample_many(event_rng, N)
    finite = g.events.is_finite
    Lvals = g.growth_values() if finite else None
    F_stride = 1 if finite else cfg.trace_stride
    Fx = _fresh_F(g, cfg.big_F_samples, mc_rng)

    dist, prox, p, z = space.dist, g.prox, g.base_point, cfg.reference
    step_len = np.full(N + 1, np.nan)
    step_bound = np.full(N + 1, np.nan)
    alpha = np.full(N + 1, np.nan)
    dist_ref = np.full(N + 1, np.nan)
    dist_base = np.empty(N + 1)
    F_hat = np.full(N + 1, np.nan)
    F_se = np.full(N + 1, np.nan)
    iterates = {}

    x = cfg.x0
    db = dist(x, p)
    for n in range(N):
        e = events[n]
        lam_n = lam[n]
        dist_base[n] = db
        if z is not None:
            dist_ref[n] = dist(x, z)
        if n % F_stride == 0:
            F_hat[n], F_se[n] = Fx(x)
        if n % cfg.trace_stride == 0:
            iterates[n] = x
        x1 = prox(lam_n, e, x)
        L = Lvals[e] if finite else g.growth(e)
        alpha[n] = L
        step_len[n] = dist(x, x1)
        step_bound[n] = 2.0 * lam_n * L * (1.0 + db)
        x = x1
        db = dist(x, p)

    dist_base[N] = db
    if z is not None:
        dist_ref[N] = dist(x, z)
    F_hat[N], F_se[N] = Fx(x)
    iterates[N] = x
    labels = (events + [-1]) if finite else [g.event_label(e) for e in events] + [""]
    return RunTrace(
        n=np.arange(N + 1),
        lam=lam,
        events=labels,
        alpha=alpha,
        step_len=step_len,
        step_bound=step_bound,
        dist_ref=dist_ref,
        dist_base=dist_base,
        F_hat=F_hat,
        F_se=F_se,
        iterates=iterates,
        final=x,
        seed=cfg.seed,
        replica=replica,
    )


def run_splitting(cfg: RunConfig, replica: int = 0) -> RunTrace:
    """Random-order splitting: component indices drawn uniformly and independently."""
    g = cfg.integrand
    if not isinstance(g, FiniteSum):
        raise ConfigError("splitting needs a finite-sum integrand")
    if not g.events.is_uniform:
        raise ConfigError("splitting needs uniform component probabilities")
    return run_sppa(cfg, replica)


# ---------------------------------------------------------------------------
# ensembles


def derive_seeds(master: int, replicas: int) -> list[int]:
    """Replica seeds: replica 0 keeps the master seed, replica r >= 1 uses the
    first 64-bit word of ``SeedSequence(master, spawn_key=(r,))``."""
    seeds = [int(master)]
    for r in range(1, replicas):
        state = np.random.SeedSequence(int(master), spawn_key=(r,)).generate_state(1, dtype=np.uint64)
        seeds.append(int(state[0]))
    if len(set(seeds)) != len(seeds):
        raise ConfigError("derived replica seeds collide; choose another master seed")
    return seeds


@dataclass
class ReplicaEnsemble:
    traces: list
    seeds: list

    def __len__(self):
        return len(self.traces)

    def finals(self) -> list:
        return [t.final for t in self.traces]

    def prefix(self, k: int) -> "ReplicaEnsemble":
        return ReplicaEnsemble(self.traces[:k], self.seeds[:k])


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # non-Linux
        return os.cpu_count() or 1


def _run_one(args):
    cfg, r, splitting = args
    return (run_splitting if splitting else run_sppa)(cfg, r)


def run_ensemble(cfg: RunConfig, replicas: int, splitting: bool = False, workers: int | None = None) -> ReplicaEnsemble:
    """``replicas`` independent runs; the result does not depend on execution order."""
    if replicas < 1:
        raise ConfigError("an ensemble needs at least one replica")
    seeds = derive_seeds(cfg.seed, replicas)
    jobs = [(replace(cfg, seed=s), r, splitting) for r, s in enumerate(seeds)]
    workers = default_workers() if workers is None else workers
    traces = None
    if workers > 1 and replicas > 1:
        try:
            with ProcessPoolExecutor(max_workers=min(workers, replicas)) as ex:
                traces = list(ex.map(_run_one, jobs))
        except (AttributeError, TypeError, pickle.PicklingError) as exc:  # unpicklable oracle rules
            log.warning("parallel ensemble unavailable (%s); running sequentially", exc)
    if traces is None:
        traces = [_run_one(j) for j in jobs]
    return ReplicaEnsemble(traces, seeds)
