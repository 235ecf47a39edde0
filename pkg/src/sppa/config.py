"""Flat ``key = value`` experiment configuration.

Lines are ``dotted.key = value``; ``#`` starts a comment.  Unknown keys are
rejected.  Relative file paths are resolved against the config file's
directory.  See :data:`KEYS` for the full list with defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baseline import METHODS
from .engine import PowerSchedule, RunConfig
from .errors import ConfigError, SPPAError
from .geometry import Space, parse_space, read_points
from .integrands import Distance, FiniteSum, SquaredDistance, anchor_events, single_anchor

FAMILIES = {"squared-distance": SquaredDistance, "distance": Distance}
CHECKS = (
    "step_bound",
    "convergence",
    "quasi_fejer",
    "quasi_fejer_exact",
    "summability",
    "boundedness",
    "lipschitz_sum",
    "asymptotic_center",
)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(s: str) -> list:
    return [t.strip() for t in s.split(",") if t.strip()]


def _floats(s: str) -> list:
    return [float(t) for t in _list(s)]


# key -> (parser, default); default None means optional/unset
KEYS = {
    "run.space": (str, None),
    "run.mode": (str, "sppa"),
    "run.x0": (str, None),
    "run.schedule.c": (float, 1.0),
    "run.schedule.p": (float, 0.75),
    "run.schedule.n0": (float, 1.0),
    "run.iterations": (int, 1000),
    "run.seed": (int, 0),
    "run.trace_stride": (int, 100),
    "run.big_F_samples": (int, 1000),
    "run.replicas": (int, 1),
    "run.reference": (str, None),
    "integrand.family": (str, "squared-distance"),
    "integrand.layout": (str, "events"),
    "integrand.anchors": (str, None),
    "integrand.anchor_file": (str, None),
    "integrand.weight": (float, 1.0),
    "integrand.base_point": (str, None),
    "integrand.operating_radius": (float, None),
    "baseline.kind": (str, "none"),
    "diagnostics.checks": (_list, []),
    "diagnostics.mc_samples": (int, 10_000),
    "diagnostics.states": (int, 200),
    "diagnostics.levels": (_floats, [0.1, 0.5]),
    "diagnostics.eps": (str, "auto"),
    "diagnostics.min_fraction": (float, 0.9),
    "diagnostics.seed": (int, 0),
    "output.dir": (str, "sppa-out"),
    "simulate.N": (int, 40_000),
    "simulate.replicas": (int, 50),
    "simulate.seed": (int, 0),
    "simulate.schedule.c": (float, 1.0),
    "simulate.schedule.p": (float, 1.0),
    "simulate.schedule.n0": (float, 1.0),
    "simulate.alpha": (str, "uniform"),
    "simulate.alpha.a": (float, 0.0),
    "simulate.alpha.b": (float, 2.0),
    "simulate.theta": (float, 1.0),
    "simulate.gamma": (float, 1.0),
    "simulate.beta": (str, "decay"),
    "simulate.beta.kappa": (float, 2.0),
    "simulate.beta.rho": (float, 0.5),
    "simulate.beta.q": (float, 0.25),
    "simulate.beta0": (float, 1.0),
    "simulate.admissible": (_bool, True),
    "simulate.adversarial": (_bool, False),
}


@dataclass
class ExperimentConfig:
    values: dict
    base_dir: Path = field(default_factory=Path.cwd)
    explicit: frozenset = frozenset()

    def __getitem__(self, key: str):
        return self.values[key]

    def path(self, key: str) -> Path | None:
        v = self.values[key]
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    values = {k: d for k, (_, d) in KEYS.items()}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
        seen.add(key)
    cfg = ExperimentConfig(values, base_dir or Path.cwd(), frozenset(seen))
    _check_consistency(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.resolve().parent)


def _check_consistency(cfg: ExperimentConfig) -> None:
    v = cfg.values
    if v["run.mode"] not in ("sppa", "splitting"):
        raise ConfigError(f"run.mode must be sppa or splitting, got {v['run.mode']!r}")
    if v["integrand.family"] not in FAMILIES:
        raise ConfigError(f"integrand.family must be one of {sorted(FAMILIES)}")
    if v["integrand.layout"] not in ("events", "sum"):
        raise ConfigError("integrand.layout must be events or sum")
    if v["run.mode"] == "splitting" and v["integrand.layout"] != "sum":
        raise ConfigError("splitting requires integrand.layout = sum (a finite-sum integrand)")
    if v["baseline.kind"] not in ("none", "auto") + METHODS:
        raise ConfigError(f"unknown baseline.kind {v['baseline.kind']!r}")
    bad = [c for c in v["diagnostics.checks"] if c not in CHECKS]
    if bad:
        raise ConfigError(f"unknown diagnostics checks {bad}; known: {', '.join(CHECKS)}")
    if v["run.replicas"] < 1:
        raise ConfigError("run.replicas must be at least 1")
    if v["integrand.anchors"] and v["integrand.anchor_file"]:
        raise ConfigError("give integrand.anchors or integrand.anchor_file, not both")
    f = cfg.path("integrand.anchor_file")
    if f is not None and not f.is_file():
        raise ConfigError(f"anchor file {f} does not exist")
    if v["diagnostics.eps"] != "auto":
        try:
            float(v["diagnostics.eps"])
        except ValueError:
            raise ConfigError("diagnostics.eps must be 'auto' or a number") from None
    ref = v["run.reference"]
    if ref == "baseline" and v["baseline.kind"] == "none":
        raise ConfigError("run.reference = baseline needs baseline.kind")


def needs_run_section(cfg: ExperimentConfig) -> None:
    if cfg["run.space"] is None:
        raise ConfigError("run.space is required")
    if not (cfg["integrand.anchors"] or cfg["integrand.anchor_file"]):
        raise ConfigError("integrand.anchors or integrand.anchor_file is required")


def build_space(cfg: ExperimentConfig) -> Space:
    needs_run_section(cfg)
    try:
        return parse_space(cfg["run.space"])
    except SPPAError as exc:
        raise ConfigError(str(exc)) from None


def build_integrand(cfg: ExperimentConfig, space: Space, x0=None):
    cls = FAMILIES[cfg["integrand.family"]]
    try:
        if cfg["integrand.anchor_file"]:
            anchors, probs = read_points(space, cfg.path("integrand.anchor_file"))
        else:
            anchors = [space.decode(t.strip()) for t in cfg["integrand.anchors"].split("|")]
            probs = None
        base = None if cfg["integrand.base_point"] is None else space.decode(cfg["integrand.base_point"])
        p = space.base_point() if base is None else base
        R = cfg["integrand.operating_radius"]
        if R is None and cls is SquaredDistance:
            # geodesic balls are convex, so iterates stay within max(d(x0, p), max d(a, p))
            r0 = 0.0 if x0 is None else space.dist(x0, p)
            R = max([r0] + [space.dist(a, p) for a in anchors])
            R = R if R > 0 else 1.0
        kw = {"base_point": base}
        if cls is SquaredDistance:
            kw["operating_radius"] = R
        w = cfg["integrand.weight"]
        if cfg["integrand.layout"] == "sum":
            comps = [single_anchor(cls, space, a, w, **kw) for a in anchors]
            return FiniteSum(comps, probs, base_point=base)
        return cls(space, anchor_events(anchors, probs), weights=w, **kw)
    except SPPAError as exc:
        raise ConfigError(f"integrand: {exc}") from None


def build_run_config(cfg: ExperimentConfig, reference=None) -> RunConfig:
    """RunConfig from the ``run.*`` and ``integrand.*`` sections.

    ``reference`` overrides ``run.reference`` (used to inject a baseline argmin).
    """
    space = build_space(cfg)
    try:
        x0 = space.base_point() if cfg["run.x0"] is None else space.decode(cfg["run.x0"])
        ref = reference
        if ref is None and cfg["run.reference"] not in (None, "baseline", "none"):
            ref = space.decode(cfg["run.reference"])
    except SPPAError as exc:
        raise ConfigError(f"run: {exc}") from None
    g = build_integrand(cfg, space, x0)
    sched = PowerSchedule(cfg["run.schedule.c"], cfg["run.schedule.p"], cfg["run.schedule.n0"])
    rc = RunConfig(
        space=space,
        integrand=g,
        x0=x0,
        schedule=sched,
        iterations=cfg["run.iterations"],
        seed=cfg["run.seed"],
        trace_stride=cfg["run.trace_stride"],
        reference=ref,
        big_F_samples=cfg["run.big_F_samples"],
    )
    try:
        return rc.validated()
    except SPPAError as exc:
        raise ConfigError(str(exc)) from None


def eps_value(cfg: ExperimentConfig):
    e = cfg["diagnostics.eps"]
    return None if e == "auto" else float(e)


def levels_array(cfg: ExperimentConfig) -> np.ndarray:
    return np.asarray(cfg["diagnostics.levels"], dtype=float)
