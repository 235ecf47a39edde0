"""Convex integrands ``f(e, x)`` with event distributions, growth data and exact prox maps.

Built-in families are anchored: each event ``e`` carries an anchor point
``a_e`` and a positive weight ``w_e``.

* :class:`SquaredDistance` -- ``f(e, x) = w_e / 2 * d(x, a_e)**2``
* :class:`Distance`        -- ``f(e, x) = w_e * d(x, a_e)``
* :class:`FiniteSum`       -- ``f(k, x) = f_k(x)`` over a finite index set
* :class:`ExternalOracle`  -- user supplied ``eval``/``prox`` rules, certified on registration

Both anchored families have closed-form proximal maps that move ``x`` along
the geodesic towards ``a_e``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .geometry import Space, parse_space

PROB_TOL = 1e-12


# ---------------------------------------------------------------------------
# event spaces


@dataclass(frozen=True, eq=False)
class EventSpace:
    """Distribution of events.

    ``finite``    events are indices ``0..size-1`` drawn with ``probabilities``.
    ``anchors``   like ``finite`` but every index owns an anchor point.
    ``generator`` events are ``(anchor, weight)`` pairs produced by ``rule(rng)``.
    """

    kind: str
    probabilities: np.ndarray | None = None
    anchors: tuple | None = None
    rule: Callable | None = None
    rule_spec: dict | None = None

    def __post_init__(self):
        if self.kind not in ("finite", "anchors", "generator"):
            raise DomainError(f"unknown event space kind {self.kind!r}")
        if self.kind == "generator":
            if self.rule is None:
                raise DomainError("generator event space needs a rule")
            return
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise DomainError("event probabilities must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise DomainError(f"event probabilities must be nonnegative and sum to 1 (sum={p.sum()!r})")
        object.__setattr__(self, "probabilities", p)
        if self.kind == "anchors" and (self.anchors is None or len(self.anchors) != p.size):
            raise DomainError("anchor event space needs one anchor per probability")

    @property
    def is_finite(self) -> bool:
        return self.kind != "generator"

    @property
    def size(self) -> int:
        if not self.is_finite:
            raise DomainError("generator event spaces have no finite size")
        return int(self.probabilities.size)

    @property
    def is_uniform(self) -> bool:
        return self.is_finite and bool(np.all(np.abs(self.probabilities - 1.0 / self.size) <= PROB_TOL))

    def sample(self, rng: np.random.Generator):
        if self.kind == "generator":
            return self.rule(rng)
        return int(rng.choice(self.size, p=self.probabilities))

    def sample_many(self, rng: np.random.Generator, n: int) -> list:
        if self.kind == "generator":
            return [self.rule(rng) for _ in range(n)]
        return rng.choice(self.size, size=n, p=self.probabilities).tolist()


def finite_events(probabilities: Sequence[float]) -> EventSpace:
    return EventSpace("finite", probabilities=np.asarray(probabilities, dtype=float))


def uniform_events(n: int) -> EventSpace:
    return finite_events(np.full(n, 1.0 / n))


def anchor_events(anchors: Sequence, probabilities: Sequence[float] | None = None) -> EventSpace:
    anchors = tuple(anchors)
    if probabilities is None:
        probabilities = np.full(len(anchors), 1.0 / len(anchors))
    p = np.asarray(probabilities, dtype=float)
    if p.sum() > 0:
        p = p / p.sum()
    return EventSpace("anchors", probabilities=p, anchors=anchors)


def ball_generator(space: Space, scale: float, weight: float = 1.0) -> EventSpace:
    """Events with anchors drawn by ``random_point(space, ., scale)`` and a fixed weight."""
    if not scale > 0 or not weight > 0:
        raise DomainError("ball generator needs positive scale and weight")

    def rule(rng):
        return (space.random_point(rng, scale), weight)

    return EventSpace("generator", rule=rule, rule_spec={"kind": "ball", "scale": scale, "weight": weight})


def sample_event(es: EventSpace, rng: np.random.Generator):
    return es.sample(rng)


# ---------------------------------------------------------------------------
# integrands


class Integrand:
    """Common interface.  Subclasses set ``space``, ``events`` and ``base_point``."""

    space: Space
    events: EventSpace
    base_point: object
    # radius around ``base_point`` on which the declared growth bound is certified;
    # ``None`` means the bound is global
    operating_radius: float | None = None

    def eval(self, e, x) -> float:
        raise NotImplementedError

    def prox(self, lam: float, e, x):
        raise NotImplementedError

    def growth(self, e) -> float:
        """``L(e)`` in ``f(e,x) - f(e,y) <= L(e) (1 + d(x,p)) d(x,y)``."""
        raise NotImplementedError

    def event_label(self, e) -> str:
        if isinstance(e, (int, np.integer)):
            return str(int(e))
        anchor, w = e
        return f"{self.space.encode(anchor)}|{w!r}"

    @property
    def family(self) -> str:
        return type(self).__name__

    def mean_value(self, x) -> float:
        """Exact ``F(x)`` for finite event spaces."""
        p = self.events.probabilities
        return float(sum(pk * self.eval(k, x) for k, pk in enumerate(p) if pk > 0))

    def _growth_moments(self) -> tuple[float, float]:
        if self.events.is_finite:
            L = np.array([self.growth(k) for k in range(self.events.size)])
            p = self.events.probabilities
            return float(p @ L), float(p @ L**2)
        rng = np.random.default_rng(0)
        L = np.array([self.growth(self.events.sample(rng)) for _ in range(10_000)])
        return float(L.mean()), float((L**2).mean())

    @property
    def mean_L(self) -> float:
        """``int L dmu`` (exact for finite events, Monte Carlo otherwise)."""
        if not hasattr(self, "_moments"):
            self._moments = self._growth_moments()
        return self._moments[0]

    @property
    def mean_L_sq(self) -> float:
        """``int L**2 dmu``."""
        if not hasattr(self, "_moments"):
            self._moments = self._growth_moments()
        return self._moments[1]

    def growth_values(self) -> np.ndarray:
        """``L(e)`` for every event of a finite event space."""
        return np.array([self.growth(k) for k in range(self.events.size)])


def _check_lam(lam):
    if not lam > 0:
        raise DomainError(f"prox parameter must be positive, got {lam}")


class _Anchored(Integrand):
    def __init__(
        self,
        space: Space,
        events: EventSpace,
        weights: Sequence[float] | float = 1.0,
        base_point=None,
        operating_radius: float | None = None,
        anchor_radius: float | None = None,
    ):
        if events.kind == "finite":
            raise DomainError("anchored integrands need an anchor or generator event space")
        self.space = space
        self.events = events
        self.base_point = space.base_point() if base_point is None else space.validate(base_point)
        if events.kind == "anchors":
            anchors = tuple(space.validate(a) for a in events.anchors)
            events = EventSpace("anchors", probabilities=events.probabilities, anchors=anchors)
            self.events = events
            w = np.broadcast_to(np.asarray(weights, dtype=float), (len(anchors),)).copy()
            if np.any(w <= 0):
                raise DomainError("anchor weights must be positive")
            self.weights = w
            self._stack = space.stack(anchors)
            ra = max(space.dist(a, self.base_point) for a in anchors)
        else:
            self.weights = None
            self._stack = None
            if anchor_radius is None:
                spec = events.rule_spec or {}
                if spec.get("kind") != "ball":
                    raise DomainError("generator events need a declared anchor_radius")
                anchor_radius = spec["scale"] + space.dist(space.base_point(), self.base_point)
            ra = float(anchor_radius)
        self.anchor_radius = ra
        self._setup_region(operating_radius)

    def _setup_region(self, operating_radius):
        pass

    def anchor_of(self, e):
        if isinstance(e, (int, np.integer)):
            return self.events.anchors[e]
        return e[0]

    def weight_of(self, e) -> float:
        if isinstance(e, (int, np.integer)):
            return float(self.weights[e])
        return float(e[1])

    def mean_value(self, x) -> float:
        if self._stack is None:
            raise DomainError("exact F needs a finite event space")
        if not hasattr(self, "_pw"):
            self._pw = self.events.probabilities * self.weights
        return float(self._pw @ self._pointwise_many(self.space, x, self._stack))


class SquaredDistance(_Anchored):
    """``f(e, x) = w_e / 2 * d(x, a_e)**2``; the Frechet mean objective."""

    def _setup_region(self, operating_radius):
        # default: the anchor ball, but never degenerate
        default = max(self.anchor_radius, 1.0)
        self.operating_radius = float(default if operating_radius is None else operating_radius)
        if not self.operating_radius > 0:
            raise DomainError("operating radius must be positive")
        self._factor = 1.0 + self.anchor_radius + self.operating_radius

    @staticmethod
    def _pointwise_many(space, x, stacked):
        return 0.5 * space.sq_dists_many(x, stacked)

    def eval(self, e, x) -> float:
        return 0.5 * self.weight_of(e) * self.space.dist(x, self.anchor_of(e)) ** 2

    def prox(self, lam, e, x):
        _check_lam(lam)
        lw = lam * self.weight_of(e)
        return self.space.geodesic(x, self.anchor_of(e), lw / (1.0 + lw))

    def growth(self, e) -> float:
        # squared distance has no global state-free bound; certified on the operating ball
        return self.weight_of(e) * self._factor


class Distance(_Anchored):
    """``f(e, x) = w_e * d(x, a_e)``; the geodesic median objective."""

    @staticmethod
    def _pointwise_many(space, x, stacked):
        return space.dists_many(x, stacked)

    def eval(self, e, x) -> float:
        return self.weight_of(e) * self.space.dist(x, self.anchor_of(e))

    def prox(self, lam, e, x):
        _check_lam(lam)
        a = self.anchor_of(e)
        d = self.space.dist(x, a)
        if d == 0.0:
            return x
        step = lam * self.weight_of(e)
        if step >= d:
            return a
        return self.space.geodesic(x, a, step / d)

    def growth(self, e) -> float:
        return self.weight_of(e)


class FiniteSum(Integrand):
    """``F = sum_k mu_k f_k`` with ``f(k, x) = f_k(x)``.

    Components must be deterministic integrands (single-event spaces) on a
    common space.
    """

    def __init__(self, components: Sequence[Integrand], probabilities: Sequence[float] | None = None, base_point=None):
        comps = list(components)
        if not comps:
            raise DomainError("finite sum needs at least one component")
        space = comps[0].space
        for c in comps:
            if c.space != space:
                raise DomainError("finite sum components live on different spaces")
            if not c.events.is_finite or c.events.size != 1:
                raise DomainError("finite sum components must be single-event integrands")
        self.components = comps
        self.space = space
        self.events = uniform_events(len(comps)) if probabilities is None else finite_events(probabilities)
        if self.events.size != len(comps):
            raise DomainError("one probability per component required")
        self.base_point = comps[0].base_point if base_point is None else space.validate(base_point)
        radii = [c.operating_radius for c in comps if c.operating_radius is not None]
        self.operating_radius = min(radii) if radii else None
        fams = {type(c) for c in comps}
        self._vector = None
        if len(fams) == 1 and issubclass(fams.pop(), _Anchored):
            self._vector = (
                space.stack([c.events.anchors[0] for c in comps]),
                np.array([c.weights[0] for c in comps]),
                comps[0]._pointwise_many,
            )

    def eval(self, e, x) -> float:
        return self.components[e].eval(0, x)

    def prox(self, lam, e, x):
        return self.components[e].prox(lam, 0, x)

    def growth(self, e) -> float:
        return self.components[e].growth(0)

    def mean_value(self, x) -> float:
        if self._vector is None:
            return super().mean_value(x)
        stack, w, pointwise_many = self._vector
        return float(self.events.probabilities @ (w * pointwise_many(self.space, x, stack)))


class ExternalOracle(Integrand):
    """User supplied integrand.

    ``eval_fn(e, x)``, ``prox_fn(lam, e, x)`` and ``growth_fn(e)`` follow the
    built-in signatures.  The prox rule is certified on construction by the
    prox inequality and nonexpansiveness checks; a failing rule raises
    :class:`DomainError`.
    """

    def __init__(
        self,
        space: Space,
        events: EventSpace,
        eval_fn: Callable,
        prox_fn: Callable,
        growth_fn: Callable,
        base_point=None,
        operating_radius: float | None = None,
        certify_pairs: int = 200,
        certify_scale: float = 2.0,
        seed: int = 0,
    ):
        self.space = space
        self.events = events
        self._eval, self._prox, self._growth = eval_fn, prox_fn, growth_fn
        self.base_point = space.base_point() if base_point is None else space.validate(base_point)
        self.operating_radius = operating_radius
        if certify_pairs:
            rep = certify_prox(self, np.random.default_rng(seed), certify_pairs, certify_scale)
            if rep["max_residual"] > 1e-9 or rep["max_expansion"] > 1e-9:
                raise DomainError(f"external prox rule failed certification: {rep}")

    def eval(self, e, x) -> float:
        return float(self._eval(e, x))

    def prox(self, lam, e, x):
        _check_lam(lam)
        return self.space.validate(self._prox(lam, e, x))

    def growth(self, e) -> float:
        return float(self._growth(e))


# ---------------------------------------------------------------------------
# estimates and checks


def big_F(g: Integrand, x, samples: int = 1000, rng: np.random.Generator | None = None) -> tuple[float, float]:
    """``F(x) = int f(e, x) dmu(e)`` with its standard error (0 for finite event spaces)."""
    if samples < 1:
        raise DomainError("big_F needs at least one sample")
    if g.events.is_finite:
        return g.mean_value(x), 0.0
    rng = np.random.default_rng() if rng is None else rng
    vals = np.array([g.eval(g.events.sample(rng), x) for _ in range(samples)])
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return float(vals.mean()), se


def prox_objective(g: Integrand, lam: float, e, x, y) -> float:
    return g.eval(e, y) + g.space.dist(x, y) ** 2 / (2.0 * lam)


def prox_inequality_residual(g: Integrand, lam: float, e, x, y) -> float:
    """``f(e, P) - f(e, y) - (d(x,y)**2 - d(P,y)**2) / (2 lam)`` with ``P = prox(lam, e, x)``.

    Nonpositive for a correct prox rule.
    """
    _check_lam(lam)
    p = g.prox(lam, e, x)
    d = g.space.dist
    return g.eval(e, p) - g.eval(e, y) - (d(x, y) ** 2 - d(p, y) ** 2) / (2.0 * lam)


def _point_near(space: Space, rng, center, radius: float):
    """Random point within ``radius`` of ``center``."""
    far = space.dist(space.base_point(), center) + radius
    q = space.random_point(rng, far + radius)
    dq = space.dist(center, q)
    if dq == 0.0:
        return center
    return space.geodesic(center, q, min(1.0, radius * float(rng.random()) / dq))


def growth_check(g: Integrand, rng: np.random.Generator, pairs: int, radius: float) -> float:
    """Largest sampled ``f(e,x) - f(e,y) - L(e)(1 + d(x,p)) d(x,y)`` with ``x, y`` near ``p``."""
    if g.operating_radius is not None and radius > g.operating_radius + 1e-12:
        raise DomainError(f"radius {radius} exceeds the certified operating radius {g.operating_radius}")
    p, d = g.base_point, g.space.dist
    worst = -math.inf
    for _ in range(pairs):
        e = g.events.sample(rng)
        x = _point_near(g.space, rng, p, radius)
        y = _point_near(g.space, rng, p, radius)
        v = g.eval(e, x) - g.eval(e, y) - g.growth(e) * (1.0 + d(x, p)) * d(x, y)
        worst = max(worst, v)
    return worst


def certify_prox(g: Integrand, rng: np.random.Generator, pairs: int, scale: float) -> dict:
    """Sample the prox inequality residual and the nonexpansiveness gap."""
    space = g.space
    max_res = max_exp = -math.inf
    for _ in range(pairs):
        lam = float(np.exp(rng.uniform(math.log(1e-3), math.log(10.0))))
        e = g.events.sample(rng)
        x, y = space.random_point(rng, scale), space.random_point(rng, scale)
        max_res = max(max_res, prox_inequality_residual(g, lam, e, x, y))
        gap = space.dist(g.prox(lam, e, x), g.prox(lam, e, y)) - space.dist(x, y)
        max_exp = max(max_exp, gap)
    return {"pairs": pairs, "max_residual": max_res, "max_expansion": max_exp}


# ---------------------------------------------------------------------------
# serialisation of built-in integrands (run manifests)

_FAMILIES = {"squared_distance": SquaredDistance, "distance": Distance}


def family_name(g: Integrand) -> str:
    for name, cls in _FAMILIES.items():
        if type(g) is cls:
            return name
    if isinstance(g, FiniteSum):
        return "finite_sum"
    raise ConfigError(f"{type(g).__name__} integrands cannot be serialised")


def integrand_to_dict(g: Integrand) -> dict:
    name = family_name(g)
    enc = g.space.encode
    out: dict = {"family": name, "space": str(g.space), "base_point": enc(g.base_point)}
    if name == "finite_sum":
        out["components"] = [integrand_to_dict(c) for c in g.components]
        out["probabilities"] = g.events.probabilities.tolist()
        return out
    if g.events.kind == "anchors":
        out["anchors"] = [enc(a) for a in g.events.anchors]
        out["probabilities"] = g.events.probabilities.tolist()
        out["weights"] = g.weights.tolist()
    else:
        if not g.events.rule_spec:
            raise ConfigError("custom generator rules cannot be serialised")
        out["generator"] = dict(g.events.rule_spec)
        out["anchor_radius"] = g.anchor_radius
    if isinstance(g, SquaredDistance):
        out["operating_radius"] = g.operating_radius
    return out


def integrand_from_dict(d: dict) -> Integrand:
    space = parse_space(d["space"])
    base = space.decode(d["base_point"])
    if d["family"] == "finite_sum":
        comps = [integrand_from_dict(c) for c in d["components"]]
        return FiniteSum(comps, d.get("probabilities"), base_point=base)
    cls = _FAMILIES.get(d["family"])
    if cls is None:
        raise ConfigError(f"unknown integrand family {d['family']!r}")
    kwargs = {"base_point": base}
    if cls is SquaredDistance:
        kwargs["operating_radius"] = d.get("operating_radius")
    if "generator" in d:
        gen = d["generator"]
        es = ball_generator(space, gen["scale"], gen.get("weight", 1.0))
        return cls(space, es, anchor_radius=d.get("anchor_radius"), **kwargs)
    es = anchor_events([space.decode(a) for a in d["anchors"]], d["probabilities"])
    return cls(space, es, weights=d["weights"], **kwargs)


def single_anchor(cls, space: Space, anchor, weight: float = 1.0, **kwargs) -> Integrand:
    """Deterministic integrand ``f(x) = w * (d or d**2/2)(x, anchor)``."""
    return cls(space, anchor_events([anchor]), weights=weight, **kwargs)
