"""Deterministic reference minimisers for the built-in problems.

These supply ``argmin F`` and ``min F`` to the convergence and summability
checks.  ``min_value`` is ``F = sum_e mu_e f(e, .)`` at the argmin; ``min_sum``
is the unnormalised ``sum_e f(e, .)`` over a finite event space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedProblemError
from .geometry import SPIDER_ORIGIN, Euclidean, Hyperboloid, Space, Spider, SpiderPoint
from .integrands import Distance, FiniteSum, Integrand, SquaredDistance, _Anchored

PROX_TOL = 1e-10
GRID_TOL = 1e-6
METHODS = ("closed-form", "exhaustive-search", "deterministic-proximal")


@dataclass
class BaselineResult:
    argmin: object
    min_value: float
    min_sum: float
    method: str
    accuracy: float
    argmin_set: list = field(default_factory=list)
    iterations: int = 0


def _weighted_anchors(g: Integrand):
    """``(family, anchors, c)`` with ``F(x) = sum_i c_i h(d(x, a_i))``."""
    if isinstance(g, _Anchored):
        if g.events.kind != "anchors":
            raise UnsupportedProblemError("baselines need a finite anchor set, not a generator")
        return type(g), list(g.events.anchors), g.events.probabilities * g.weights
    if isinstance(g, FiniteSum):
        fams = {type(c) for c in g.components}
        if len(fams) != 1 or not issubclass(next(iter(fams)), _Anchored):
            raise UnsupportedProblemError("baselines need a finite sum of one anchored family")
        anchors = [c.events.anchors[0] for c in g.components]
        w = np.array([c.weights[0] for c in g.components])
        return fams.pop(), anchors, g.events.probabilities * w
    raise UnsupportedProblemError(f"no baseline for {type(g).__name__}")


def _result(g: Integrand, x, method: str, accuracy: float, argmin_set=None, iterations: int = 0) -> BaselineResult:
    total = sum(g.eval(e, x) for e in range(g.events.size))
    return BaselineResult(
        argmin=x,
        min_value=g.mean_value(x),
        min_sum=float(total),
        method=method,
        accuracy=accuracy,
        argmin_set=argmin_set or [x],
        iterations=iterations,
    )


def compute_baseline(g: Integrand, method: str | None = None) -> BaselineResult:
    """Reference minimiser of ``F``.

    ``method`` forces a route (useful for cross-checking); by default the
    cheapest exact route for the space and family is taken.
    """
    if method is not None and method not in METHODS:
        raise UnsupportedProblemError(f"unknown baseline method {method!r}")
    fam, anchors, c = _weighted_anchors(g)
    space = g.space
    if len(anchors) == 1 and method in (None, "closed-form"):
        return _result(g, anchors[0], "closed-form", 0.0)
    if isinstance(space, Spider) and method in (None, "exhaustive-search"):
        x, xs = spider_search(space, anchors, c, fam)
        return _result(g, x, "exhaustive-search", GRID_TOL, xs)
    if fam is SquaredDistance:
        if isinstance(space, Euclidean) and method in (None, "closed-form"):
            A = np.stack(anchors)
            return _result(g, (c @ A) / c.sum(), "closed-form", 0.0)
        if isinstance(space, (Euclidean, Hyperboloid)) and method in (None, "deterministic-proximal"):
            x, acc, it = proximal_frechet_mean(space, anchors, c)
            return _result(g, x, "deterministic-proximal", acc, iterations=it)
    raise UnsupportedProblemError(f"no {method or 'default'} baseline for {fam.__name__} on {space}")


# ---------------------------------------------------------------------------
# spider: one-dimensional search per leg


def _spider_objective(space: Spider, anchors, c, fam, leg: int, r: np.ndarray) -> np.ndarray:
    legs = np.array([a[0] for a in anchors])
    rads = np.array([a[1] for a in anchors])
    same = (legs == leg) | (legs == 0)
    d = np.where(same[None, :], np.abs(r[:, None] - rads[None, :]), r[:, None] + rads[None, :])
    h = 0.5 * d**2 if fam is SquaredDistance else d
    return h @ c


def spider_search(space: Spider, anchors, c, fam, tol: float = GRID_TOL):
    """Grid search on every leg with refinement down to ``tol``.

    Returns the minimiser and every leg's minimiser attaining the minimum.
    """
    c = np.asarray(c, dtype=float)
    r_max = max(a[1] for a in anchors) + 1.0
    best = []
    for leg in range(1, space.legs + 1):
        lo, hi, step = 0.0, r_max, r_max / 1000
        while True:
            r = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
            v = _spider_objective(space, anchors, c, fam, leg, r)
            k = int(np.argmin(v))
            if step <= tol / 10:
                break
            lo, hi = max(0.0, r[k] - 2 * step), min(r_max, r[k] + 2 * step)
            step /= 20
        best.append((float(v[k]), leg, float(r[k])))
    vmin = min(b[0] for b in best)
    pts = []
    for v, leg, r in sorted(best):
        if v <= vmin + 1e-12 * (1.0 + abs(vmin)):
            p = SPIDER_ORIGIN if r <= tol else SpiderPoint(leg, r)
            if p not in pts:
                pts.append(p)
    return pts[0], pts


# ---------------------------------------------------------------------------
# deterministic proximal point iteration


def weighted_karcher_mean(space: Space, points, weights, start, tol: float = 1e-14, max_iter: int = 1000):
    """Weighted Frechet mean by the Riemannian gradient flow with unit step."""
    w = np.asarray(weights, dtype=float) / float(np.sum(weights))
    y = start
    for _ in range(max_iter):
        v = sum(wi * space.log(y, q) for wi, q in zip(w, points))
        y_next = space.exp(y, v)
        moved = space.dist(y, y_next)
        y = y_next
        if moved < tol:
            break
    return y


def proximal_frechet_mean(space: Space, anchors, c, lam: float = 1.0, tol: float = PROX_TOL, max_iter: int = 10_000):
    """``x_{k+1} = prox_{lam F}(x_k)`` from the first anchor.

    ``F`` is ``sum(c)``-strongly convex, so the resolvent contracts by
    ``q = 1 / (1 + lam * sum(c))`` and the last move ``delta`` bounds the
    error by ``delta / (lam * sum(c))``.  Returns ``(x, accuracy, iterations)``.
    """
    c = np.asarray(c, dtype=float)
    x = anchors[0]
    pts = list(anchors)
    for k in range(1, max_iter + 1):
        x_next = weighted_karcher_mean(space, pts + [x], np.append(c, 1.0 / lam), x)
        delta = space.dist(x, x_next)
        x = x_next
        if delta < tol:
            break
    return x, max(tol, delta / (lam * c.sum())), k


def calibrated_eps(min_value: float, final_step: float, accuracy: float, factor: float = 3.0) -> float:
    """Noise floor of SPPA on a squared-distance objective.

    At stationarity ``E d(x_n, x*)**2 ~ lam_n * min F`` (each step pulls a
    ``lam_n`` fraction towards a random anchor whose mean squared spread
    around ``x*`` is ``2 min F``), so ``factor`` noise-floor radii plus the
    baseline accuracy bound the final error of most replicas.
    """
    return factor * math.sqrt(final_step * max(min_value, 0.0)) + accuracy
