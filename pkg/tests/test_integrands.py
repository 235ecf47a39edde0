import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sppa.errors import DomainError, TagMismatchError
from sppa.geometry import Euclidean, Hyperboloid, Spider
from sppa.integrands import (
    Distance,
    ExternalOracle,
    FiniteSum,
    SquaredDistance,
    anchor_events,
    ball_generator,
    big_F,
    certify_prox,
    finite_events,
    growth_check,
    integrand_from_dict,
    integrand_to_dict,
    prox_inequality_residual,
    prox_objective,
    sample_event,
    single_anchor,
    uniform_events,
)

from conftest import SPACES
from oracles import argmin_1d, argmin_euclidean, spider_embed

FAMILIES = [SquaredDistance, Distance]


def _anchored(cls, space, rng, k=5, scale=2.0):
    anchors = [space.random_point(rng, scale) for _ in range(k)]
    w = rng.uniform(0.5, 2.0, size=k)
    kw = {"operating_radius": 2 * scale} if cls is SquaredDistance else {}
    return cls(space, anchor_events(anchors), weights=w, **kw)


# --- eval and prox examples


def test_eval_examples():
    E, S = Euclidean(2), Spider(3)
    a = np.zeros(2)
    assert single_anchor(SquaredDistance, E, a).eval(0, a) == 0.0
    assert single_anchor(Distance, E, a, weight=2.0).eval(0, np.array([3.0, 0])) == 6.0
    assert single_anchor(SquaredDistance, S, (2, 1.0)).eval(0, (1, 1.0)) == 2.0


@pytest.mark.parametrize(
    "cls,x,expected",
    [(SquaredDistance, [2.0, 0.0], [1.0, 0.0]), (Distance, [3.0, 0.0], [2.0, 0.0])],
)
def test_prox_examples_against_brute_force(cls, x, expected):
    E = Euclidean(2)
    g = single_anchor(cls, E, np.zeros(2))
    x = np.array(x)
    p = g.prox(1.0, 0, x)
    np.testing.assert_allclose(p, expected, atol=1e-12)
    best, _ = argmin_euclidean(lambda y: prox_objective(g, 1.0, 0, x, y), x, 4.0, np.random.default_rng(0))
    np.testing.assert_allclose(best, expected, atol=1e-3)


@pytest.mark.parametrize("cls", FAMILIES)
def test_prox_fixed_point_at_anchor(cls, space, rng):
    a = space.random_point(rng, 2.0)
    g = single_anchor(cls, space, a)
    assert space.dist(g.prox(0.7, 0, a), a) == 0.0


@pytest.mark.parametrize("cls", FAMILIES)
def test_spider_prox_matches_leg_search(cls):
    # brute force over every leg in the star embedding
    S = Spider(3)
    a, x = (2, 1.5), (1, 0.8)
    g = single_anchor(cls, S, a)
    h = (lambda d: 0.5 * d * d) if cls is SquaredDistance else (lambda d: d)
    best = None
    for leg in (1, 2, 3):
        def obj(r, leg=leg):
            y = (leg, r)
            dy = np.abs(spider_embed(y, 3) - spider_embed(a, 3)).sum()
            dx = np.abs(spider_embed(y, 3) - spider_embed(x, 3)).sum()
            return h(dy) + dx * dx / (2 * 0.6)
        r, v = argmin_1d(obj, 0.0, 4.0)
        if best is None or v < best[0]:
            best = (v, leg, r)
    p = g.prox(0.6, 0, x)
    assert S.dist(p, (best[1], best[2])) < 1e-6


def test_prox_rejects_nonpositive_lambda():
    g = single_anchor(Distance, Euclidean(1), np.zeros(1))
    for lam in (0.0, -1.0):
        with pytest.raises(DomainError):
            g.prox(lam, 0, np.ones(1))
        with pytest.raises(DomainError):
            prox_inequality_residual(g, lam, 0, np.ones(1), np.zeros(1))


def test_residual_examples(rng):
    E = Euclidean(3)
    a = E.random_point(rng, 1.0)
    g = single_anchor(SquaredDistance, E, a, operating_radius=5.0)
    x = E.random_point(rng, 3.0)
    p = g.prox(0.5, 0, x)
    assert prox_inequality_residual(g, 0.5, 0, x, p) == pytest.approx(-E.dist(x, p) ** 2 / 1.0)
    for _ in range(100):
        y = E.random_point(rng, 3.0)
        assert prox_inequality_residual(g, 0.5, 0, a, y) <= 1e-12


# --- properties over spaces and families


@pytest.mark.parametrize("cls", FAMILIES)
@pytest.mark.parametrize("name", sorted(SPACES))
@given(seed=st.integers(0, 2**32 - 1), log_lam=st.floats(-3, 1))
def test_prox_properties(cls, name, seed, log_lam):
    space = SPACES[name]
    rng = np.random.default_rng(seed)
    g = _anchored(cls, space, rng)
    lam = 10.0**log_lam
    e = g.events.sample(rng)
    x, y = space.random_point(rng, 3.0), space.random_point(rng, 3.0)
    assert prox_inequality_residual(g, lam, e, x, y) <= 1e-9
    px, py = g.prox(lam, e, x), g.prox(lam, e, y)
    assert space.dist(px, py) <= space.dist(x, y) + 1e-9
    # local optimality along geodesics towards random points
    base = prox_objective(g, lam, e, x, px)
    for _ in range(20):
        q = space.random_point(rng, 4.0)
        for t in (1e-4, 1e-2):
            assert prox_objective(g, lam, e, x, space.geodesic(px, q, t)) >= base - 1e-8
    # geodesic convexity of f(e, .)
    t = float(rng.random())
    assert g.eval(e, space.geodesic(x, y, t)) <= (1 - t) * g.eval(e, x) + t * g.eval(e, y) + 1e-9


def test_hyperboloid_prox_matches_ball_search():
    H = Hyperboloid(2)
    rng = np.random.default_rng(5)
    a, x = H.random_point(rng, 1.5), H.random_point(rng, 1.5)
    g = single_anchor(SquaredDistance, H, a, operating_radius=3.0)
    p = g.prox(0.8, 0, x)
    from oracles import from_ball, poincare

    obj = lambda u: prox_objective(g, 0.8, 0, x, from_ball(u)) if np.sum(u**2) < 0.99 else np.inf
    best, _ = argmin_euclidean(obj, poincare(x), 0.3, rng, iters=6000)
    assert H.dist(from_ball(best), p) < 1e-3


# --- growth


@pytest.mark.parametrize("name", sorted(SPACES))
def test_growth_check(name, rng):
    space = SPACES[name]
    d = _anchored(Distance, space, rng)
    assert growth_check(d, rng, 300, 10.0) <= 0.0
    s = _anchored(SquaredDistance, space, rng)
    assert growth_check(s, rng, 300, s.operating_radius) <= 1e-9
    with pytest.raises(DomainError):
        growth_check(s, rng, 10, 2 * s.operating_radius)


def test_growth_check_coincident_points_contribute_zero(rng):
    g = single_anchor(SquaredDistance, Euclidean(2), np.ones(2))
    # radius -> 0 puts x = y = p
    assert growth_check(g, rng, 20, 1e-300) == pytest.approx(0.0, abs=1e-300)


# --- events and F


def test_sampling():
    one = finite_events([1.0])
    rng = np.random.default_rng(0)
    assert all(sample_event(one, rng) == 0 for _ in range(20))
    es = finite_events([0.2, 0.5, 0.3])
    a = es.sample_many(np.random.default_rng(9), 50)
    b = es.sample_many(np.random.default_rng(9), 50)
    assert a == b
    counts = np.bincount(es.sample_many(np.random.default_rng(1), 100_000), minlength=3) / 100_000
    se = np.sqrt(es.probabilities * (1 - es.probabilities) / 100_000)
    assert np.all(np.abs(counts - es.probabilities) <= 4 * se)
    assert uniform_events(4).is_uniform and not es.is_uniform


@pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], []])
def test_bad_probabilities(probs):
    with pytest.raises(DomainError):
        finite_events(probs)


def test_big_F():
    E = Euclidean(2)
    a = np.array([1.0, 2.0])
    g = single_anchor(SquaredDistance, E, a)
    x = np.array([-1.0, 0.5])
    assert big_F(g, x) == (0.5 * E.dist(x, a) ** 2, 0.0)
    two = SquaredDistance(E, anchor_events([np.zeros(2), np.array([2.0, 0.0])]))
    assert big_F(two, np.zeros(2))[0] == pytest.approx(1.0)
    # Monte Carlo over a generator of the same two anchors
    from sppa.integrands import EventSpace

    rule = lambda r: ((np.zeros(2), 1.0) if r.random() < 0.5 else (np.array([2.0, 0.0]), 1.0))
    mc = SquaredDistance(E, EventSpace("generator", rule=rule), anchor_radius=2.0)
    est, se = big_F(mc, np.zeros(2), 10_000, np.random.default_rng(4))
    assert se > 0 and abs(est - 1.0) <= 3 * se
    with pytest.raises(DomainError):
        big_F(g, x, samples=0)


def test_ball_generator_events(rng):
    H = Hyperboloid(2)
    g = Distance(H, ball_generator(H, 1.5, 2.0))
    assert g.anchor_radius == pytest.approx(1.5)
    e = g.events.sample(rng)
    assert H.dist(H.base_point(), e[0]) <= 1.5 and g.growth(e) == 2.0


def test_finite_sum_matches_components(rng):
    E = Euclidean(2)
    anchors = [E.random_point(rng, 1.0) for _ in range(4)]
    comps = [single_anchor(SquaredDistance, E, a) for a in anchors]
    fs = FiniteSum(comps)
    same = SquaredDistance(E, anchor_events(anchors))
    x = E.random_point(rng, 2.0)
    assert fs.mean_value(x) == pytest.approx(same.mean_value(x), rel=1e-14)
    for k in range(4):
        np.testing.assert_array_equal(fs.prox(0.3, k, x), comps[k].prox(0.3, 0, x))
    with pytest.raises(DomainError):
        FiniteSum([comps[0], single_anchor(Distance, Spider(2), (1, 1.0))])


def test_tag_mismatch_on_anchor():
    with pytest.raises(TagMismatchError):
        SquaredDistance(Euclidean(2), anchor_events([(1, 1.0)]))


# --- external oracles


def _soft_threshold_oracle(shrink=1.0):
    E = Euclidean(1)
    es = finite_events([1.0])
    ev = lambda e, x: abs(float(x[0]))
    prox = lambda lam, e, x: np.sign(x) * np.maximum(np.abs(x) - shrink * lam, 0.0)
    return E, es, ev, prox


def test_external_oracle_certified():
    E, es, ev, prox = _soft_threshold_oracle()
    g = ExternalOracle(E, es, ev, prox, lambda e: 1.0)
    assert g.prox(1.0, 0, np.array([3.0]))[0] == 2.0
    rep = certify_prox(g, np.random.default_rng(0), 500, 3.0)
    assert rep["max_residual"] <= 1e-9 and rep["max_expansion"] <= 1e-9


def test_external_oracle_wrong_prox_rejected():
    E, es, ev, prox = _soft_threshold_oracle(shrink=3.0)  # over-shrinks: not the prox of |x|
    with pytest.raises(DomainError):
        ExternalOracle(E, es, ev, prox, lambda e: 1.0)


@pytest.mark.parametrize("layout", ["events", "sum", "generator"])
def test_serialisation_round_trip(layout, rng):
    S = Spider(3)
    if layout == "events":
        g = _anchored(SquaredDistance, S, rng)
    elif layout == "sum":
        g = FiniteSum([single_anchor(Distance, S, (k, 1.0), weight=k) for k in (1, 2, 3)], [0.2, 0.3, 0.5])
    else:
        g = SquaredDistance(S, ball_generator(S, 2.0), operating_radius=3.0)
    h = integrand_from_dict(integrand_to_dict(g))
    assert integrand_to_dict(h) == integrand_to_dict(g)
    if g.events.is_finite:
        x = S.random_point(rng, 2.0)
        assert h.mean_value(x) == g.mean_value(x)
