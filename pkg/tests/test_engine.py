import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sppa.engine import (
    DEFAULT_SCHEDULE,
    ExplicitSchedule,
    PowerSchedule,
    RunConfig,
    derive_seeds,
    partial_sums,
    run_ensemble,
    run_splitting,
    run_sppa,
    schedule_from_dict,
    validate_schedule,
)
from sppa.errors import ConfigError, DomainError
from sppa.geometry import Euclidean, Spider
from sppa.integrands import Distance, FiniteSum, SquaredDistance, anchor_events, ball_generator, finite_events, single_anchor

from conftest import SPACES

HARMONIC = PowerSchedule(1.0, 1.0, 1.0)


def _decay_cfg(N, **kw):
    E = Euclidean(2)
    g = single_anchor(SquaredDistance, E, np.zeros(2), operating_radius=2.0)
    return RunConfig(E, g, np.array([2.0, 0.0]), HARMONIC, iterations=N, **kw)


# --- schedules


@pytest.mark.parametrize(
    "p,accepted",
    [(1.0, True), (0.75, True), (0.51, True), (0.5, False), (0.3, False), (1.2, False), (0.0, False), (-1.0, False)],
)
def test_power_schedule_table(p, accepted):
    v = validate_schedule(PowerSchedule(1.0, p, 1.0))
    assert bool(v) is accepted
    if not accepted:
        assert "Robbins-Monro" in v.reason


@pytest.mark.parametrize("c,n0", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_power_schedule_domain(c, n0):
    with pytest.raises(DomainError):
        validate_schedule(PowerSchedule(c, 0.75, n0))


def test_explicit_schedules():
    v = validate_schedule(ExplicitSchedule((1.0, 0.5, 0.25)))
    assert not v and v.reason == "undecidable from finite prefix"
    assert validate_schedule(ExplicitSchedule((1.0, 0.5), HARMONIC))
    assert not validate_schedule(ExplicitSchedule((1.0,), PowerSchedule(1, 2.0, 1)))
    with pytest.raises(DomainError):
        validate_schedule(ExplicitSchedule((1.0, 0.0), HARMONIC))
    s = ExplicitSchedule((0.3, 0.2), HARMONIC)
    np.testing.assert_allclose(s.values(4), [0.3, 0.2, 1 / 3, 1 / 4])
    assert schedule_from_dict(s.to_dict()) == s
    with pytest.raises(DomainError):
        ExplicitSchedule((1.0,)).values(3)


@given(p=st.floats(0.51, 1.0), c=st.floats(0.1, 5.0))
def test_partial_sums_behaviour(p, c):
    s = PowerSchedule(c, p, 1.0)
    S1, S2 = partial_sums(s, 20_000)
    assert np.all(np.diff(S1) > 0)
    # squared sums: tail increments over doubling windows shrink
    inc = [S2[2 * k - 1] - S2[k - 1] for k in (2500, 5000, 10_000)]
    assert inc[0] > inc[1] > inc[2]
    # plain sums: doubling increments ~ k^(1-p) never shrink, so the sum is unbounded
    grow = [S1[2 * k - 1] - S1[k - 1] for k in (2500, 5000, 10_000)]
    assert grow[2] >= grow[0] * (1 - 1e-3)


# --- single runs


def test_decay_oracle():
    t = run_sppa(_decay_cfg(9, reference=np.zeros(2)))
    assert abs(t.dist_ref[-1] - 0.2) <= 1e-10
    t = run_sppa(_decay_cfg(1000, reference=np.zeros(2)))
    n = np.arange(1001)
    np.testing.assert_allclose(t.dist_ref, 2.0 / (n + 1), atol=1e-12)


def test_zero_iterations_holds_only_x0():
    t = run_sppa(_decay_cfg(0))
    assert t.iterations == 0 and len(t.n) == 1
    np.testing.assert_array_equal(t.final, [2.0, 0.0])
    assert list(t.iterates) == [0]


def test_trace_shape_and_stride():
    t = run_sppa(_decay_cfg(250, trace_stride=100))
    assert len(t.n) == 251 and sorted(t.iterates) == [0, 100, 200, 250]
    assert np.isnan(t.step_len[-1]) and t.events[-1] == -1
    assert t.step_violations() == 0


def test_determinism_and_seed_sensitivity(rng):
    E = Euclidean(3)
    g = SquaredDistance(E, anchor_events([E.random_point(rng, 1.0) for _ in range(10)]), operating_radius=2.0)
    cfg = RunConfig(E, g, np.zeros(3), iterations=300, seed=5)
    a, b = run_sppa(cfg), run_sppa(cfg)
    assert a.events == b.events
    np.testing.assert_array_equal(a.step_len, b.step_len)
    np.testing.assert_array_equal(a.final, b.final)
    c = run_sppa(RunConfig(E, g, np.zeros(3), iterations=300, seed=6))
    assert c.events != a.events


def test_monte_carlo_events_run():
    S = Spider(3)
    g = Distance(S, ball_generator(S, 1.0))
    t = run_sppa(RunConfig(S, g, (1, 0.5), iterations=200, trace_stride=50, big_F_samples=200))
    assert np.isfinite(t.F_hat[[0, 50, 100, 150, 200]]).all()
    assert np.isnan(t.F_hat[1])
    assert t.step_violations() == 0


@pytest.mark.parametrize(
    "mutate,msg",
    [
        (dict(schedule=PowerSchedule(1, 0.5, 1)), "Robbins-Monro"),
        (dict(iterations=-1), "iterations"),
        (dict(trace_stride=0), "trace_stride"),
        (dict(x0=np.array([5.0, 0.0])), "operating radius"),
        (dict(space=Euclidean(3)), "integrand lives on"),
    ],
)
def test_run_config_errors(mutate, msg):
    from dataclasses import replace

    with pytest.raises(ConfigError, match=msg):
        run_sppa(replace(_decay_cfg(5), **mutate))


@pytest.mark.parametrize("cls", [SquaredDistance, Distance])
@pytest.mark.parametrize("name", sorted(SPACES))
def test_step_bound_holds(cls, name):
    space = SPACES[name]
    rng = np.random.default_rng(3)
    anchors = [space.random_point(rng, 1.5) for _ in range(6)]
    kw = {"operating_radius": 3.0} if cls is SquaredDistance else {}
    g = cls(space, anchor_events(anchors), weights=rng.uniform(0.5, 2, 6), **kw)
    x0 = space.random_point(rng, 2.5)
    t = run_sppa(RunConfig(space, g, x0, PowerSchedule(2.0, 0.6, 1.0), iterations=500, seed=1))
    assert t.step_violations(1e-9) == 0


# --- splitting and ensembles


def _spider_sum(probs=None):
    S = Spider(3)
    comps = [single_anchor(Distance, S, (k, 1.0)) for k in (1, 2, 3)]
    return S, FiniteSum(comps, probs)


def test_splitting_approaches_origin():
    S, f = _spider_sum()
    t = run_splitting(RunConfig(S, f, (1, 1.0), iterations=5000, seed=2, reference=(0, 0.0)))
    assert t.dist_ref[-1] < 0.05
    assert set(t.events[:-1]) == {0, 1, 2}


def test_splitting_requires_uniform_finite_sum():
    S, f = _spider_sum([0.2, 0.3, 0.5])
    with pytest.raises(ConfigError):
        run_splitting(RunConfig(S, f, (1, 1.0), iterations=5))
    g = Distance(S, anchor_events([(1, 1.0)]))
    with pytest.raises(ConfigError):
        run_splitting(RunConfig(S, g, (1, 1.0), iterations=5))


def test_single_component_splitting_equals_plain_run():
    S = Spider(2)
    comp = single_anchor(Distance, S, (2, 1.0))
    a = run_splitting(RunConfig(S, FiniteSum([comp]), (1, 2.0), iterations=50, seed=4))
    b = run_sppa(RunConfig(S, comp, (1, 2.0), iterations=50, seed=4))
    assert a.final == b.final
    np.testing.assert_array_equal(a.step_len, b.step_len)


def test_derived_seeds():
    s = derive_seeds(123, 50)
    assert s[0] == 123 and len(set(s)) == 50
    assert derive_seeds(123, 50) == s


def test_ensemble_contract(rng):
    E = Euclidean(2)
    g = SquaredDistance(E, anchor_events([E.random_point(rng, 1.0) for _ in range(5)]), operating_radius=1.0)
    cfg = RunConfig(E, g, np.zeros(2), iterations=200, seed=9)
    one = run_ensemble(cfg, 1, workers=1)
    np.testing.assert_array_equal(one.traces[0].final, run_sppa(cfg).final)
    seq = run_ensemble(cfg, 3, workers=1)
    par = run_ensemble(cfg, 3, workers=2)
    assert seq.traces[0].events != seq.traces[1].events
    for a, b in zip(seq.traces, par.traces):
        np.testing.assert_array_equal(a.step_len, b.step_len)
    assert [t.replica for t in par.traces] == [0, 1, 2]
    assert len(seq.prefix(2)) == 2
    with pytest.raises(ConfigError):
        run_ensemble(cfg, 0)


def test_ensemble_falls_back_for_unpicklable_rules():
    S = Spider(2)
    from sppa.integrands import EventSpace

    es = EventSpace("generator", rule=lambda r: ((1, float(r.random())), 1.0))
    g = Distance(S, es, anchor_radius=1.0)
    ens = run_ensemble(RunConfig(S, g, (1, 0.5), iterations=20, trace_stride=10, big_F_samples=10), 2, workers=2)
    assert len(ens) == 2


def test_default_schedule():
    assert DEFAULT_SCHEDULE == PowerSchedule(1.0, 0.75, 1.0)
