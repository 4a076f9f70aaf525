import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkpath.catalog import m2
from fkpath.errors import DomainError
from fkpath.models import sample_free_motion
from fkpath.paths import (
    CadlagPath,
    Indicator,
    JumpCount,
    Product,
    StateAt,
    Terminal,
    TimeFree,
    TimeIntegral,
    common_prefix_time,
    integrate_potential,
    splice_adopt,
)


def test_eval_constant_path():
    assert CadlagPath(0.0, 1.0, 0).eval(0.5) == 0


def test_eval_right_continuous_at_jump():
    p = CadlagPath(0.0, 1.0, 0, [(0.3, 1)])
    assert p.eval(0.3) == 1
    assert p.eval(0.2999) == 0


def test_eval_last_event_rule():
    p = CadlagPath(0.0, 1.0, 0, [(0.3, 1), (0.7, 0)])
    assert p.eval(0.699) == 1
    assert p(0.7) == 0
    assert p(1.0) == 0


@pytest.mark.parametrize("s", [-0.1, 1.01])
def test_eval_outside_domain(s):
    with pytest.raises(DomainError):
        CadlagPath(0.0, 1.0, 0).eval(s)


@pytest.mark.parametrize("events", [[(0.5, 1), (0.5, 0)], [(0.6, 1), (0.4, 0)], [(0.0, 1)],
                                    [(1.5, 1)]])
def test_invalid_event_times_rejected(events):
    with pytest.raises(DomainError):
        CadlagPath(0.0, 1.0, 0, events)


def test_integrate_potential_examples(m2_model):
    assert integrate_potential(CadlagPath(0.0, 1.0, 0), m2_model) == 0.0
    assert integrate_potential(CadlagPath(0.0, 2.0, 1), m2_model) == 2.0
    assert integrate_potential(CadlagPath(0.0, 1.0, 0, [(0.4, 1)]), m2_model) == pytest.approx(0.6, abs=1e-15)


def test_integrate_potential_subinterval(m2_model):
    p = CadlagPath(0.0, 1.0, 0, [(0.4, 1), (0.8, 0)])
    assert integrate_potential(p, m2_model, 0.5, 0.9) == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(DomainError):
        integrate_potential(p, m2_model, 0.5, 1.2)


def test_integrate_time_dependent_potential_by_quadrature():
    from fkpath.estimators import jarzynski_model
    from fkpath.models import PowerSchedule

    # beta_t = t^2, V_t(x) = 2 t x; constant at 1 on [0, 1] gives int 2t = 1
    model = jarzynski_model([0.0, 1.0], PowerSchedule(0.0, 1.0, 2.0), 1.0)
    assert not model.potential_time_constant
    assert integrate_potential(CadlagPath(0.0, 1.0, 1), model) == pytest.approx(1.0, abs=1e-10)
    p = CadlagPath(0.0, 1.0, 0, [(0.5, 1)])
    assert integrate_potential(p, model) == pytest.approx(0.75, abs=1e-10)


def test_splice_adopt_examples():
    donor = CadlagPath(0.0, 1.0, 1)
    adopter = CadlagPath(0.0, 1.0, 0)
    out = splice_adopt(adopter, donor, 0.5)
    assert out == CadlagPath(0.0, 0.5, 1)
    same = CadlagPath(0.0, 1.0, 0, [(0.2, 1)])
    assert splice_adopt(same, same, 1.0) == same


def test_splice_adopt_domain_mismatch():
    with pytest.raises(DomainError):
        splice_adopt(CadlagPath(0.1, 1.0, 0), CadlagPath(0.0, 1.0, 1), 0.5)
    with pytest.raises(DomainError):
        splice_adopt(CadlagPath(0.0, 1.0, 0), CadlagPath(0.0, 0.4, 1), 0.5)


def test_functionals():
    p = CadlagPath(0.0, 1.0, 0, [(0.25, 1), (0.75, 0)])
    hi = Indicator(1)
    assert Terminal(hi)(p) == 0.0
    assert StateAt(0.5, hi)(p) == 1.0
    assert JumpCount()(p) == 2.0
    assert TimeIntegral(TimeFree(hi), True)(p) == pytest.approx(0.5)
    assert TimeIntegral(lambda s, x: s * x)(p) == pytest.approx((0.75**2 - 0.25**2) / 2, abs=1e-10)
    assert (StateAt(0.5, hi) * JumpCount())(p) == 2.0
    assert isinstance(StateAt(0.5, hi) * JumpCount(), Product)


def test_json_round_trip():
    p = CadlagPath(0.0, 1.0, 0, [(0.25, 1), (0.75, 0)])
    rec = p.to_record()
    assert set(rec) == {"t0", "t1", "x0", "events"}
    assert CadlagPath.from_json(p.to_json()) == p
    q = CadlagPath(0.0, 0.02, (0.5,), [(0.01, (0.6,)), (0.02, (0.55,))])
    assert CadlagPath.from_json(q.to_json()) == q


def test_common_prefix_time():
    a = CadlagPath(0.0, 1.0, 0, [(0.2, 1), (0.6, 0)])
    assert common_prefix_time(a, a) == 1.0
    assert common_prefix_time(a, CadlagPath(0.0, 1.0, 1)) == 0.0
    assert common_prefix_time(a, CadlagPath(0.0, 1.0, 0, [(0.2, 1)])) == 0.6
    assert common_prefix_time(a, CadlagPath(0.0, 1.0, 0, [(0.3, 1)])) == 0.2


M2 = m2().model

event_lists = st.lists(st.floats(0.001, 0.999, allow_nan=False), max_size=12, unique=True).map(sorted)


@settings(max_examples=150, deadline=None)
@given(event_lists, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_integral_additive(times, u, v, w):
    a, b, c = sorted([u, v, w])
    p = CadlagPath(0.0, 1.0, 0, [(t, 1 - k % 2) for k, t in enumerate(times)])
    whole = integrate_potential(p, M2, a, c)
    parts = integrate_potential(p, M2, a, b) + integrate_potential(p, M2, b, c)
    assert abs(whole - parts) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(event_lists, st.floats(0, 1))
def test_eval_matches_segments(times, s):
    p = CadlagPath(0.0, 1.0, 0, [(t, k + 1) for k, t in enumerate(times)])
    for u, v, x in p.segments():
        if u <= s < v:
            assert p(s) == x
    assert p(1.0) == p.terminal_state
    r = p.restrict(s)
    assert r.end_time == s and all(t <= s for t in r.times)
    assert r(s) == p(s)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_sampled_paths_are_valid(seed, t):
    p = sample_free_motion(M2, 0, 0.0, t, seed)
    p.validate()
    prev = 0
    for time, x in p.events:
        assert p(time) == x and x != prev
        prev = x
    assert math.isfinite(JumpCount()(p))
