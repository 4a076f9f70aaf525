import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fkpath.catalog import m2
from fkpath.errors import DegenerateSemigroupError, DomainError, ModelConsistencyError, ModelEvaluationError
from fkpath.estimators import jarzynski_model
from fkpath.models import (
    ConstantVector,
    FiniteCtmcModel,
    InitialLaw,
    LinearSchedule,
    MetropolisRates,
    StateSpace,
    check_h0_doeblin,
    check_h2_q,
    check_stationarity,
    potential,
    sample_free_motion,
)
from fkpath.rng import RandomStream

from conftest import M2_H2_Q, M2_P1, M2_RHO_H1

M2 = m2().model


def test_state_space_bounds():
    with pytest.raises(ValueError):
        StateSpace.finite(1)
    with pytest.raises(ValueError):
        StateSpace.torus(0)
    assert StateSpace.finite(2).contains(1) and not StateSpace.finite(2).contains(2)
    assert StateSpace.torus(2).contains((0.1, 0.9)) and not StateSpace.torus(2).contains((0.1, 1.0))


def test_initial_law_validation():
    with pytest.raises(ValueError):
        InitialLaw.categorical([0.5, 0.6])
    with pytest.raises(ValueError):
        InitialLaw.categorical([1.2, -0.2])
    assert InitialLaw.categorical([0.25, 0.75]).vector(2).tolist() == [0.25, 0.75]
    assert InitialLaw.uniform().vector(4).sum() == pytest.approx(1.0)


def test_zero_length_interval():
    p = sample_free_motion(M2, 0, 0.0, 0.0, 1)
    assert p.n_jumps == 0 and p(0.0) == 0


def test_free_motion_rejects_bad_input():
    with pytest.raises(DomainError):
        sample_free_motion(M2, 0, 1.0, 0.5, 1)
    with pytest.raises(DomainError):
        sample_free_motion(M2, 5, 0.0, 1.0, 1)


def test_free_motion_structure_long_horizon():
    model = FiniteCtmcModel.homogeneous([[-1.0, 1.0], [2.0, -2.0]], [0.0, 1.0], rate_sup=2.0)
    for seed in range(50):
        p = sample_free_motion(model, 0, 0.0, 3.0, seed)
        ts = p.times
        assert all(b > a for a, b in zip(ts, ts[1:]))
        assert all(p(t) == x for t, x in p.events)


def test_thinning_terminal_law_small():
    # 2e4 runs here; the 1e5-run version is an acceptance criterion
    n = 20000
    hits = sum(sample_free_motion(M2, 0, 0.0, 1.0, RandomStream.for_replica(5, 2, r)).terminal_state
               for r in range(n))
    p = M2_P1[0, 1]
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_potential_values():
    assert potential(M2, 0.3, 0) == 0.0
    assert potential(M2, 0.3, 1) == 1.0
    jz = jarzynski_model([0.0, 1.0], LinearSchedule(0.0, 1.0), 1.0)
    for t in (0.0, 0.4, 1.0):
        assert potential(jz, t, 0) == 0.0
        assert potential(jz, t, 1) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        potential(M2, 0.0, 2)


def test_potential_bound_violation_detected():
    bad = FiniteCtmcModel(size=2, rate_matrix_fn=M2.rate_matrix_fn,
                          potential_fn=ConstantVector((0.0, 2.0)), potential_sup=1.0, rate_sup=2.0)
    with pytest.raises(ModelEvaluationError):
        potential(bad, 0.0, 1)


def test_rate_sup_violation_detected():
    bad = FiniteCtmcModel(size=2, rate_matrix_fn=M2.rate_matrix_fn,
                          potential_fn=M2.potential_fn, potential_sup=1.0, rate_sup=1.0)
    with pytest.raises(ModelEvaluationError):
        bad.rate_matrix(0.0)


def test_nonfinite_rates_detected():
    def rates(t):
        return np.array([[-np.inf, np.inf], [1.0, -1.0]])

    bad = FiniteCtmcModel(size=2, rate_matrix_fn=rates, potential_fn=M2.potential_fn,
                          potential_sup=1.0, rate_sup=2.0)
    with pytest.raises(ModelEvaluationError):
        sample_free_motion(bad, 0, 0.0, 1.0, 3)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 5.0), st.integers(0, 1))
def test_potential_bounded_property(t, x):
    jz = jarzynski_model([0.0, 1.0], LinearSchedule(0.0, 1.0), 5.0)
    for model in (M2, jz):
        assert 0.0 <= potential(model, t, x) <= model.potential_sup


def test_h0_doeblin_m2_value():
    # brute force against the closed-form P_1 = exp(L)
    mu = M2_P1.mean(axis=0)
    r = M2_P1 / mu
    brute = min(r.min(), (1 / r).min())
    assert brute == pytest.approx(M2_RHO_H1, abs=1e-15)
    assert check_h0_doeblin(M2, 0.0, 1.0) == pytest.approx(M2_RHO_H1, abs=1e-9)


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0])
def test_h0_positive_for_m2(h):
    assert 0.0 < check_h0_doeblin(M2, 0.0, h) <= 1.0


def test_h0_absorbing_chain_is_zero():
    frozen = FiniteCtmcModel.homogeneous([[0.0, 0.0], [0.0, 0.0]], [0.0, 1.0])
    assert check_h0_doeblin(frozen, 0.0, 1.0) == 0.0


def test_h2_q_values(free_model):
    assert check_h2_q(free_model, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert check_h2_q(M2, 0.7, 0.7) == 0.0
    assert check_h2_q(M2, 0.0, 1.0) == pytest.approx(M2_H2_Q, abs=1e-9)


def test_h2_q_degenerate():
    # absorbing state with V = 1000: Q_{0,1}(1)(1) = exp(-1000) underflows to 0
    model = FiniteCtmcModel.homogeneous([[0.0, 0.0], [0.0, 0.0]], [0.0, 1000.0])
    with pytest.raises(DegenerateSemigroupError):
        check_h2_q(model, 0.0, 1.0)


def test_stationarity_check():
    sched = LinearSchedule(0.0, 1.0)
    h = (0.0, 1.0)
    assert check_stationarity(MetropolisRates(h, sched), h, sched, np.linspace(0, 1, 11)) < 1e-12

    def wrong(t):
        return np.array([[-1.0, 1.0], [1.0, -1.0]])

    with pytest.raises(ModelConsistencyError):
        check_stationarity(wrong, h, sched, [0.5])
