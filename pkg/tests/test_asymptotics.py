from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sociolearn.asymptotics import (
    LimitConstants,
    aggregation_ratio,
    benchmark_variance,
    homogeneous_limit,
    limit_equations_residual,
    naive_limit,
)
from sociolearn.kernel import solve_equilibrium
from sociolearn.network import Environment, SignalProfile, gen_complete

# Independent brentq root of the limit equation (scipy, tolerance 1e-16).
LIMIT_2_09 = (0.8207502526848722, 0.48393476404373137)


def test_benchmark_values():
    assert benchmark_variance(1.0) == pytest.approx(0.5)
    assert benchmark_variance(2.0) == pytest.approx(2 / 3)
    assert benchmark_variance(1e12) == pytest.approx(1.0)


def test_aggregation_ratio_simple_cases():
    sig = SignalProfile([1.0, 2.0])
    V = np.diag(benchmark_variance(sig.sigma2))
    np.testing.assert_allclose(aggregation_ratio(V, sig), 1.0)
    iso = SignalProfile([1.0])
    assert aggregation_ratio(np.array([[1.0]]), iso)[0] == pytest.approx(2.0)


def test_two_agent_precise_partner_reaches_benchmark():
    n = 10_000
    sig = SignalProfile([1.0, 1.0 / n])
    res = solve_equilibrium(gen_complete(2, include_self=False), sig, Environment(0.9))
    assert aggregation_ratio(res.V, sig)[0] <= 1.01
    assert res.weights.own[1] > 0.999


def test_homogeneous_limit_closed_forms_at_zero_persistence():
    lim = homogeneous_limit(1.0, 0.0)
    assert lim.v_inf == pytest.approx(0.5, abs=1e-12)
    assert lim.cov_inf == pytest.approx(0.25, abs=1e-12)
    lim = homogeneous_limit(2.0, 0.0)
    assert lim.v_inf == pytest.approx(2 / 3, abs=1e-12)
    assert lim.cov_inf == pytest.approx(4 / 9, abs=1e-12)


def test_homogeneous_limit_matches_root_oracle():
    lim = homogeneous_limit(2.0, 0.9)
    assert lim.v_inf == pytest.approx(LIMIT_2_09[0], abs=1e-12)
    assert lim.cov_inf == pytest.approx(LIMIT_2_09[1], abs=1e-12)
    assert limit_equations_residual(lim, 2.0, 0.9) < 1e-12
    assert 0 < lim.cov_inf < lim.v_inf


def test_homogeneous_limit_rejects_unit_root():
    with pytest.raises(ValueError):
        homogeneous_limit(1.0, 1.0)
    with pytest.raises(ValueError):
        homogeneous_limit(1.0, -1.2)
    with pytest.raises(ValueError):
        naive_limit(1.0, 1.0, 1.0)


def test_limit_residual_detects_wrong_constants():
    assert limit_equations_residual(LimitConstants(0.9, 0.5), 2.0, 0.9) > 1e-3


@settings(max_examples=60, deadline=None)
@given(s2=st.floats(0.05, 50.0), rho=st.floats(0.01, 0.99))
def test_limit_lies_between_benchmark_and_autarky(s2, rho):
    lim = homogeneous_limit(s2, rho)
    assert benchmark_variance(s2) < lim.v_inf < s2
    assert limit_equations_residual(lim, s2, rho) < 1e-12


def test_naive_limit_plug_in():
    nl = naive_limit(1.0, 1.0, 0.0)
    assert nl.kappa2 == pytest.approx(1.0)
    assert nl.v_a == pytest.approx(0.5) and nl.v_b == pytest.approx(0.5)
    nl = naive_limit(1.0, 4.0, 0.0)
    assert nl.v_a == pytest.approx(0.5) and nl.v_b == pytest.approx(0.8)


def test_naive_limit_exact_rational_oracle():
    # exact rational evaluation with the squared normalization of the
    # precision-weighted social estimate
    p = Fraction(1, 3)
    mix = (p / (1 + p) + p / (1 + p)) / (p + p)
    k2 = 1 / (1 - Fraction(81, 100) * mix ** 2)
    v = (k2 + p) / (1 + p) ** 2
    nl = naive_limit(3.0, 3.0, 0.9)
    assert nl.kappa2 == pytest.approx(float(k2), rel=1e-14)
    assert nl.v_a == pytest.approx(float(v), rel=1e-14)
    assert nl.v_a == pytest.approx(1.2207950631458093, rel=1e-14)
    assert nl.v_a > homogeneous_limit(3.0, 0.9).v_inf


@settings(max_examples=40, deadline=None)
@given(s2=st.floats(0.1, 20.0), rho=st.floats(0.05, 0.99))
def test_naive_limit_worse_than_bayesian_limit(s2, rho):
    nl = naive_limit(s2, s2, rho)
    assert nl.v_a == nl.v_b
    assert nl.v_a > homogeneous_limit(s2, rho).v_inf


def test_equilibrium_approaches_limit():
    s2, rho = 1.0, 0.9
    lim = homogeneous_limit(s2, rho)
    gaps = []
    for n in (40, 160):
        V = solve_equilibrium(gen_complete(n, True), SignalProfile.uniform(n, s2), Environment(rho)).V
        gaps.append((abs(V[0, 0] / lim.v_inf - 1), abs(V[0, 1] / lim.cov_inf - 1)))
    assert gaps[1][0] < gaps[0][0] and gaps[1][1] < gaps[0][1]
