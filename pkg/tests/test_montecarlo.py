import math

import numpy as np
import pytest

from sociolearn.kernel import WeightProfile, solve_equilibrium, steady_state
from sociolearn.montecarlo import (
    PanelData,
    _run,
    default_burn_in,
    empirical_cov,
    empirical_cov_se,
    error_vectors,
    read_panel_csv,
    simulate_paths,
    write_panel_csv,
)
from sociolearn.network import Environment, Network, SignalProfile, gen_complete, gen_erdos_renyi


def random_contractive_weights(net, m, rng):
    """Positive weights summing to one: always a contraction for |rho| <= 1."""
    n = net.n
    social = np.zeros((n, n * m))
    own = np.ones(n)
    for i, row in enumerate(net.neighbors):
        if not row:
            continue
        raw = rng.uniform(0.1, 1.0, len(row) * m + 1)
        raw /= raw.sum()
        own[i] = raw[-1]
        for l in range(m):
            social[i, [l * n + j for j in row]] = raw[l * len(row):(l + 1) * len(row)]
    return WeightProfile(social, own)


def test_default_burn_in():
    assert default_burn_in(0.5) == 1000
    assert default_burn_in(0.999) == 10000
    assert default_burn_in(1.0) == 1000


def test_own_signal_panel_variances():
    sig = SignalProfile([0.5, 1.0, 3.0])
    net = Network(3, ((), (), ()))
    T = 100_000
    panel = simulate_paths(WeightProfile.own_signal(3), net, sig, Environment(0.9), T, seed=4)
    v = (panel.actions - panel.states[:, None]).var(axis=0, ddof=1)
    se = sig.sigma2 * math.sqrt(2.0 / T)
    assert np.all(np.abs(v - sig.sigma2) <= 3 * se)


def test_same_seed_same_panel():
    net, sig, env = gen_erdos_renyi(4, 0.7, seed=0), SignalProfile.uniform(4, 2.0), Environment(0.8)
    w = solve_equilibrium(net, sig, env).weights
    a = simulate_paths(w, net, sig, env, 500, seed=9)
    b = simulate_paths(w, net, sig, env, 500, seed=9)
    c = simulate_paths(w, net, sig, env, 500, seed=10)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.actions, c.actions)


def test_draw_order_is_state_then_signals():
    # with all-own-signal play the panel exposes the raw draws
    n, T, rho, burn = 2, 5, 0.5, 3
    sig = SignalProfile([1.0, 4.0])
    panel = simulate_paths(WeightProfile.own_signal(n), Network(2, ((), ())), sig,
                           Environment(rho), T, burn_in=burn, seed=123)
    rng = np.random.default_rng(123)
    theta = rng.standard_normal() / math.sqrt(1 - rho ** 2)
    z = rng.standard_normal((burn + T, n + 1))
    states, acts = [], []
    for row in z:
        theta = rho * theta + row[0]
        states.append(theta)
        acts.append(theta + np.sqrt(sig.sigma2) * row[1:])
    np.testing.assert_allclose(panel.states, states[burn:], rtol=1e-14)
    np.testing.assert_allclose(panel.actions, acts[burn:], rtol=1e-14)


def test_chunked_draws_match_single_stream():
    from sociolearn import montecarlo

    net, sig, env = gen_complete(3, False), SignalProfile([1.0, 2.0, 3.0]), Environment(0.7)
    w = solve_equilibrium(net, sig, env).weights
    full = simulate_paths(w, net, sig, env, 3000, burn_in=100, seed=5)
    old = montecarlo.CHUNK
    try:
        montecarlo.CHUNK = 257
        chunked = simulate_paths(w, net, sig, env, 3000, burn_in=100, seed=5)
    finally:
        montecarlo.CHUNK = old
    np.testing.assert_array_equal(full.actions, chunked.actions)


def test_pair_rho_zero_matches_closed_form():
    net, sig, env = gen_complete(2, False), SignalProfile.uniform(2, 1.0), Environment(0.0)
    w = solve_equilibrium(net, sig, env).weights
    panel = simulate_paths(w, net, sig, env, 2_000_000, seed=1)
    C = empirical_cov(panel, env)
    target = np.array([[0.5, 0.25], [0.25, 0.5]])
    assert np.all(np.abs(C / target - 1) <= 0.02)


def test_empirical_cov_zero_for_perfect_actions():
    theta = np.random.default_rng(0).standard_normal(50)
    panel = PanelData(theta, np.tile(theta[:, None], (1, 3)))
    np.testing.assert_allclose(empirical_cov(panel, Environment(0.9)), 0.0, atol=1e-14)


def test_empirical_cov_needs_enough_periods():
    panel = PanelData(np.zeros(3), np.zeros((3, 2)))
    with pytest.raises(ValueError, match="insufficient periods"):
        empirical_cov(panel, Environment(0.9, 2))


def test_error_vector_layout():
    states = np.array([1.0, 2.0, 3.0])
    actions = np.array([[1.5, 0.0], [2.5, 1.0], [4.0, 2.0]])
    e = error_vectors(PanelData(states, actions), Environment(0.5, 2))
    # row for t=2: lag 0 errors, then 0.5 * a[t-1] - theta[t]
    np.testing.assert_allclose(e[-1], [1.0, -1.0, 0.5 * 2.5 - 3.0, 0.5 * 1.0 - 3.0])
    assert e.shape == (2, 4)


def test_panel_validation():
    with pytest.raises(ValueError):
        PanelData(np.zeros(3), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PanelData(np.array([0.0, np.nan]), np.zeros((2, 1)))


def test_panel_csv_roundtrip(tmp_path):
    net, sig, env = gen_complete(3, False), SignalProfile([1.0, 2.0, 3.0]), Environment(0.7)
    w = solve_equilibrium(net, sig, env).weights
    panel = simulate_paths(w, net, sig, env, 50, seed=2)
    f = tmp_path / "panel.csv"
    write_panel_csv(panel, f)
    assert f.read_text().splitlines()[0] == "t,theta,a_0,a_1,a_2"
    back = read_panel_csv(f)
    np.testing.assert_allclose(back.actions, panel.actions, rtol=1e-11)
    np.testing.assert_allclose(back.states, panel.states, rtol=1e-11)


@pytest.mark.parametrize("case", range(4))
def test_oracle_equivalence_fixed_weights(case):
    rng = np.random.default_rng(100 + case)
    n = int(rng.integers(3, 9))
    m = 1 + case % 2
    net = gen_erdos_renyi(n, 0.5, seed=case)
    sig = SignalProfile(rng.uniform(0.5, 4.0, n))
    env = Environment(float(rng.uniform(0.3, 0.95)), m)
    w = random_contractive_weights(net, m, rng)
    V = steady_state(w, net, sig, env)
    panel = simulate_paths(w, net, sig, env, 200_000, seed=case)
    C = empirical_cov(panel, env)
    se = empirical_cov_se(panel, env)
    assert np.all(np.abs(C - V) <= 5 * se)


def test_burn_in_sufficiency():
    # Two runs share every draw that enters the kept sample; they differ only in
    # how long ago the zero action history was planted.
    net, sig, env = gen_erdos_renyi(5, 0.5, seed=0), SignalProfile.uniform(5, 2.0), Environment(0.8)
    w = solve_equilibrium(net, sig, env).weights
    n, T, b = 5, 100_000, default_burn_in(env.rho)
    rng = np.random.default_rng(7)
    theta0 = rng.standard_normal() / math.sqrt(1 - env.rho ** 2)
    z = rng.standard_normal((2 * b + T, n + 1))
    sigma = np.sqrt(sig.sigma2)

    def run(start_row, theta):
        out_t, out_a = np.empty(T), np.empty((T, n))
        _run(z[start_row:], theta, env.rho, w.own, sigma, w.social, 1, np.zeros((1, n)),
             out_t, out_a, -(2 * b - start_row))
        return PanelData(out_t, out_a)

    theta_b = theta0
    for k in range(b):
        theta_b = env.rho * theta_b + z[k, 0]
    long_burn, short_burn = run(0, theta0), run(b, theta_b)
    np.testing.assert_array_equal(long_burn.states, short_burn.states)
    diff = np.abs(empirical_cov(long_burn, env) - empirical_cov(short_burn, env))
    assert np.all(diff < empirical_cov_se(long_burn, env))
