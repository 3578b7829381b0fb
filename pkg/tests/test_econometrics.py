import csv
import math

import numpy as np
import pytest

from sociolearn.behavior import naive_weights
from sociolearn.exceptions import IdentificationError
from sociolearn.econometrics import (
    IdentificationResult,
    add_measurement_noise,
    naive_implied_signal_variance,
    recover_signal_variance,
    recover_weights,
    write_report_csv,
)
from sociolearn.kernel import WeightProfile, solve_equilibrium
from sociolearn.montecarlo import PanelData, empirical_cov, simulate_paths
from sociolearn.network import Environment, Network, SignalProfile, gen_complete, gen_erdos_renyi

NET5 = gen_erdos_renyi(5, 0.5, seed=0)
ENV = Environment(0.8)


def true_result(w: WeightProfile, net: Network) -> IdentificationResult:
    zeros = np.zeros_like(w.social)
    return IdentificationResult(w, zeros, np.zeros(w.n), np.zeros(w.n), frozenset(), net, 3.0)


@pytest.fixture(scope="module")
def equilibrium5():
    sig = SignalProfile.uniform(5, 2.0)
    return sig, solve_equilibrium(NET5, sig, ENV)


def test_noise_zero_is_identity(equilibrium5):
    sig, res = equilibrium5
    panel = simulate_paths(res.weights, NET5, sig, ENV, 100, seed=0)
    assert add_measurement_noise(panel, 0.0, seed=1) is panel
    with pytest.raises(ValueError):
        add_measurement_noise(panel, -1.0)


def test_noise_reproducible_and_calibrated(equilibrium5):
    sig, res = equilibrium5
    T = 100_000
    panel = simulate_paths(res.weights, NET5, sig, ENV, T, seed=0)
    a = add_measurement_noise(panel, 0.01, seed=3)
    b = add_measurement_noise(panel, 0.01, seed=3)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_array_equal(a.states, panel.states)
    assert a.measurement_noise_var == 0.01
    d = (a.actions - panel.actions).reshape(-1)
    se = 0.01 * math.sqrt(2.0 / d.size)
    assert abs(d.var(ddof=1) - 0.01) <= 3 * se


@pytest.mark.parametrize("candidate", ["true", "complete"])
def test_noiseless_recovery_is_exact(candidate):
    # asymmetric signal precisions make every agent's filter distinct; with
    # negligible signal noise the regression is a noiseless linear system
    sig = SignalProfile([1.0, 2.0, 3.0, 4.0, 5.0])
    w = solve_equilibrium(NET5, sig, ENV).weights
    panel = simulate_paths(w, NET5, SignalProfile.uniform(5, 1e-24), ENV, 2000, seed=0)
    cand = NET5 if candidate == "true" else gen_complete(5, False)
    r = recover_weights(panel, ENV, cand)
    np.testing.assert_allclose(r.weights_hat.social, w.social, atol=1e-8)
    np.testing.assert_allclose(r.weights_hat.own, w.own, atol=1e-8)


def test_estimates_respect_candidate_neighborhood(equilibrium5):
    sig, res = equilibrium5
    panel = simulate_paths(res.weights, NET5, sig, ENV, 5000, seed=2)
    r = recover_weights(panel, ENV, NET5)
    assert not np.any(r.weights_hat.social[NET5.adjacency() == 0])
    assert r.fit.shape == (5,) and np.all(r.fit > 0)


def test_consistency_in_sample_length(equilibrium5):
    sig, res = equilibrium5
    errs = {10_000: [], 100_000: []}
    for seed in range(20):
        panel = simulate_paths(res.weights, NET5, sig, ENV, 100_000, seed=seed)
        for T in errs:
            short = PanelData(panel.states[:T], panel.actions[:T])
            r = recover_weights(short, ENV, NET5)
            errs[T].append(np.abs(r.weights_hat.social - res.weights.social).max())
    assert np.median(errs[100_000]) < np.median(errs[10_000])


def test_attenuation_bias_vanishes_with_noise(equilibrium5):
    sig, res = equilibrium5
    clean = simulate_paths(res.weights, NET5, sig, ENV, 1_000_000, seed=0)
    mask = NET5.adjacency() > 0
    bias = []
    for xi in (0.1, 0.01, 0.001):
        r = recover_weights(add_measurement_noise(clean, xi, seed=1), ENV, NET5)
        bias.append(abs((r.weights_hat.social - res.weights.social)[mask].mean()))
    assert bias[0] > bias[1] > bias[2]
    assert bias[1] < 0.2 * bias[0]


def test_short_panel_rejected(equilibrium5):
    sig, res = equilibrium5
    panel = simulate_paths(res.weights, NET5, sig, ENV, 30, seed=0)
    with pytest.raises(IdentificationError, match="too short"):
        recover_weights(panel, ENV, gen_complete(5, False))


def test_rank_deficient_design_names_agent():
    rng = np.random.default_rng(0)
    T = 200
    actions = rng.standard_normal((T, 3))
    actions[:, 2] = 0.0  # agent 2 never moves: agent 0's regressor on it is zero
    panel = PanelData(rng.standard_normal(T), actions)
    net = Network(3, ((2,), (), (0,)))
    with pytest.raises(IdentificationError, match="agent 0"):
        recover_weights(panel, ENV, net)


def test_signal_variance_inverts_exactly(equilibrium5):
    sig, res = equilibrium5
    out = recover_signal_variance(true_result(res.weights, NET5), res.V, ENV)
    np.testing.assert_allclose(out.sigma2_hat, sig.sigma2, atol=1e-8)
    assert out.sigma2_valid.all()


def test_negative_signal_variance_flagged(equilibrium5):
    _, res = equilibrium5
    V = res.V.copy()
    V[0, 0] = 0.01
    out = recover_signal_variance(true_result(res.weights, NET5), V, ENV)
    assert not out.sigma2_valid[0] and out.sigma2_hat[0] < 0
    assert np.isnan(out.valid_sigma2()[0])
    assert np.all(np.isfinite(out.valid_sigma2()[1:]))


def test_degenerate_signal_weight():
    w = WeightProfile([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0])
    with pytest.raises(IdentificationError, match="signal weight degenerate"):
        recover_signal_variance(true_result(w, gen_complete(2, False)), np.eye(2), ENV)


def test_naive_hypothesis_recovers_naive_signals():
    net = gen_erdos_renyi(6, 0.6, seed=2)
    sig = SignalProfile([0.5, 1.0, 2.0, 3.0, 4.0, 8.0])
    w = naive_weights(net, sig, ENV)
    got = naive_implied_signal_variance(true_result(w, net), ENV)
    np.testing.assert_allclose(got, sig.sigma2, rtol=1e-9)


def test_simulated_recovery_of_signal_variances(equilibrium5):
    sig, res = equilibrium5
    panel = simulate_paths(res.weights, NET5, sig, ENV, 100_000, seed=0)
    r = recover_weights(panel, ENV, NET5)
    r = recover_signal_variance(r, empirical_cov(panel, ENV), ENV)
    assert np.all(np.abs(r.sigma2_hat / sig.sigma2 - 1) <= 0.10)


def test_report_csv(tmp_path, equilibrium5):
    sig, res = equilibrium5
    panel = simulate_paths(res.weights, NET5, sig, ENV, 20_000, seed=0)
    r = recover_weights(panel, ENV, gen_complete(5, False))
    r = recover_signal_variance(r, empirical_cov(panel, ENV), ENV)
    f = tmp_path / "report.csv"
    write_report_csv(r, f)
    rows = list(csv.DictReader(open(f)))
    assert list(rows[0]) == ["agent", "neighbor", "weight", "stderr", "sigma2_hat", "flag"]
    assert len(rows) == 5 * 4 + 5
    own = [row for row in rows if row["neighbor"] == "signal"]
    assert all(row["flag"] in ("valid", "invalid") for row in own)
    social = [row for row in rows if row["neighbor"] != "signal"]
    assert {row["flag"] for row in social} <= {"link", "nolink"}
    linked = {(int(row["agent"]), int(row["neighbor"])) for row in social if row["flag"] == "link"}
    assert linked == set(r.links_hat)
