import math

import numpy as np
import pytest

from dmwsim import oracles, policies
from dmwsim.policies import RsConfig


def test_mc_win_frequency_examples():
    rng = np.random.default_rng(0)
    f = oracles.mc_win_frequency([2, 1], 2.0, 1_000_000, rng)
    assert abs(f[0] - 2 / 3) <= 0.0015
    f = oracles.mc_win_frequency([4, 4, 4], 2.0, 100_000, rng)
    assert np.all(np.abs(f - 1 / 3) <= oracles.binomial_3sigma(1 / 3, 100_000))
    assert oracles.mc_win_frequency([9], 2.0, 10_000, rng)[0] == 1.0


def test_log_race_matches_direct_race():
    rng = np.random.default_rng(1)
    w = [3, 2, 2, 0]
    a = oracles.mc_win_frequency(w, 2.0, 100_000, rng)
    b = oracles.direct_race_frequency(w, 2.0, 100_000, rng)
    exact = policies.win_probabilities(w, 2.0)
    for f in (a, b):
        assert np.all(np.abs(f - exact) <= [oracles.binomial_3sigma(p, 100_000) for p in exact])


def test_grid_search_examples():
    tau, _ = oracles.grid_search_tau([4.0, 2.0], 0, 0.0, 1.0, 1e-6)
    assert abs(tau - math.log(3) / 4) <= 1e-6
    tau, val = oracles.grid_search_tau([1.0, 1.0], 0, 0.0, 2.0, 1e-6)
    assert tau == pytest.approx(math.log(2), abs=1e-6)
    assert val == pytest.approx(0.25, abs=1e-12)
    with pytest.raises(ValueError):
        oracles.grid_search_tau([1.0, 1.0], 0, 1.0, 0.5, 1e-3)


def test_tau_bracket_contains_maximizer():
    rng = np.random.default_rng(2)
    for _ in range(200):
        r = rng.uniform(0.01, 100, size=int(rng.integers(2, 10)))
        k = int(rng.integers(r.size))
        assert policies.optimal_tau(np.log(r), k) < oracles.tau_bracket(r, k)


def test_theorem1_bound_examples():
    rng = np.random.default_rng(3)
    rep = oracles.verify_theorem1_bound(20, 0.1, 0.1, 2.0, 1.0, 1000, rng)
    assert rep.passed and rep.analytic == pytest.approx(76.43856, abs=1e-4)
    assert rep.oracle < 0.1
    rep1 = oracles.verify_theorem1_bound(1, 0.1, 0.1, 2.0, 1.0, 1000, rng)
    assert rep1.passed and rep1.oracle == 0.0


def test_adversarial_vector_is_tight_but_passes():
    w_max = 77
    w = np.r_[w_max, np.full(19, 0.9 * w_max - 1)]
    mass = oracles.chi_mass(w, 2.0, 0.1)
    # Every rival falls in chi: mass = 19 b^-(0.1 w_max + 1) / (1 + same).
    x = 19 * 2.0 ** -(0.1 * w_max + 1)
    assert mass == pytest.approx(x / (1 + x), rel=1e-12)
    assert 0.04 < mass < 0.1


def test_chi_mass_respects_proof_chain():
    rng = np.random.default_rng(4)
    for w in oracles.sample_bound_vectors(20, 76.44, 500, rng):
        assert oracles.chi_mass(w, 2.0, 0.1) <= 20 * 2.0 ** (-0.1 * w.max()) + 1e-15


def test_resolve_probability_enumeration():
    p = np.array([0.1, 0.5, 0.3])
    brute = 0.0
    for bits in np.ndindex(2, 2, 2):
        if sum(bits) == 1:
            brute += np.prod([pi if b else 1 - pi for pi, b in zip(p, bits)])
    assert oracles.resolve_probability(p) == pytest.approx(brute, abs=1e-15)


def test_mc_minislot_examples():
    rng = np.random.default_rng(5)
    cfg = RsConfig(b_ladder=(2.0,))
    trials = 20_000
    mean, hist, _ = oracles.mc_minislot_count([0, 0], cfg, trials, rng, alpha=0.0, frozen=True)
    assert abs(mean - 2.0) <= 3 * math.sqrt(2.0 / trials)
    assert hist[0] == 0 and hist.sum() == trials
    # Huge gap with a controller tracking across slots: one mini-slot per slot.
    mean, hist, wins = oracles.mc_minislot_count([900, 0, 0], RsConfig(), trials, rng, fresh=False)
    assert wins[0] == 1.0
    assert mean < 1.01
    # A fresh controller opens at alpha = w_m where the top user attempts w.p. 1/3.
    mean, _, _ = oracles.mc_minislot_count([900, 0, 0], RsConfig(), trials, rng)
    assert mean > 1.5


def test_suite_passes_and_fault_is_caught():
    reports = oracles.run_suite(trials=20_000, seed=0)
    assert all(r.passed for r in reports), [r for r in reports if not r.passed]
    faulty = oracles.run_suite(trials=20_000, seed=0, fault=True)
    assert not all(r.passed for r in faulty)
