"""Brute-force and Monte-Carlo checks for the closed forms in :mod:`policies`.

The grid and exact-probability oracles recode the formulas directly in
linear space (no log-domain helpers) so a mistake in one path does not
silently appear in the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import policies
from .policies import RsConfig, RsControllerState, ab_schedule_many, rs_schedule, win_probabilities, win_probability


@dataclass
class OracleReport:
    quantity: str
    analytic: float
    oracle: float
    tolerance: float
    passed: bool
    trials: float = 0
    note: str = ""

    @classmethod
    def compare(cls, quantity, analytic, oracle, tolerance, trials=0, note=""):
        ok = bool(abs(analytic - oracle) <= tolerance)
        return cls(quantity, float(analytic), float(oracle), float(tolerance), ok, trials, note)


def binomial_3sigma(p: float, trials: int) -> float:
    return 3.0 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def mc_win_frequency(weights, b: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Empirical winner distribution of repeated :func:`ab_schedule` races."""
    n = len(weights)
    counts = np.zeros(n, dtype=np.int64)
    done = 0
    while done < trials:
        batch = min(trials - done, 1 << 18)
        counts += np.bincount(ab_schedule_many(weights, b, rng, batch), minlength=n)
        done += batch
    return counts / trials


def direct_race_frequency(weights, b: float, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Same race with the backoffs ``X_n ~ Exp(b**w_n)`` drawn literally.

    Only usable when ``b**w`` fits in a double; vectorized over trials.
    """
    rates = np.power(float(b), np.asarray(weights, dtype=float))
    x = rng.exponential(1.0 / rates, size=(trials, rates.size))
    return np.bincount(x.argmin(axis=1), minlength=rates.size) / trials


def eq1_linear(rates, tau, k: int):
    """``(1 - e^{-tau r_k}) * exp(-tau * sum_{n != k} r_n)`` on plain rates."""
    rates = np.asarray(rates, dtype=float)
    others = rates.sum() - rates[k]
    tau = np.asarray(tau, dtype=float)
    return -np.expm1(-tau * rates[k]) * np.exp(-tau * others)


def grid_search_tau(rates, k: int, lo: float, hi: float, step: float) -> tuple[float, float]:
    """Exhaustive maximization of the single-attempter probability on a grid."""
    if not lo < hi or not step > 0:
        raise ValueError("need lo < hi and step > 0")
    n_pts = int(math.floor((hi - lo) / step)) + 1
    best_tau, best_val = lo, -1.0
    # Chunked to keep memory flat for fine grids.
    for start in range(0, n_pts, 1 << 20):
        idx = np.arange(start, min(n_pts, start + (1 << 20)))
        taus = lo + idx * step
        taus = taus[taus > 0]
        if taus.size == 0:
            continue
        vals = eq1_linear(rates, taus, k)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_tau, best_val = float(taus[i]), float(vals[i])
    return best_tau, best_val


def tau_bracket(rates, k: int) -> float:
    """Upper end of a search interval sure to contain the maximizer.

    The stationarity condition gives a maximizer below ``1 / sum_{n != k} r_n``
    (because ``ln(1 + x) <= x``); four times that is a safe bracket.
    """
    rates = np.asarray(rates, dtype=float)
    return 4.0 / (rates.sum() - rates[k])


def chi_mass(weights, b: float, epsilon: float) -> float:
    """Win probability mass on users with ``w < (1 - epsilon) * w_max``."""
    w = np.asarray(weights, dtype=float)
    low = w < (1.0 - epsilon) * w.max()
    return float(win_probabilities(w, b)[low].sum())


def sample_bound_vectors(n_users: int, w_floor: float, samples: int, rng: np.random.Generator, spread: int = 100):
    """Integer weight vectors whose maximum strictly exceeds ``w_floor``."""
    base = int(math.floor(w_floor)) + 1
    out = np.empty((samples, n_users), dtype=np.int64)
    for s in range(samples):
        w_max = base + int(rng.integers(0, spread))
        w = rng.integers(0, w_max + 1, size=n_users)
        w[int(rng.integers(n_users))] = w_max
        out[s] = w
    return out


def verify_theorem1_bound(n_users, delta, epsilon, b, r_min, samples, rng, *, include_adversarial=True) -> OracleReport:
    """Check that ``pi(chi) < delta`` whenever ``w_max`` exceeds the queue bound times ``r_min``."""
    bound = policies.theorem1_queue_bound(n_users, delta, epsilon, b, r_min)
    w_floor = bound * r_min
    worst = 0.0
    if n_users > 1:
        vecs = list(sample_bound_vectors(n_users, w_floor, samples, rng))
        if include_adversarial:
            w_max = w_floor + 1e-9
            vecs.append(np.r_[w_max, np.full(n_users - 1, (1.0 - epsilon) * w_max - 1e-9)])
            w_max = math.floor(w_floor) + 1
            vecs.append(np.r_[w_max, np.full(n_users - 1, (1.0 - epsilon) * w_max - 1)])
        for w in vecs:
            worst = max(worst, chi_mass(w, b, epsilon))
    return OracleReport(
        quantity="theorem1_pi_chi",
        analytic=bound,
        oracle=worst,
        tolerance=delta,
        passed=worst < delta,
        trials=samples,
        note=f"max pi(chi) over samples with w_max > {w_floor:.6g}",
    )


def resolve_probability(p) -> float:
    """Probability that exactly one of independent Bernoulli(p_n) attempters fires."""
    p = np.asarray(p, dtype=float)
    total = 0.0
    for n in range(p.size):
        total += p[n] * np.prod(np.delete(1.0 - p, n))
    return float(total)


def mc_minislot_count(weights, cfg: RsConfig, trials: int, rng: np.random.Generator, *, alpha=None, frozen=False, w_m=None, fresh=True):
    """Mean and histogram of mini-slots over repeated contentions on fixed weights.

    Each trial starts a fresh controller (``alpha = w_m``, default the
    largest weight) unless ``alpha`` is given; ``fresh=False`` instead
    carries the controller from trial to trial so it can track the
    weights. ``frozen`` disables the alpha/ladder updates so the count is
    geometric.
    """
    w = np.asarray(weights, dtype=float)
    w_m = float(w.max()) if w_m is None else float(w_m)
    base = RsControllerState.initial(cfg, w.size, w_m)
    if alpha is not None:
        base.alpha = float(alpha)
        base.log_tau_prev = base.log_tau(cfg)
    counts = np.empty(trials, dtype=np.int64)
    wins = np.zeros(w.size, dtype=np.int64)
    state = base
    for i in range(trials):
        dec, state = rs_schedule(w, cfg, base if fresh else state, rng, adapt=not frozen)
        counts[i] = dec.minislots
        if dec.winner is not None:
            wins[dec.winner] += 1
    return counts.mean(), np.bincount(counts), wins / trials


def run_suite(trials: int = 100_000, seed: int = 0, fault: bool = False) -> list[OracleReport]:
    """Every oracle check, in a fixed order. ``fault`` corrupts the optimal
    threshold formula to prove the harness can fail."""
    rng = np.random.default_rng(seed)
    reports = []
    b = 2.0

    def opt_tau(lr, k):
        t = policies.optimal_tau(lr, k)
        return -t if fault else t

    # Backoff race vs closed form.
    for weights in ([2, 1], [5, 1, 1], [3, 3, 3, 3]):
        freq = mc_win_frequency(weights, b, trials, rng)
        for k in range(len(weights)):
            p = win_probability(weights, b, k)
            reports.append(OracleReport.compare(f"win_probability{weights}[{k}]", p, freq[k], binomial_3sigma(p, trials), trials))
    # Log-domain race vs literal exponential race.
    weights = [3, 2, 2, 0]
    lf = mc_win_frequency(weights, b, trials, rng)
    df = direct_race_frequency(weights, b, trials, rng)
    tv = 0.5 * np.abs(lf - df).sum()
    tol = sum(binomial_3sigma(float(p), trials) for p in df)
    reports.append(OracleReport.compare("race_log_vs_direct_tv", 0.0, tv, tol, trials))

    # Threshold maximizer vs grid search, and the three probability forms.
    inst = np.random.default_rng(seed + 1)
    worst_gap = 0.0
    worst_cons = 0.0
    worst_tau = 0.0
    for _ in range(25):
        n = int(inst.integers(2, 6))
        weights = inst.integers(0, 6, size=n)
        bb = float(inst.uniform(1.1, 3.0))
        k = int(inst.integers(n))
        rates = np.power(bb, weights.astype(float))
        lr = policies.log_rates(weights, bb)
        hi = tau_bracket(rates, k)
        step = hi * 1e-6
        tau_hat, val = grid_search_tau(rates, k, 0.0, hi, step)
        t_star = opt_tau(lr, k)
        p_star = policies.max_success_probability(lr, k)
        worst_gap = max(worst_gap, val - p_star)
        p_at = policies.success_probability(lr, t_star, k) if t_star > 0 else float("nan")
        worst_cons = max(worst_cons, abs(p_at - p_star)) if not math.isnan(p_at) else float("inf")
        worst_tau = max(worst_tau, abs(tau_hat - t_star) / hi)
    reports.append(OracleReport.compare("grid_value_minus_Pstar", 0.0, max(worst_gap, 0.0), 1e-9, 25))
    reports.append(OracleReport.compare("Pstar_vs_P_at_tau_star", 0.0, worst_cons, 1e-12, 25))
    reports.append(OracleReport.compare("grid_argmax_vs_tau_star_rel", 0.0, worst_tau, 1e-3, 25))

    tau_hat, _ = grid_search_tau([4.0, 2.0], 0, 0.0, 1.0, 1e-6)
    reports.append(OracleReport.compare("optimal_tau[4,2]", opt_tau(np.log([4.0, 2.0]), 0), tau_hat, 1e-6, 1e6))

    # Appendix bound.
    reports.append(verify_theorem1_bound(20, 0.1, 0.1, 2.0, 1.0, 10_000, rng))

    # Mini-slot count: geometric law at a frozen threshold.
    cfg = RsConfig(b_ladder=(b,))
    mc_trials = 20_000
    weights = [2, 1]
    lr = policies.log_rates(weights, b)
    c = policies.contention_constant(2)
    alpha = (math.log(c) - math.log(abs(opt_tau(lr, 0)))) / math.log(b)
    p_res = resolve_probability(policies.attempt_probabilities(weights, alpha, b, 2))
    mean_m, _, _ = mc_minislot_count(weights, cfg, mc_trials, rng, alpha=alpha, frozen=True)
    sd = math.sqrt((1.0 - p_res) / p_res**2 / mc_trials)
    reports.append(OracleReport.compare("mean_minislots_frozen[2,1]", 1.0 / p_res, mean_m, 3 * sd, mc_trials))
    mean_m, _, _ = mc_minislot_count([0, 0], cfg, mc_trials, rng, alpha=0.0, frozen=True)
    reports.append(OracleReport.compare("mean_minislots_frozen[0,0]", 2.0, mean_m, 3 * math.sqrt(2.0 / mc_trials), mc_trials))
    return reports
