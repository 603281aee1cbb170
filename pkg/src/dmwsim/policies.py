"""Max-Weight, exponential-backoff (DMW-AB) and mini-slot reservation (DMW-RS)
schedulers plus the closed-form contention quantities behind them.

Contention rates ``r_n = b**w_n`` overflow a double for realistic weights
(``2**1000``), so every function here takes or builds *log-rates*
``w_n * ln(b)`` and works in the log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

# exp() overflows past ~709.78; beyond this exponent a factor exp(-x) is 0.
_EXP_SAT = 700.0


def contention_constant(n_users: int) -> float:
    """``ln(1 + 1/(N-1))``, the optimal ``tau`` when all rates are equal to 1."""
    if n_users < 2:
        raise ValueError("contention needs at least two users")
    return math.log1p(1.0 / (n_users - 1))


def log_rates(weights, b: float) -> np.ndarray:
    if b <= 1:
        raise ValueError(f"b must exceed 1, got {b!r}")
    return np.asarray(weights, dtype=float) * math.log(b)


def _others(x: np.ndarray, k: int) -> np.ndarray:
    return np.delete(x, k)


@dataclass(frozen=True)
class AbConfig:
    b: float = 2.0

    def __post_init__(self):
        if not self.b > 1:
            raise ValueError(f"b must exceed 1, got {self.b!r}")


@dataclass(frozen=True)
class RsConfig:
    b_ladder: tuple[float, ...] = (1.1, 1.2, 2.0)
    delta: float = 2.0
    collthr: int = 7
    idlethr: int = 7
    minislot_cap: int = 10_000
    carry: str = "alpha"

    def __post_init__(self):
        if self.carry not in ("alpha", "tau"):
            raise ValueError(f"carry must be 'alpha' or 'tau', got {self.carry!r}")
        ladder = tuple(float(b) for b in self.b_ladder)
        if not ladder or ladder[0] <= 1:
            raise ValueError(f"b_ladder must be nonempty with b_1 > 1, got {self.b_ladder!r}")
        if any(hi <= lo for lo, hi in zip(ladder, ladder[1:])):
            raise ValueError(f"b_ladder must be strictly ascending, got {self.b_ladder!r}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.collthr < 1 or self.idlethr < 1 or self.minislot_cap < 1:
            raise ValueError("collthr, idlethr and minislot_cap must be positive integers")
        object.__setattr__(self, "b_ladder", ladder)


@dataclass
class RsControllerState:
    """Adaptive DMW-RS state carried across mini-slots and data slots.

    ``v`` is a 0-based index into ``RsConfig.b_ladder``. The threshold is
    ``tau = c / b**alpha`` with ``c = ln(1 + 1/(N-1))``; ``alpha`` is kept in
    ``[0, w_m]`` which is the same as keeping ``tau`` in ``[tau_l, tau_u]``.
    ``log_tau_prev`` is the log of the threshold that resolved the last slot.
    """

    n_users: int
    w_m: float
    alpha: float
    v: int
    log_tau_prev: float
    cons_coll: int = 0
    cons_idle: int = 0

    @classmethod
    def initial(cls, cfg: RsConfig, n_users: int, w_m: float) -> "RsControllerState":
        top = len(cfg.b_ladder) - 1
        c = contention_constant(n_users)
        return cls(
            n_users=n_users,
            w_m=float(w_m),
            alpha=float(w_m),
            v=top,
            log_tau_prev=math.log(c) - w_m * math.log(cfg.b_ladder[top]),
        )

    def log_tau(self, cfg: RsConfig) -> float:
        return math.log(contention_constant(self.n_users)) - self.alpha * math.log(cfg.b_ladder[self.v])

    @property
    def tau_prev(self) -> float:
        return math.exp(self.log_tau_prev)


@dataclass
class ScheduleDecision:
    winner: Optional[int]
    minislots: int = 0
    collisions: int = 0
    idles: int = 0
    was_max_weight: bool = False
    cap_hit: bool = False
    ties: int = 0


def mw_schedule(weights: Sequence) -> int:
    """Centralized Max-Weight; ties go to the lowest index."""
    w = np.asarray(weights)
    if w.size == 0:
        raise ValueError("weights must be nonempty")
    return int(np.argmax(w))


def _race(keys: np.ndarray) -> tuple[int, int]:
    winner = int(np.argmin(keys))
    return winner, int(np.count_nonzero(keys == keys[winner]) - 1)


def ab_race(weights: Sequence, b: float, rng: np.random.Generator) -> tuple[int, int]:
    """Exponential backoff race; returns ``(winner, number of exact ties)``.

    ``X_n = E_n / b**w_n`` with ``E_n ~ Exp(1)``; the argmin is taken over
    ``ln E_n - w_n ln b``, which is monotone in ``X_n``.
    """
    lr = log_rates(weights, b)
    keys = np.log(rng.standard_exponential(lr.size)) - lr
    return _race(keys)


def ab_schedule(weights: Sequence, b: float, rng: np.random.Generator) -> int:
    return ab_race(weights, b, rng)[0]


def ab_schedule_many(weights: Sequence, b: float, rng: np.random.Generator, trials: int) -> np.ndarray:
    """Winners of ``trials`` independent races on the same weights."""
    lr = log_rates(weights, b)
    keys = np.log(rng.standard_exponential((trials, lr.size))) - lr
    return keys.argmin(axis=1)


def win_probability(weights: Sequence, b: float, k: int) -> float:
    """Probability that user ``k``'s backoff expires first: ``b**w_k / sum_n b**w_n``."""
    lr = log_rates(weights, b)
    if lr.size == 1:
        return 1.0
    shifted = _others(lr, k) - lr[k]
    return float(np.exp(-np.logaddexp(0.0, logsumexp(shifted))))


def log_loss_probability(weights: Sequence, b: float, k: int) -> float:
    """``ln(1 - pi_k)``; stays informative after ``pi_k`` rounds to 1."""
    lr = log_rates(weights, b)
    if lr.size == 1:
        return -math.inf
    s = logsumexp(_others(lr, k) - lr[k])
    return float(s - np.logaddexp(0.0, s))


def win_probabilities(weights: Sequence, b: float) -> np.ndarray:
    lr = log_rates(weights, b)
    return np.exp(lr - logsumexp(lr))


def success_probability(lrates: Sequence, tau: Optional[float], k: int, *, log_tau: Optional[float] = None) -> float:
    """Probability that user ``k`` is the only attempter in a mini-slot.

    ``P_k = (1 - exp(-tau r_k)) * prod_{n != k} exp(-tau r_n)``. ``lrates``
    holds ``ln r_n``; pass ``log_tau`` instead of ``tau`` when ``tau``
    underflows.
    """
    if log_tau is None:
        if tau is None or not tau > 0:
            raise ValueError(f"tau must be positive, got {tau!r}")
        log_tau = math.log(tau)
    lr = np.asarray(lrates, dtype=float)
    lx = log_tau + lr
    lx_k = lx[k]
    if lx_k > _EXP_SAT:
        log_first = 0.0
    else:
        x_k = math.exp(lx_k)
        log_first = math.log(-math.expm1(-x_k)) if x_k > 0 else lx_k
    rest = _others(lx, k)
    if rest.size and rest.max() > _EXP_SAT:
        return 0.0
    log_p = log_first - float(np.exp(rest).sum())
    return math.exp(log_p)


def log_optimal_tau(lrates: Sequence, k: int) -> float:
    lr = np.asarray(lrates, dtype=float)
    if lr.size < 2:
        raise ValueError("optimal tau needs at least two users")
    # ln(r_k / sum_{n != k} r_n)
    x = lr[k] - logsumexp(_others(lr, k))
    # ln(ln(1 + e^x)), kept finite at both tails.
    if x > 30.0:
        log_num = math.log(np.logaddexp(0.0, x))
    elif x > -700.0:
        log_num = math.log(math.log1p(math.exp(x)))
    else:
        log_num = x
    return log_num - lr[k]


def optimal_tau(lrates: Sequence, k: int) -> float:
    """Maximizer of :func:`success_probability`: ``ln(1 + r_k / sum_{n != k} r_n) / r_k``."""
    return math.exp(log_optimal_tau(lrates, k))


def max_success_probability(lrates: Sequence, k: int) -> float:
    """Value of :func:`success_probability` at :func:`optimal_tau`.

    ``P* = (S / T)**(S / r_k) * (r_k / T)`` with ``S = sum_{n != k} r_n`` and
    ``T = S + r_k``.
    """
    lr = np.asarray(lrates, dtype=float)
    if lr.size < 2:
        raise ValueError("max success probability needs at least two users")
    d = logsumexp(_others(lr, k)) - lr[k]  # ln(S / r_k)
    log_s_over_t = -np.logaddexp(0.0, -d)
    log_rk_over_t = -np.logaddexp(0.0, d)
    if d > _EXP_SAT:
        return 0.0
    return float(np.exp(math.exp(d) * log_s_over_t + log_rk_over_t))


def tau_bounds(n_users: int, b: float, w_m: float) -> tuple[float, float]:
    """``(log tau_l, tau_u)``: ``tau_u = ln(1 + 1/(N-1))`` and ``tau_l = tau_u / b**w_m``.

    ``tau_l`` is returned as a logarithm because ``b**w_m`` overflows.
    """
    if not b > 1:
        raise ValueError("b must exceed 1")
    if w_m < 0:
        raise ValueError("w_m must be nonnegative")
    tau_u = contention_constant(n_users)
    return math.log(tau_u) - w_m * math.log(b), tau_u


def theorem1_queue_bound(n_users: int, delta: float, epsilon: float, b: float, r_min: float) -> float:
    """Queue size above which the backoff race puts less than ``delta`` mass on
    users whose weight is below ``(1 - epsilon) * w_max``.

    ``(log_b N + log_b(1/delta)) / (r_min * epsilon)``
    """
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not b > 1:
        raise ValueError("b must exceed 1")
    if not r_min > 0:
        raise ValueError("r_min must be positive")
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    lb = math.log(b)
    return (math.log(n_users) / lb + math.log(1.0 / delta) / lb) / (r_min * epsilon)


def attempt_probabilities(weights, alpha: float, b: float, n_users: int) -> np.ndarray:
    """``Pr[X_n < tau]`` for ``X_n ~ Exp(b**w_n)`` and ``tau = c / b**alpha``,
    i.e. ``1 - exp(-c * b**(w_n - alpha))``."""
    c = contention_constant(n_users)
    lx = math.log(c) + (np.asarray(weights, dtype=float) - alpha) * math.log(b)
    x = np.exp(np.minimum(lx, _EXP_SAT))
    return -np.expm1(-x)


def attempt_probability(w: float, alpha: float, b: float, n_users: int) -> float:
    if not b > 1:
        raise ValueError("b must exceed 1")
    return float(attempt_probabilities(np.array([w]), alpha, b, n_users)[0])


def _alpha_for(log_tau: float, c: float, b: float) -> float:
    return (math.log(c) - log_tau) / math.log(b)


def rs_schedule(
    weights: Sequence,
    cfg: RsConfig,
    state: RsControllerState,
    rng: np.random.Generator,
    *,
    adapt: bool = True,
    sample_backoffs: bool = False,
) -> tuple[ScheduleDecision, RsControllerState]:
    """Resolve one data slot by mini-slot reservation.

    Every mini-slot each user attempts independently with
    :func:`attempt_probabilities`; one attempter wins, a collision raises
    ``alpha`` by ``delta`` and an idle mini-slot lowers it. Streaks longer
    than ``collthr``/``idlethr`` step the ``b`` ladder down/up. The slot
    starts on the top rung. With ``cfg.carry == "alpha"`` it keeps the
    exponent that resolved the previous slot; with ``"tau"`` it keeps the
    threshold value itself and re-expresses it under the top rung.

    ``adapt=False`` freezes ``alpha`` and ``v`` (used by oracles).
    ``sample_backoffs=True`` draws the exponential backoffs explicitly
    instead of Bernoulli attempt indicators; the two are equal in law.
    """
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n != state.n_users:
        raise ValueError(f"controller built for {state.n_users} users, got {n} weights")
    if n < 2:
        raise ValueError("rs_schedule needs at least two users")
    c = contention_constant(n)
    ladder = cfg.b_ladder
    top = len(ladder) - 1
    st = RsControllerState(**vars(state))
    if adapt:
        st.v = top
        if cfg.carry == "tau":
            st.alpha = min(max(_alpha_for(st.log_tau_prev, c, ladder[top]), 0.0), st.w_m)
        st.cons_coll = 0
        st.cons_idle = 0
    w_max = w.max()
    dec = ScheduleDecision(winner=None)
    log_c = math.log(c)
    while dec.minislots < cfg.minislot_cap:
        b = ladder[st.v]
        lb = math.log(b)
        dec.minislots += 1
        if sample_backoffs:
            log_tau = log_c - st.alpha * lb
            attempts = np.log(rng.standard_exponential(n)) - w * lb < log_tau
        else:
            attempts = rng.random(n) < attempt_probabilities(w, st.alpha, b, n)
        count = int(np.count_nonzero(attempts))
        if count == 1:
            dec.winner = int(np.flatnonzero(attempts)[0])
            dec.was_max_weight = bool(w[dec.winner] == w_max)
            st.log_tau_prev = log_c - st.alpha * lb
            return dec, st
        if count > 1:
            dec.collisions += 1
            if not adapt:
                continue
            st.alpha += cfg.delta
            st.cons_coll += 1
            st.cons_idle = 0
            if st.cons_coll > cfg.collthr:
                st.v = max(0, st.v - 1)
                st.cons_coll = 0
        else:
            dec.idles += 1
            if not adapt:
                continue
            st.alpha -= cfg.delta
            st.cons_idle += 1
            st.cons_coll = 0
            if st.cons_idle > cfg.idlethr:
                st.v = min(top, st.v + 1)
                st.cons_idle = 0
        st.alpha = min(max(st.alpha, 0.0), st.w_m)
    dec.cap_hit = True
    return dec, st
