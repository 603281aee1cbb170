"""Slot engine: channels -> contention -> service -> arrivals -> clamp."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .model import INFINITE_BUFFER, ArrivalSpec, ChannelSpec, make_streams, update_queues
from .policies import (
    AbConfig,
    RsConfig,
    RsControllerState,
    ab_race,
    mw_schedule,
    rs_schedule,
)

POLICIES = ("mw", "ab", "rs")

# Per-user channel/arrival draws are generated this many slots at a time.
_CHUNK = 4096

UNSTABLE_OCCUPANCY = 0.8
UNSTABLE_DROP_RATE = 0.01


@dataclass(frozen=True)
class SimConfig:
    channel: ChannelSpec
    arrivals: ArrivalSpec
    slots: int = 200_000
    buffer: int = 200
    policy: str = "mw"
    ab: AbConfig = field(default_factory=AbConfig)
    rs: RsConfig = field(default_factory=RsConfig)
    seed: int = 0
    warmup: Optional[int] = None
    record_series: bool = True
    debug: bool = False

    def __post_init__(self):
        n = self.channel.n_users
        if n < 1:
            raise ValueError("need at least one user")
        if len(self.arrivals.lam) != n:
            raise ValueError(f"arrivals given for {len(self.arrivals.lam)} users, channel for {n}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if self.buffer < 1:
            raise ValueError("buffer must be >= 1")
        if not 0 <= self.warmup_slots < self.slots:
            raise ValueError(f"warmup must satisfy 0 <= warmup < slots, got {self.warmup_slots}")
        if self.policy == "rs" and n < 2:
            raise ValueError("DMW-RS needs at least two users")
        if self.policy == "rs" and self.buffer >= INFINITE_BUFFER:
            raise ValueError("DMW-RS needs a finite buffer: its threshold range is set by B * r_L")

    @property
    def n_users(self) -> int:
        return self.channel.n_users

    @property
    def warmup_slots(self) -> int:
        return self.slots // 10 if self.warmup is None else int(self.warmup)

    @property
    def w_m(self) -> float:
        return float(self.buffer * self.channel.r_max)


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    final_quarter_mean: float
    slope: float
    drop_rate: float

    def __str__(self):
        return "stable" if self.stable else "unstable"


@dataclass
class Metrics:
    policy: str
    n_users: int
    slots: int
    warmup: int
    arrival_total: float
    avg_total_queue: float
    per_user_avg_queue: np.ndarray
    throughput: float
    drop_rate: float
    mean_minislots: float
    minislot_hist: np.ndarray
    max_weight_fraction: float
    expected_max_weight_fraction: float
    expected_max_weight_sd: float
    collisions: int
    idles: int
    cap_hits: int
    ties: int
    contended_slots: int
    verdict: StabilityVerdict
    arrivals_per_user: np.ndarray
    served_per_user: np.ndarray
    drops_per_user: np.ndarray
    initial_queue: np.ndarray
    final_queue: np.ndarray
    total_queue_series: Optional[np.ndarray] = None

    @property
    def stable(self) -> bool:
        return self.verdict.stable


def detect_stability(series, buffer: int, n_users: int, arrivals: float = 0.0, drops: float = 0.0) -> StabilityVerdict:
    """Classify a post-warmup total-queue series as stable or unstable.

    Unstable when the last quarter averages above 80% of total buffer
    space or more than 1% of arrivals were dropped. With the infinite
    buffer the occupancy test is replaced by a growth test: the fitted
    trend over the second half must not add more than half that half's mean.
    """
    s = np.asarray(series, dtype=float)
    if s.size < 4:
        raise ValueError("series too short to judge stability")
    tail = s[-(s.size // 4):]
    fq_mean = float(tail.mean())
    t = np.arange(s.size, dtype=float)
    slope = float(np.polyfit(t, s, 1)[0])
    drop_rate = drops / arrivals if arrivals > 0 else 0.0
    if buffer >= INFINITE_BUFFER:
        half = s[s.size // 2:]
        h_slope = float(np.polyfit(np.arange(half.size, dtype=float), half, 1)[0])
        saturated = h_slope * half.size > max(0.5 * half.mean(), 1.0)
    else:
        saturated = fq_mean > UNSTABLE_OCCUPANCY * n_users * buffer
    stable = not (saturated or drop_rate > UNSTABLE_DROP_RATE)
    return StabilityVerdict(stable, fq_mean, slope, drop_rate)


def _top_mass(weights: np.ndarray, w_top, log_b: float) -> float:
    # Race win probability summed over the users tied at the top weight.
    e = np.exp((weights - w_top) * log_b)
    return float(e[weights == w_top].sum() / e.sum())


def _draw_chunk(cfg: SimConfig, user_rngs, length: int):
    n = cfg.n_users
    u = np.empty((length, n))
    arr = np.empty((length, n), dtype=np.int64)
    for i, g in enumerate(user_rngs):
        u[:, i] = g.random(length)
        arr[:, i] = g.poisson(cfg.arrivals.lam[i], length)
    return cfg.channel.rates_from_uniforms(u), arr


def run(cfg: SimConfig) -> Metrics:
    n = cfg.n_users
    user_rngs, env = make_streams(cfg.seed, n)
    warm = cfg.warmup_slots
    q = np.zeros(n, dtype=np.int64)
    q0 = q.copy()
    series = np.zeros(cfg.slots, dtype=np.int64)
    arrivals_u = np.zeros(n, dtype=np.int64)
    served_u = np.zeros(n, dtype=np.int64)
    drops_u = np.zeros(n, dtype=np.int64)
    queue_sum = np.zeros(n, dtype=np.int64)
    hist = np.zeros(16, dtype=np.int64)
    served_after = arrivals_after = drops_after = 0
    contended = mw_hits = collisions = idles = cap_hits = ties = 0
    expected_mw = expected_var = 0.0
    minislot_sum = 0
    rs_state = RsControllerState.initial(cfg.rs, n, cfg.w_m) if cfg.policy == "rs" else None
    serve = np.zeros(n, dtype=np.int64)

    log_b = math.log(cfg.ab.b)
    rates_chunk = arr_chunk = None
    for t in range(cfg.slots):
        j = t % _CHUNK
        if j == 0:
            rates_chunk, arr_chunk = _draw_chunk(cfg, user_rngs, min(_CHUNK, cfg.slots - t))
        rate = rates_chunk[j]
        a = arr_chunk[j]
        weights = q * rate
        winner = None
        if q.any():
            if cfg.policy == "mw":
                winner = mw_schedule(weights)
                is_max = True
            elif cfg.policy == "ab":
                winner, tied = ab_race(weights, cfg.ab.b, env)
                ties += tied
                w_top = weights.max()
                is_max = weights[winner] == w_top
                if t >= warm:
                    p_top = _top_mass(weights, w_top, log_b)
                    expected_mw += p_top
                    expected_var += p_top * (1.0 - p_top)
            else:
                dec, rs_state = rs_schedule(weights, cfg.rs, rs_state, env)
                winner, is_max = dec.winner, dec.was_max_weight
                if t >= warm:
                    collisions += dec.collisions
                    idles += dec.idles
                    cap_hits += dec.cap_hit
                    minislot_sum += dec.minislots
                    if dec.minislots >= hist.size:
                        hist = np.pad(hist, (0, dec.minislots + 1 - hist.size))
                    hist[dec.minislots] += 1
            if t >= warm:
                contended += 1
                if winner is not None and is_max:
                    mw_hits += 1
        serve[:] = 0
        if winner is not None:
            serve[winner] = rate[winner]
        q, drops, removed = update_queues(q, a, serve, cfg.buffer)
        arrivals_u += a
        served_u += removed
        drops_u += drops
        if t >= warm:
            queue_sum += q
            arrivals_after += int(a.sum())
            served_after += int(removed.sum())
            drops_after += int(drops.sum())
        series[t] = q.sum()
        if cfg.debug:
            assert q.min() >= 0 and q.max() <= cfg.buffer, f"queue out of range at slot {t}"
            assert np.array_equal(arrivals_u, served_u + drops_u + q - q0), f"flow conservation broken at slot {t}"

    horizon = cfg.slots - warm
    post = series[warm:]
    verdict = detect_stability(post, cfg.buffer, n, arrivals_after, drops_after)
    if cfg.policy != "rs":
        hist[0] = contended
    return Metrics(
        policy=cfg.policy,
        n_users=n,
        slots=cfg.slots,
        warmup=warm,
        arrival_total=cfg.arrivals.total,
        avg_total_queue=float(post.mean()),
        per_user_avg_queue=queue_sum / horizon,
        throughput=served_after / horizon,
        drop_rate=drops_after / arrivals_after if arrivals_after else 0.0,
        mean_minislots=minislot_sum / contended if contended else 0.0,
        minislot_hist=hist,
        max_weight_fraction=mw_hits / contended if contended else 1.0,
        expected_max_weight_fraction=(
            expected_mw / contended if cfg.policy == "ab" and contended else float("nan")
        ),
        expected_max_weight_sd=(
            math.sqrt(expected_var) / contended if cfg.policy == "ab" and contended else float("nan")
        ),
        collisions=collisions,
        idles=idles,
        cap_hits=cap_hits,
        ties=ties,
        contended_slots=contended,
        verdict=verdict,
        arrivals_per_user=arrivals_u,
        served_per_user=served_u,
        drops_per_user=drops_u,
        initial_queue=q0,
        final_queue=q,
        total_queue_series=series if cfg.record_series else None,
    )


def derive_seed(base_seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=tuple(key)).generate_state(1)[0])


@dataclass(frozen=True)
class SweepRow:
    arrival_total: float
    policy: str
    seed: int
    metrics: Metrics


def _run_cell(args):
    return run(args)


def sweep(base: SimConfig, arrival_grid: Sequence[float], policies: Sequence[str] = POLICIES, jobs: int = 1) -> list[SweepRow]:
    """Run every (arrival, policy) cell.

    Each arrival point gets its own seed derived from ``base.seed``; all
    policies at that point share it, so they see the same channel and
    arrival sample paths.
    """
    if not arrival_grid or not policies:
        raise ValueError("arrival_grid and policies must be nonempty")
    n = base.n_users
    cells = []
    for i, total in enumerate(arrival_grid):
        seed = derive_seed(base.seed, i)
        for p in policies:
            cells.append(replace(base, arrivals=ArrivalSpec.uniform(float(total), n), policy=p, seed=seed))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [run(c) for c in cells]
    return [SweepRow(c.arrivals.total, c.policy, c.seed, m) for c, m in zip(cells, results)]
