"""System model: discrete-rate fading channels, Poisson arrivals, finite queues.

All sampling goes through :class:`numpy.random.Generator` objects obtained
from :func:`make_streams`, one per user plus one shared environment stream,
so that a simulation is fully determined by its integer seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Buffer size used for the "infinite buffer" mode.
INFINITE_BUFFER = 2**40

PMF_TOL = 1e-12


@dataclass(frozen=True)
class ChannelSpec:
    """Rate set shared by all users and one probability mass function per user."""

    rates: tuple[int, ...]
    pmf: tuple[tuple[float, ...], ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rates = tuple(int(r) for r in self.rates)
        if len(rates) == 0 or any(r <= 0 for r in rates):
            raise ValueError(f"rates must be positive, got {self.rates!r}")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError(f"rates must be strictly increasing, got {self.rates!r}")
        pmf = tuple(tuple(float(p) for p in row) for row in self.pmf)
        if len(pmf) == 0:
            raise ValueError("pmf needs at least one user")
        for n, row in enumerate(pmf):
            if len(row) != len(rates):
                raise ValueError(f"user {n}: pmf has {len(row)} entries for {len(rates)} rates")
            if any(p < 0 for p in row):
                raise ValueError(f"user {n}: negative probability in {row!r}")
            if abs(sum(row) - 1.0) > PMF_TOL:
                raise ValueError(f"user {n}: pmf sums to {sum(row)!r}, not 1")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "pmf", pmf)
        cdf = np.cumsum(np.asarray(pmf, dtype=float), axis=1)
        cdf[:, -1] = 1.0
        object.__setattr__(self, "_cdf", cdf)

    @classmethod
    def grouped(cls, rates: Sequence[int], groups: Sequence[Sequence[float]], n_users: int) -> "ChannelSpec":
        """Split ``n_users`` into ``len(groups)`` contiguous, near-equal blocks.

        With two groups and 20 users this gives users 0-9 the first pmf and
        users 10-19 the second.
        """
        if n_users < 1:
            raise ValueError("n_users must be >= 1")
        bounds = np.linspace(0, n_users, len(groups) + 1).round().astype(int)
        pmf = []
        for g, row in enumerate(groups):
            pmf.extend([tuple(row)] * int(bounds[g + 1] - bounds[g]))
        return cls(tuple(rates), tuple(pmf))

    @property
    def n_users(self) -> int:
        return len(self.pmf)

    @property
    def r_min(self) -> int:
        return self.rates[0]

    @property
    def r_max(self) -> int:
        return self.rates[-1]

    def mean_rate(self, user: int) -> float:
        return float(np.dot(self.rates, self.pmf[user]))

    def rates_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF map of a ``(..., n_users)`` uniform array to channel rates."""
        u = np.asarray(u)
        idx = (u[..., None] >= self._cdf).sum(axis=-1)
        return np.asarray(self.rates, dtype=np.int64)[np.minimum(idx, len(self.rates) - 1)]


@dataclass(frozen=True)
class ArrivalSpec:
    """Per-user Poisson arrival means, in packets per slot."""

    lam: tuple[float, ...]

    def __post_init__(self):
        lam = tuple(float(x) for x in self.lam)
        if any(not np.isfinite(x) or x < 0 for x in lam):
            raise ValueError(f"arrival rates must be finite and >= 0, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, total: float, n_users: int) -> "ArrivalSpec":
        return cls((total / n_users,) * n_users)

    @property
    def total(self) -> float:
        return float(sum(self.lam))


@dataclass
class NodeState:
    queue: int
    buffer: int
    rate: int = 0

    def __post_init__(self):
        if self.buffer <= 0:
            raise ValueError("buffer must be positive")
        if not 0 <= self.queue <= self.buffer:
            raise ValueError(f"queue {self.queue} outside [0, {self.buffer}]")

    @property
    def weight(self) -> int:
        return self.queue * self.rate


def make_streams(seed: int, n_users: int) -> tuple[list[np.random.Generator], np.random.Generator]:
    """Independent per-user generators and one environment generator."""
    children = np.random.SeedSequence(seed).spawn(n_users + 1)
    users = [np.random.default_rng(s) for s in children[:n_users]]
    return users, np.random.default_rng(children[n_users])


def sample_channel(spec: ChannelSpec, user: int, rng: np.random.Generator) -> int:
    """Draw ``R_n(t)`` for one user from a single uniform variate."""
    u = rng.random()
    cdf = spec._cdf[user]
    idx = min(int(np.searchsorted(cdf, u, side="right")), len(spec.rates) - 1)
    return spec.rates[idx]


def sample_arrivals(spec: ArrivalSpec, user: int, rng: np.random.Generator) -> int:
    return int(rng.poisson(spec.lam[user]))


def update_queues(queue, arrivals, served, buffer):
    """Vectorized queue recursion with tail drop.

    Returns ``(new_queue, drops, removed)`` where ``removed`` counts packets
    that actually left the queue this slot (at most ``queue + arrivals``).
    """
    queue = np.asarray(queue, dtype=np.int64)
    arrivals = np.asarray(arrivals, dtype=np.int64)
    served = np.asarray(served, dtype=np.int64)
    if np.any(arrivals < 0) or np.any(served < 0):
        raise ValueError("arrivals and served must be nonnegative")
    net = queue + arrivals - served
    removed = np.minimum(queue + arrivals, served)
    drops = np.maximum(net - buffer, 0)
    return np.clip(net, 0, buffer), drops, removed


def update_queue(state: NodeState, arrivals: int, served: int) -> tuple[NodeState, int]:
    """``Q <- min(B, [Q + A - S]^+)``; excess over ``B`` is dropped and counted."""
    q, drops, _ = update_queues(state.queue, arrivals, served, state.buffer)
    return NodeState(int(q), state.buffer, state.rate), int(drops)
