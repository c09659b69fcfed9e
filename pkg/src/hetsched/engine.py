"""Deterministic event-driven simulation core.

Virtual time is dimensionless: one time unit equals the mean work of a
unit-size task processed at rate 1.  All randomness flows through named
sub-streams derived from a single seed, so changing one consumer (say, a
policy parameter) never perturbs the draws seen by another (say, the
arrival process).  That separation is what makes paired policy
comparisons on a shared arrival trace meaningful.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random

import numpy as np

from .errors import ConfigurationError, SimulationFault

# Event kinds.  Ties at equal times are broken by insertion sequence, never
# by kind, so replaying a seed reproduces the trace byte for byte.
JOB_ARRIVAL = 0
TASK_COMPLETION = 1
BENCHMARK_ARRIVAL = 2
SPEED_SHOCK = 3
METRICS_SAMPLE = 4

EVENT_NAMES = {
    JOB_ARRIVAL: "JobArrival",
    TASK_COMPLETION: "TaskCompletion",
    BENCHMARK_ARRIVAL: "BenchmarkArrival",
    SPEED_SHOCK: "SpeedShock",
    METRICS_SAMPLE: "MetricsSample",
}

SUBSTREAMS = ("arrivals", "service", "policy", "benchmark", "shocks")


class RandomStream:
    """Named, mutually independent random sub-streams under one 64-bit seed.

    ``rng(name)`` returns a ``random.Random`` for one-at-a-time draws in the
    event loop; ``generator(name)`` returns a numpy Generator for block draws
    in the discrete-chain kernels.  Both are derived from sha256(seed, name)
    so the same (seed, config) always yields the same trace.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._py: dict[str, random.Random] = {}
        self._np: dict[str, np.random.Generator] = {}

    def _derive(self, name: str, family: str) -> int:
        digest = hashlib.sha256(f"{self.seed}:{family}:{name}".encode()).digest()
        return int.from_bytes(digest[:8], "big")

    def rng(self, name: str) -> random.Random:
        if name not in self._py:
            self._py[name] = random.Random(self._derive(name, "py"))
        return self._py[name]

    def generator(self, name: str) -> np.random.Generator:
        if name not in self._np:
            bits = np.random.PCG64(self._derive(name, "np"))
            self._np[name] = np.random.Generator(bits)
        return self._np[name]


def sample_exponential(rng: random.Random, rate: float) -> float:
    """One exponential draw with mean 1/rate; advances the stream exactly once."""
    if not isinstance(rate, (int, float)) or not math.isfinite(rate) or rate <= 0:
        raise ConfigurationError(f"exponential rate must be finite and positive, got {rate!r}")
    return rng.expovariate(rate)


class EventQueue:
    """Priority queue ordered by (time, insertion sequence).

    The sequence number is assigned at insertion and never reused, which
    makes the ordering a strict total order and the pop order deterministic
    even when many events share a timestamp.
    """

    def __init__(self):
        self._heap: list[tuple[float, int, int, object]] = []
        self._seq = 0
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, kind: int, payload=None) -> int:
        if not math.isfinite(time):
            raise SimulationFault(f"non-finite event time {time!r}")
        if time < self.now:
            raise SimulationFault(
                f"event scheduled at {time} before current clock {self.now}"
            )
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        return self._seq

    def pop(self):
        """Remove and return the minimal event, advancing the clock.

        Returns None when the queue is empty: that is the simulation-complete
        signal, not a fault.
        """
        if not self._heap:
            return None
        record = heapq.heappop(self._heap)
        self.now = record[0]
        return record

    def peek_time(self):
        return self._heap[0][0] if self._heap else None


class DiscreteChainState:
    """Queue lengths of the coupled discrete-time model, one entry per worker."""

    __slots__ = ("queues", "rounds")

    def __init__(self, queues):
        self.queues = list(queues)
        if any(q < 0 for q in self.queues):
            raise ConfigurationError("queue lengths must be non-negative")
        self.rounds = 0


def step_discrete(state: DiscreteChainState, lam: float, mu, route, rng: random.Random):
    """Advance the discrete chain one round.

    With probability lam/(lam+sum(mu)) one job arrives and ``route(queues, u)``
    places it (u is a fresh uniform for the policy); otherwise a processing
    event fires at worker i with probability mu_i/(lam+sum(mu)), removing one
    job if any is queued and doing nothing on an empty queue.  Exactly one
    branch happens per call.

    This is the reference implementation used by the oracle cross-checks;
    the bulk runners in ``simulation`` use a block-random equivalent.
    """
    if lam <= 0 or not math.isfinite(lam):
        raise ConfigurationError(f"arrival rate must be positive, got {lam!r}")
    total_mu = 0.0
    for m in mu:
        if m < 0 or not math.isfinite(m):
            raise ConfigurationError(f"service rates must be non-negative, got {m!r}")
        total_mu += m
    if total_mu <= 0:
        raise ConfigurationError("at least one service rate must be positive")

    total = lam + total_mu
    u = rng.random() * total
    if u < lam:
        target = route(state.queues, rng.random())
        state.queues[target] += 1
    else:
        # Reuse the residual mass to pick the processing worker; conditional
        # on "not an arrival" it is uniform over the mu weights.
        u -= lam
        acc = 0.0
        worker = len(state.queues) - 1
        for i, m in enumerate(mu):
            acc += m
            if u < acc:
                worker = i
                break
        if state.queues[worker] > 0:
            state.queues[worker] -= 1
    state.rounds += 1
    return state
