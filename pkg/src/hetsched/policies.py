"""Dispatch policies.

All candidate sampling goes through one inverse-CDF sampler over an
explicit weight vector, so classical power-of-two (uniform weights) and
its proportional generalization consume randomness identically: with
equal estimates the two make the same picks from the same stream.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

from .errors import ConfigurationError, SimulationFault

UNIFORM = "Uniform"
POT = "PoT"
PSS = "PSS"
PPOT_SQ = "PPoT_SQ"
PPOT_LL = "PPoT_LL"
GREEDY_SQ = "GreedySQ"
GREEDY_LL = "GreedyLL"
MULTI_ARMED = "MultiArmed"
EXP3 = "Exp3"
EXP4 = "Exp4"

POLICY_KINDS = (
    UNIFORM, POT, PSS, PPOT_SQ, PPOT_LL,
    GREEDY_SQ, GREEDY_LL, MULTI_ARMED, EXP3, EXP4,
)

ORACLE = "oracle"
LEARNED = "learned"
SPEED_SOURCES = (ORACLE, LEARNED)

# Policies whose candidate draws are weighted by speed estimates.
PROPORTIONAL_KINDS = frozenset({PSS, PPOT_SQ, PPOT_LL, MULTI_ARMED, EXP4})


@dataclass
class PolicyConfig:
    kind: str
    explore_prob: float | None = None  # MultiArmed only
    gamma: float | None = None         # Exp3 / Exp4 only
    speed_source: str = ORACLE

    def validate(self):
        if self.kind not in POLICY_KINDS:
            raise ConfigurationError(f"unknown policy kind {self.kind!r}")
        if self.speed_source not in SPEED_SOURCES:
            raise ConfigurationError(f"unknown speed_source {self.speed_source!r}")
        if self.kind == MULTI_ARMED:
            if self.explore_prob is None or not 0.0 <= self.explore_prob <= 1.0:
                raise ConfigurationError(
                    f"{MULTI_ARMED} needs explore_prob in [0,1], got {self.explore_prob!r}"
                )
        elif self.explore_prob is not None:
            raise ConfigurationError(f"explore_prob is only valid for {MULTI_ARMED}")
        if self.kind in (EXP3, EXP4):
            if self.gamma is None or not 0.0 < self.gamma <= 1.0:
                raise ConfigurationError(
                    f"{self.kind} needs gamma in (0,1], got {self.gamma!r}"
                )
        elif self.gamma is not None:
            raise ConfigurationError("gamma is only valid for Exp3/Exp4")
        return self

    def label(self) -> str:
        """Policy name as it appears in config files and CSV columns."""
        parts = [self.kind]
        if self.kind == MULTI_ARMED:
            parts.append(f"eta={self.explore_prob:g}")
        if self.kind in (EXP3, EXP4):
            parts.append(f"gamma={self.gamma:g}")
        if self.speed_source == LEARNED:
            parts.append("learned")
        return "[" + ",".join(parts) + "]" if len(parts) > 1 else parts[0]


def proportional_weights(mu_hat):
    """Sampling probabilities proportional to the speed estimates.

    Zero-rate workers get probability exactly 0.  With every estimate at
    zero (cold start) the rule degrades to uniform over all workers; the
    second return value flags that mode so callers can count it.
    """
    total = 0.0
    for m in mu_hat:
        if m < 0 or not math.isfinite(m):
            raise ConfigurationError(f"speed estimates must be non-negative, got {m!r}")
        total += m
    n = len(mu_hat)
    if n == 0:
        raise ConfigurationError("empty speed vector")
    if total <= 0.0:
        return [1.0 / n] * n, True
    return [m / total for m in mu_hat], False


def candidate_marginal(weights, i: int) -> float:
    """Probability that worker i appears among two independent draws."""
    p = weights[i]
    return 1.0 - (1.0 - p) ** 2


class WeightedSampler:
    """Inverse-CDF sampler over a fixed weight vector.

    Zero-weight entries are never drawn.  An all-zero vector falls back to
    uniform (cold-start rule) and is reported via ``degraded``.
    """

    __slots__ = ("cum", "total", "n", "degraded", "_last_positive")

    def __init__(self, weights):
        self.n = len(weights)
        if self.n == 0:
            raise ConfigurationError("sampler needs at least one weight")
        cum = []
        acc = 0.0
        last_positive = -1
        for i, w in enumerate(weights):
            if w < 0 or not math.isfinite(w):
                raise ConfigurationError(f"weights must be non-negative, got {w!r}")
            if w > 0:
                last_positive = i
            acc += w
            cum.append(acc)
        self.degraded = acc <= 0.0
        if self.degraded:
            cum = [float(i + 1) for i in range(self.n)]
            acc = float(self.n)
            last_positive = self.n - 1
        self.cum = cum
        self.total = acc
        self._last_positive = last_positive

    def draw(self, u: float) -> int:
        idx = bisect_right(self.cum, u * self.total)
        if idx >= self.n:
            idx = self._last_positive
        return idx


def uniform_sampler(n: int) -> WeightedSampler:
    return WeightedSampler([1.0] * n)


def _sq_pick(queues, j1: int, j2: int) -> int:
    # Ties and j1 == j2 resolve to the first draw: keeps the pick a pure
    # function of (draws, queues) for replay stability.
    return j1 if queues[j1] <= queues[j2] else j2


def _ll_pick(queues, mu_hat, j1: int, j2: int) -> int:
    w1 = (queues[j1] + 1) / mu_hat[j1] if mu_hat[j1] > 0 else math.inf
    w2 = (queues[j2] + 1) / mu_hat[j2] if mu_hat[j2] > 0 else math.inf
    if math.isinf(w1) and math.isinf(w2):
        raise SimulationFault("both candidates have zero estimated rate")
    return j1 if w1 <= w2 else j2


def select_worker(kind, queues, mu_hat, sampler, uniform, rng, explore_prob=None):
    """Pick the worker that receives the next task.

    ``sampler`` draws candidates proportionally to the active speed
    estimates; ``uniform`` draws over all n workers.  Greedy variants scan
    every queue and break ties toward the lowest id.
    """
    if kind == UNIFORM:
        return uniform.draw(rng.random())
    if kind == POT:
        j1 = uniform.draw(rng.random())
        j2 = uniform.draw(rng.random())
        return _sq_pick(queues, j1, j2)
    if kind == PSS:
        return sampler.draw(rng.random())
    if kind == PPOT_SQ:
        j1 = sampler.draw(rng.random())
        j2 = sampler.draw(rng.random())
        return _sq_pick(queues, j1, j2)
    if kind == PPOT_LL:
        j1 = sampler.draw(rng.random())
        j2 = sampler.draw(rng.random())
        return _ll_pick(queues, mu_hat, j1, j2)
    if kind == GREEDY_SQ:
        return min(range(len(queues)), key=lambda i: (queues[i], i))
    if kind == GREEDY_LL:
        best, best_wait = -1, math.inf
        for i, q in enumerate(queues):
            if mu_hat[i] <= 0:
                continue
            wait = (q + 1) / mu_hat[i]
            if wait < best_wait:
                best, best_wait = i, wait
        if best < 0:
            raise SimulationFault("greedy least-loaded saw no worker with positive rate")
        return best
    if kind == MULTI_ARMED:
        if rng.random() < explore_prob:
            return uniform.draw(rng.random())
        j1 = sampler.draw(rng.random())
        j2 = sampler.draw(rng.random())
        return _sq_pick(queues, j1, j2)
    raise ConfigurationError(f"select_worker cannot handle policy kind {kind!r}")
