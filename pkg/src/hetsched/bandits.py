"""Exponential-weight bandit schedulers and their regret bookkeeping.

Exp3 keeps one weight per worker; Exp4 keeps one weight per expert and
mixes expert advice rows (here: the proportional-sampling expert and the
uniform expert).  Rewards are shaped into [0,1] from the task duration
scale and the serving worker's rate: the slowest worker earns 0, an
infinitely fast one earns t_d / L_max.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import RandomStream, sample_exponential
from .errors import ConfigurationError, SimulationFault

# Renormalize weights when they outgrow this, probabilities are invariant.
_WEIGHT_CEILING = 1e100


@dataclass
class RewardConfig:
    s_min: float    # slowest configured worker speed
    l_max: float    # longest task duration scale

    def __post_init__(self):
        if self.s_min <= 0:
            raise ConfigurationError("s_min must be positive")
        if self.l_max <= 0:
            raise ConfigurationError("l_max must be positive")


def reward(t_d: float, rate: float, s_min: float, l_max: float) -> float:
    """(t_d / l_max) * (1 - s_min / rate), clamped to 0 for rates that have
    drifted below the configured floor."""
    if s_min <= 0 or l_max <= 0:
        raise ConfigurationError("reward scales must be positive")
    if t_d < 0 or t_d > l_max:
        raise SimulationFault(f"task duration {t_d} outside [0, {l_max}]")
    if rate < s_min:
        return 0.0
    return (t_d / l_max) * (1.0 - s_min / rate)


class Exp3State:
    """One weight per arm; selection mixes the weight profile with a gamma
    floor of uniform exploration, so every arm keeps probability >= gamma/K."""

    def __init__(self, k: int, gamma: float):
        if k < 2:
            raise ConfigurationError("Exp3 needs at least two arms")
        if not 0 < gamma <= 1:
            raise ConfigurationError(f"gamma must be in (0,1], got {gamma!r}")
        self.k = k
        self.gamma = gamma
        self.weights = [1.0] * k
        self.cumulative_reward = 0.0
        self.rounds = 0

    def probabilities(self) -> list[float]:
        total = math.fsum(self.weights)
        g, k = self.gamma, self.k
        return [(1.0 - g) * w / total + g / k for w in self.weights]

    def update(self, chosen: int, x: float, p_chosen: float):
        """Importance-weighted update of the chosen arm only."""
        if not 0.0 <= x <= 1.0:
            raise SimulationFault(f"reward {x} outside [0,1]: shaping bug")
        x_hat = x / p_chosen
        self.weights[chosen] *= math.exp(self.gamma * x_hat / self.k)
        self.cumulative_reward += x
        self.rounds += 1
        top = max(self.weights)
        if top > _WEIGHT_CEILING:
            self.weights = [w / top for w in self.weights]


class Exp4State:
    """Expert-advice variant: weights live on experts, probabilities are the
    gamma-floored mixture of the advice rows."""

    def __init__(self, k: int, gamma: float, n_experts: int = 2):
        if k < 2:
            raise ConfigurationError("Exp4 needs at least two arms")
        if not 0 < gamma <= 1:
            raise ConfigurationError(f"gamma must be in (0,1], got {gamma!r}")
        self.k = k
        self.gamma = gamma
        self.n_experts = n_experts
        self.weights = [1.0] * n_experts
        self.cumulative_reward = 0.0
        self.rounds = 0

    def _check_advice(self, advice):
        if len(advice) != self.n_experts:
            raise SimulationFault(
                f"expected {self.n_experts} advice rows, got {len(advice)}"
            )
        for row in advice:
            if len(row) != self.k:
                raise SimulationFault("advice row length does not match arm count")
            if abs(math.fsum(row) - 1.0) > 1e-9:
                raise SimulationFault("expert advice row does not sum to 1")

    def mixture(self, advice) -> list[float]:
        self._check_advice(advice)
        total = math.fsum(self.weights)
        g, k = self.gamma, self.k
        probs = []
        for j in range(k):
            mass = math.fsum(self.weights[i] * advice[i][j] for i in range(self.n_experts))
            probs.append((1.0 - g) * mass / total + g / k)
        return probs

    def update(self, chosen: int, x: float, probs, advice):
        if not 0.0 <= x <= 1.0:
            raise SimulationFault(f"reward {x} outside [0,1]: shaping bug")
        x_hat = x / probs[chosen]
        for i in range(self.n_experts):
            y_hat = advice[i][chosen] * x_hat
            self.weights[i] *= math.exp(self.gamma * y_hat / self.k)
        self.cumulative_reward += x
        self.rounds += 1
        top = max(self.weights)
        if top > _WEIGHT_CEILING:
            self.weights = [w / top for w in self.weights]


# ---------------------------------------------------------------------------
# Regret bounds and the sequential bound-check harness


def theorem_bound(g_max: float, k: int, gamma: float) -> float:
    """(e-1) * gamma * G_max + K * ln(K) / gamma."""
    return (math.e - 1.0) * gamma * g_max + k * math.log(k) / gamma


def tuned_gamma(g: float, k: int) -> float:
    """gamma that balances the two bound terms when G_max <= g is known."""
    return min(1.0, math.sqrt(k * math.log(k) / ((math.e - 1.0) * g)))


def corollary_bound(g: float, k: int) -> float:
    """2.63 * sqrt(g * K * ln K), the bound at the tuned gamma."""
    return 2.63 * math.sqrt(g * k * math.log(k))


def run_exp3_regret(rates, rounds: int, seed: int, gamma: float | None = None,
                    task_mean: float = 1.0, l_max: float | None = None):
    """Sequential bandit run on a static worker set.

    Each round draws one task-duration scale t_d (exponential, clamped to
    l_max) that every arm shares; arm i pays (t_d/l_max)(1 - s_min/rate_i),
    so the best single arm is the fastest worker.  Returns realized reward
    totals, the weak regret, and the bound ingredients.
    """
    k = len(rates)
    if k < 2:
        raise ConfigurationError("need at least two workers")
    s_min = min(rates)
    fastest = max(rates)
    if l_max is None:
        l_max = 10.0 * task_mean
    expected_g = rounds * (task_mean / l_max) * (1.0 - s_min / fastest)
    if gamma is None:
        gamma = tuned_gamma(expected_g, k)

    streams = RandomStream(seed)
    task_rng = streams.rng("arrivals")
    pick_rng = streams.rng("policy")
    state = Exp3State(k, gamma)
    arm_totals = [0.0] * k
    trajectory = []  # (round, realized weak regret so far)

    for t in range(rounds):
        t_d = min(sample_exponential(task_rng, 1.0 / task_mean), l_max)
        probs = state.probabilities()
        u = pick_rng.random()
        acc = 0.0
        chosen = k - 1
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                chosen = i
                break
        for i, rate in enumerate(rates):
            arm_totals[i] += reward(t_d, rate, s_min, l_max)
        state.update(chosen, reward(t_d, rates[chosen], s_min, l_max), probs[chosen])
        if (t + 1) % 100 == 0:
            trajectory.append((t + 1, max(arm_totals) - state.cumulative_reward))

    g_max = max(arm_totals)
    g_alg = state.cumulative_reward
    return {
        "gamma": gamma,
        "g_max": g_max,
        "g_alg": g_alg,
        "regret": g_max - g_alg,
        "g_bound": expected_g,
        "theorem_bound": theorem_bound(g_max, k, gamma),
        "corollary_bound": corollary_bound(expected_g, k),
        "arm_totals": arm_totals,
        "trajectory": trajectory,
    }
