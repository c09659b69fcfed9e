"""Online learning layer: arrival-rate estimator, per-worker speed
estimates with a slow-worker cutoff, and the benchmark-probe dispatcher.

The speed estimate for a worker is (1 - eps) over the mean duration of its
last L completions, but only if those L completions arrived within a
wall-clock span of (1 + eps) * L / mu_star; workers too slow to clear that
bar are treated as dead (estimate 0) until benchmark probes revive them.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass

from .engine import sample_exponential
from .errors import ConfigurationError, SimulationFault

THEORETICAL = "theoretical"
PRACTICAL = "practical"
WINDOW_MODES = (THEORETICAL, PRACTICAL)

# Load ratio is clamped just under 1 when the arrival estimate exceeds the
# guaranteed throughput; the learner keeps running in that degraded regime.
ALPHA_CLAMP = 1.0 - 1e-3


@dataclass
class LearnerConfig:
    mu_bar: float                      # minimum guaranteed total throughput
    window_mode: str = THEORETICAL
    arrival_window: int = 100          # S, interarrival gaps kept
    c0: float = 0.1                    # benchmark-rate constant
    c1: float = 4.0                    # theoretical window constant
    window_c: float = 20.0             # practical window constant
    initial_lambda: float | None = None
    lambda_cap: float = 1e9
    window_max: int = 8192

    def __post_init__(self):
        if self.mu_bar <= 0 or not math.isfinite(self.mu_bar):
            raise ConfigurationError(f"mu_bar must be positive, got {self.mu_bar!r}")
        if self.window_mode not in WINDOW_MODES:
            raise ConfigurationError(f"unknown window mode {self.window_mode!r}")
        if self.arrival_window < 1:
            raise ConfigurationError("arrival window must hold at least one gap")
        if self.c0 < 0:
            raise ConfigurationError("c0 must be non-negative")
        if self.c1 <= 0 or self.window_c <= 0:
            raise ConfigurationError("window constants must be positive")
        if self.initial_lambda is None:
            self.initial_lambda = 0.5 * self.mu_bar


@dataclass
class LearnerParams:
    alpha_hat: float
    epsilon: float
    mu_star: float
    window_len: int
    overloaded: bool = False


class ArrivalEstimator:
    """Arrival rate as the reciprocal mean of the last S interarrival gaps."""

    def __init__(self, window: int, prior: float, cap: float = 1e9):
        self.window = window
        self.prior = prior
        self.cap = cap
        self.gaps: deque[float] = deque()
        self.gap_sum = 0.0
        self.last_arrival: float | None = None
        self.capped_events = 0

    @property
    def have_estimate(self) -> bool:
        return bool(self.gaps)

    @property
    def lambda_hat(self) -> float:
        if not self.gaps:
            return self.prior
        if self.gap_sum <= 0.0:
            # Simultaneous arrivals filled the whole window; cap and flag.
            self.capped_events += 1
            return self.cap
        return min(len(self.gaps) / self.gap_sum, self.cap)

    def record_arrival(self, now: float) -> float:
        if self.last_arrival is not None:
            gap = now - self.last_arrival
            if gap < 0:
                raise SimulationFault("arrival timestamps went backwards")
            self.gaps.append(gap)
            self.gap_sum += gap
            if len(self.gaps) > self.window:
                self.gap_sum -= self.gaps.popleft()
            if self.gap_sum < 0.0:  # float drift guard
                self.gap_sum = math.fsum(self.gaps)
        self.last_arrival = now
        return self.lambda_hat


def derive_params(lambda_hat, mu_bar, n, mode, c1=4.0, window_c=20.0,
                  window_max=8192, warn=True) -> LearnerParams:
    """Exploration tolerance, slow-worker cutoff, and window length.

    The theoretical window grows like ln(n)/eps^2 (union bound over
    workers); the practical one like window_c/(1-alpha).
    """
    if n < 1:
        raise ConfigurationError("need at least one worker")
    if lambda_hat <= 0:
        raise ConfigurationError("lambda_hat must be positive")
    overloaded = False
    alpha_hat = lambda_hat / mu_bar
    if alpha_hat >= 1.0:
        if warn:
            warnings.warn(
                f"estimated load {alpha_hat:.3f} >= 1; clamping (system overloaded)",
                RuntimeWarning, stacklevel=2,
            )
        alpha_hat = ALPHA_CLAMP
        overloaded = True
    epsilon = 0.3 * (1.0 - alpha_hat)
    mu_star = (1.0 - alpha_hat) / 10.0
    if mode == THEORETICAL:
        raw = c1 * math.log(n) / (epsilon * epsilon) if n > 1 else 1.0
    elif mode == PRACTICAL:
        raw = window_c / (1.0 - alpha_hat)
    else:
        raise ConfigurationError(f"unknown window mode {mode!r}")
    # Tolerant ceiling: 20/(1-0.8) must give 100, not 101, despite the
    # binary representation of 1-0.8 landing a hair below 0.2.
    window_len = max(1, min(math.ceil(raw - 1e-9), window_max))
    return LearnerParams(alpha_hat, epsilon, mu_star, window_len, overloaded)


class _CompletionLog:
    """Append-only finish times and prefix-summed durations for one worker.

    Gives O(1) access to the mean duration and wall-clock span of the most
    recent L completions for any L; compacted when it outgrows the cap.
    """

    __slots__ = ("finish", "cumdur", "cap")

    def __init__(self, cap: int):
        self.finish: list[float] = []
        self.cumdur: list[float] = [0.0]
        self.cap = cap

    def append(self, finish_time: float, duration: float):
        self.finish.append(finish_time)
        self.cumdur.append(self.cumdur[-1] + duration)
        if len(self.finish) > 4 * self.cap:
            keep = self.cap
            base = self.cumdur[-keep - 1]
            self.finish = self.finish[-keep:]
            self.cumdur = [0.0] + [c - base for c in self.cumdur[-keep:]]

    def __len__(self):
        return len(self.finish)

    def last(self, count: int):
        """(mean duration, span) of the newest ``count`` completions."""
        total = self.cumdur[-1] - self.cumdur[-count - 1]
        span = self.finish[-1] - self.finish[-count]
        return total / count, span


def aggregate(log: _CompletionLog, params: LearnerParams) -> float:
    """Speed estimate from one worker's completion log under ``params``.

    Returns 0 when the window is underfilled or took too long to gather;
    the timeout boundary is inclusive, so a worker that exactly meets the
    span bound keeps its estimate.
    """
    L = params.window_len
    if len(log) < L:
        return 0.0
    mean_duration, span = log.last(L)
    if span > (1.0 + params.epsilon) * L / params.mu_star:
        return 0.0
    if mean_duration <= 0.0:
        raise SimulationFault("completion window with non-positive mean duration")
    return (1.0 - params.epsilon) / mean_duration


class Learner:
    """Glue state: the arrival estimator plus one completion log and one
    current speed estimate per worker."""

    def __init__(self, n: int, config: LearnerConfig):
        self.n = n
        self.config = config
        self.estimator = ArrivalEstimator(
            config.arrival_window, config.initial_lambda, config.lambda_cap,
        )
        self.logs = [_CompletionLog(config.window_max) for _ in range(n)]
        self.mu_hat = [0.0] * n
        self.version = 0   # bumped on every estimate change, for sampler caches
        self.overload_events = 0

    @property
    def lambda_hat(self) -> float:
        return self.estimator.lambda_hat

    def record_arrival(self, now: float) -> float:
        return self.estimator.record_arrival(now)

    def params(self) -> LearnerParams:
        params = derive_params(
            self.lambda_hat, self.config.mu_bar, self.n,
            self.config.window_mode, self.config.c1, self.config.window_c,
            self.config.window_max, warn=self.overload_events == 0,
        )
        if params.overloaded:
            self.overload_events += 1
        return params

    def record_completion(self, worker_id: int, finish_time: float, duration: float):
        log = self.logs[worker_id]
        log.append(finish_time, duration)
        estimate = aggregate(log, self.params())
        if estimate != self.mu_hat[worker_id]:
            self.mu_hat[worker_id] = estimate
            self.version += 1
        return estimate


class BenchmarkDispatcher:
    """Schedules low-priority probe tasks at rate c0 * (mu_bar - lambda_hat).

    Dormant whenever the estimated arrival rate meets the guaranteed
    throughput: no probe load is added to a saturated system.
    """

    def __init__(self, c0: float, mu_bar: float):
        if c0 < 0:
            raise ConfigurationError("benchmark rate constant must be non-negative")
        self.c0 = c0
        self.mu_bar = mu_bar

    def rate(self, lambda_hat: float) -> float:
        return self.c0 * max(self.mu_bar - lambda_hat, 0.0)

    def next_fire(self, now: float, lambda_hat: float, bench_rng):
        """Next probe time, or None while dormant."""
        rate = self.rate(lambda_hat)
        if rate <= 0.0:
            return None
        return now + sample_exponential(bench_rng, rate)

    @staticmethod
    def pick_worker(n: int, bench_rng) -> int:
        # Uniform, deliberately not proportional: slow and zeroed workers
        # must keep receiving probes or they can never be re-learned.
        return bench_rng.randrange(n)
