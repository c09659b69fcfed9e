"""Worker-speed profiles, speed shocks, and the job arrival process.

Speeds come from a Zipf law (a few fast workers, a heavy tail of slow
ones), from the named fixed sets used throughout the experiment presets,
or from an explicit vector.  Shocks either permute the current speeds
(total capacity preserved) or resample them from the source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .engine import sample_exponential
from .errors import ConfigurationError

PERMUTE = "permute"
RESAMPLE = "resample"

# Named fixed speed sets selectable by string in configs.
FIXED_SETS = {
    "S1": [round(0.2 + 0.1 * i, 1) for i in range(15)],
    "S2": [0.15, 0.15, 0.15, 0.15, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 1, 1, 1, 2, 2],
    "TPCH": [round((k / 10.0) ** 2, 2) for k in range(1, 10)],
}


def zipf_speeds(n, stream_rng, exponent=2.0, cap=100.0):
    """Draw n i.i.d. speeds 1/k with P[k] proportional to k**-exponent.

    The support is truncated at k = cap so the fastest/slowest ratio
    respects the cap by construction; the explicit clamp below is a
    belt-and-braces guard for future sources.
    """
    if exponent <= 1:
        raise ConfigurationError(f"zipf exponent must exceed 1, got {exponent!r}")
    if cap <= 1:
        raise ConfigurationError(f"zipf cap must exceed 1, got {cap!r}")
    k_max = int(cap)
    masses = [k ** -exponent for k in range(1, k_max + 1)]
    total = sum(masses)
    cum = []
    acc = 0.0
    for m in masses:
        acc += m
        cum.append(acc / total)
    speeds = []
    for _ in range(n):
        u = stream_rng.random()
        k = 1
        for i, c in enumerate(cum):
            if u < c:
                k = i + 1
                break
        speeds.append(1.0 / k)
    floor = max(speeds) / cap
    return [max(s, floor) for s in speeds]


@dataclass
class SpeedProfile:
    """Current speed vector plus the source it was drawn from."""

    source: str                     # "zipf" | "fixed" | "explicit" | "homogeneous"
    speeds: list[float]
    zipf_exponent: float = 2.0
    zipf_cap: float = 100.0
    fixed_name: str | None = None

    def __post_init__(self):
        if not self.speeds:
            raise ConfigurationError("speed profile is empty")
        if any(s < 0 or not math.isfinite(s) for s in self.speeds):
            raise ConfigurationError("speeds must be non-negative and finite")
        if sum(self.speeds) <= 0:
            raise ConfigurationError("total service capacity must be positive")

    @property
    def n(self) -> int:
        return len(self.speeds)

    @property
    def total(self) -> float:
        return sum(self.speeds)

    def resample(self, stream_rng) -> list[float]:
        if self.source == "zipf":
            return zipf_speeds(self.n, stream_rng, self.zipf_exponent, self.zipf_cap)
        # Fixed and explicit sources have nothing to redraw; a resample
        # shock reduces to a permutation for them.
        shuffled = list(self.speeds)
        stream_rng.shuffle(shuffled)
        return shuffled


def make_profile(source, n=None, values=None, fixed_name=None,
                 exponent=2.0, cap=100.0, stream_rng=None):
    if source == "fixed":
        if fixed_name not in FIXED_SETS:
            raise ConfigurationError(
                f"unknown fixed speed set {fixed_name!r}; choose from {sorted(FIXED_SETS)}"
            )
        base = [float(v) for v in FIXED_SETS[fixed_name]]
        if n is None or n == len(base):
            speeds = base
        elif n % len(base) == 0:
            speeds = base * (n // len(base))
        else:
            raise ConfigurationError(
                f"n={n} is not a multiple of the {fixed_name} set size {len(base)}"
            )
        return SpeedProfile("fixed", speeds, fixed_name=fixed_name)
    if source == "explicit":
        if not values:
            raise ConfigurationError("explicit speed profile needs values")
        if n is not None and n != len(values):
            raise ConfigurationError(f"n={n} does not match {len(values)} explicit speeds")
        return SpeedProfile("explicit", [float(v) for v in values])
    if source == "homogeneous":
        if not n:
            raise ConfigurationError("homogeneous profile needs n")
        return SpeedProfile("homogeneous", [1.0] * n)
    if source == "zipf":
        if not n:
            raise ConfigurationError("zipf profile needs n")
        if stream_rng is None:
            raise ConfigurationError("zipf profile needs a random stream")
        speeds = zipf_speeds(n, stream_rng, exponent, cap)
        return SpeedProfile("zipf", speeds, zipf_exponent=exponent, zipf_cap=cap)
    raise ConfigurationError(f"unknown speed source {source!r}")


@dataclass
class ShockSchedule:
    period: float = 0.0            # 0 disables shocks
    mode: str = PERMUTE

    def __post_init__(self):
        if self.period < 0:
            raise ConfigurationError("shock period must be non-negative")
        if self.mode not in (PERMUTE, RESAMPLE):
            raise ConfigurationError(f"unknown shock mode {self.mode!r}")

    @property
    def enabled(self) -> bool:
        return self.period > 0


def apply_shock(profile: SpeedProfile, schedule: ShockSchedule, stream_rng):
    """Return the post-shock speed vector; learner windows are left alone
    (detecting the change is the learner's problem, by design)."""
    if schedule.mode == PERMUTE:
        speeds = list(profile.speeds)
        stream_rng.shuffle(speeds)
        return speeds
    return profile.resample(stream_rng)


@dataclass
class WorkloadSpec:
    """Arrival process and job shape.

    The arrival rate is alpha times the total service capacity; with the
    default unit-mean task size that makes alpha the true utilization in
    both service modes.  Under resample shocks the rate is recomputed to
    hold alpha; permutations leave the capacity, and hence the rate, fixed.
    """

    alpha: float | None = None
    lambda_rate: float | None = None   # explicit override of alpha * total
    tasks_per_job: int = 1
    task_size_mean: float = 1.0
    max_events: int | None = None
    max_time: float | None = None

    def __post_init__(self):
        if (self.alpha is None) == (self.lambda_rate is None):
            raise ConfigurationError("specify exactly one of alpha or lambda_rate")
        if self.alpha is not None and not 0 < self.alpha:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha!r}")
        if self.lambda_rate is not None and self.lambda_rate <= 0:
            raise ConfigurationError("lambda_rate must be positive")
        if self.tasks_per_job < 1:
            raise ConfigurationError("tasks_per_job must be at least 1")
        if self.task_size_mean <= 0:
            raise ConfigurationError("task_size_mean must be positive")
        if self.max_events is None and self.max_time is None:
            raise ConfigurationError("need an event or time budget")

    def effective_capacity(self, total_capacity: float, service_mode: str = "memoryless") -> float:
        """Job throughput the cluster can sustain.

        In memoryless mode a worker of rate mu completes mu tasks per unit
        time whatever their size; in sleep mode it completes mu / mean(work),
        so the capacity is rescaled by the mean task size.  A job consumes
        tasks_per_job task slots, hence the final divisor.  With the
        defaults (unit-mean tasks, one task per job) this is exactly the
        total service rate, so alpha * capacity reduces to alpha * sum(mu).
        """
        per_task = total_capacity
        if service_mode == "sleep":
            per_task = total_capacity / self.task_size_mean
        return per_task / self.tasks_per_job

    def arrival_rate(self, total_capacity: float, service_mode: str = "memoryless") -> float:
        if self.lambda_rate is not None:
            return self.lambda_rate
        return self.alpha * self.effective_capacity(total_capacity, service_mode)

    def load_ratio(self, total_capacity: float, service_mode: str = "memoryless") -> float:
        rate = self.arrival_rate(total_capacity, service_mode)
        return rate / self.effective_capacity(total_capacity, service_mode)


class JobSource:
    """Generates the arrival trace: interarrival gaps and task sizes.

    Everything here draws from the arrivals stream only, so two runs that
    differ in policy or learner settings see the identical trace.
    """

    def __init__(self, spec: WorkloadSpec, arrivals_rng):
        self.spec = spec
        self.rng = arrivals_rng
        self._next_job_id = 0
        self._next_task_id = 0

    def next_gap(self, lam: float) -> float:
        return sample_exponential(self.rng, lam)

    def task_work(self) -> float:
        return sample_exponential(self.rng, 1.0 / self.spec.task_size_mean)

    def next_ids(self):
        job_id = self._next_job_id
        self._next_job_id += 1
        task_ids = []
        for _ in range(self.spec.tasks_per_job):
            task_ids.append(self._next_task_id)
            self._next_task_id += 1
        return job_id, task_ids
