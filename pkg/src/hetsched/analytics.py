"""Analytic queueing oracles, load-distance metrics, and run statistics.

The oracles give closed-form stationary tails that simulations are checked
against: a geometric tail per worker under proportional sampling (each
worker is an M/M/1 at the system load), and a doubly-exponential tail
under proportional power-of-two-choices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError, SimulationFault

PERCENTILE_RANKS = (5, 25, 50, 75, 95)


# ---------------------------------------------------------------------------
# Stationary-tail oracles


def mm1_tail(alpha: float, k: int) -> float:
    """P[Q >= k] = alpha**k for an M/M/1 queue at utilization alpha.

    Under proportional sampling with accurate estimates every worker sees
    Poisson arrivals at rate (lambda/total) * mu_i against service mu_i, so
    each is an M/M/1 at the common load ratio.
    """
    if not 0 < alpha < 1:
        raise ConfigurationError(f"load ratio must be in (0,1), got {alpha!r}")
    if k < 0:
        raise ConfigurationError("queue level must be non-negative")
    return alpha ** k


def ppot_tail(alpha: float, k: int) -> float:
    """P[Q >= k] = alpha**(2**k - 1): the fixed-point tail under
    proportional power-of-two-choices."""
    if not 0 < alpha < 1:
        raise ConfigurationError(f"load ratio must be in (0,1), got {alpha!r}")
    if k < 0:
        raise ConfigurationError("queue level must be non-negative")
    return alpha ** (2 ** k - 1)


def predicted_max_queue_pss(alpha: float, n: int) -> float:
    """Level where n * alpha**k drops to one: ln(n) / ln(1/alpha)."""
    if not 0 < alpha < 1:
        raise ConfigurationError(f"load ratio must be in (0,1), got {alpha!r}")
    return math.log(n) / math.log(1.0 / alpha)


def fixed_point_rates(tail, alpha: float):
    """State-dependent arrival rates with the mixed-neighbour index
    pattern alpha * (M_k^2 - M_{k-1}^2) / (M_k - M_{k+1}).

    For any monotone tail the numerator is non-positive, so the values come
    out non-positive; the entry is None wherever the denominator vanishes
    or a neighbour index is out of range.  ``balanced_arrival_rate`` is the
    flux-balanced form that simulations actually match.
    """
    rates = []
    for k in range(len(tail)):
        if k == 0 or k + 1 >= len(tail):
            rates.append(None)
            continue
        den = tail[k] - tail[k + 1]
        if den == 0:
            rates.append(None)
            continue
        num = tail[k] ** 2 - tail[k - 1] ** 2
        rates.append(alpha * num / den)
    return rates


def balanced_arrival_rate(tail, k: int, alpha: float) -> float:
    """alpha * (M_k + M_{k+1}), the per-queue arrival rate at queue size k
    that balances up- and down-flux across level k+1.

    For the doubly-exponential fixed point this satisfies
    alpha * (M_k^2 - M_{k+1}^2) = M_{k+1} - M_{k+2} exactly.
    """
    if k + 1 >= len(tail):
        raise ConfigurationError("tail profile too short for requested level")
    return alpha * (tail[k] + tail[k + 1])


def weighted_tail_profile(queues, speeds, k_max: int):
    """M_k = sum of mu_j / total over workers with at least k jobs, for
    k = 0..k_max.  M_0 is 1 by construction."""
    total = sum(speeds)
    if total <= 0:
        raise ConfigurationError("total capacity must be positive")
    counts = [0.0] * (k_max + 2)
    for q, s in zip(queues, speeds, strict=True):
        counts[min(q, k_max + 1)] += s
    tail = [0.0] * (k_max + 1)
    acc = 0.0
    for level in range(k_max + 1, 0, -1):
        acc += counts[level]
        if level <= k_max:
            tail[level] = acc / total
    tail[0] = 1.0
    return tail


def tail_recurrence_check(tail, c0: float = 4.0, floor: float = 1e-3):
    """Verify M_{k+1}^2 <= c0 * M_k^3 level by level.

    Geometric tails violate this once k is large (for small load), while
    doubly-exponential tails satisfy it with c0 = 1: the check separates
    one-choice from two-choice stationary behaviour.  Returns a dict with
    per-level ratios, the worst ratio, and a verdict of "pass", "fail", or
    "inconclusive" (nothing above the floor to test).
    """
    levels = []
    worst = 0.0
    for k in range(1, len(tail) - 1):
        if tail[k] < floor:
            continue
        ratio = tail[k + 1] ** 2 / tail[k] ** 3
        levels.append({"k": k, "ratio": ratio, "ok": ratio <= c0})
        worst = max(worst, ratio)
    if not levels:
        return {"verdict": "inconclusive", "levels": [], "worst_ratio": None}
    verdict = "pass" if all(entry["ok"] for entry in levels) else "fail"
    return {"verdict": verdict, "levels": levels, "worst_ratio": worst}


# ---------------------------------------------------------------------------
# Load distances


def l0_distance(u, v) -> float:
    """Fraction of coordinates where the two load vectors disagree."""
    if len(u) != len(v):
        raise SimulationFault(f"length mismatch: {len(u)} vs {len(v)}")
    if not u:
        raise SimulationFault("empty load vectors")
    return sum(1 for a, b in zip(u, v) if a != b) / len(u)


def l1_distance(u, v) -> float:
    """Unnormalized sum of absolute coordinate differences."""
    if len(u) != len(v):
        raise SimulationFault(f"length mismatch: {len(u)} vs {len(v)}")
    return float(sum(abs(a - b) for a, b in zip(u, v)))


# ---------------------------------------------------------------------------
# Sample statistics


def nearest_rank_percentile(sorted_values, rank: float) -> float:
    """Nearest-rank percentile over an already sorted sample."""
    if not sorted_values:
        return math.nan
    if not 0 < rank <= 100:
        raise ConfigurationError(f"percentile rank must be in (0,100], got {rank!r}")
    idx = max(0, math.ceil(rank / 100.0 * len(sorted_values)) - 1)
    return sorted_values[idx]


def percentile_summary(values):
    ordered = sorted(values)
    out = {f"p{r}": nearest_rank_percentile(ordered, r) for r in PERCENTILE_RANKS}
    out["mean"] = (math.fsum(ordered) / len(ordered)) if ordered else math.nan
    return out


# ---------------------------------------------------------------------------
# Per-run metrics collection (continuous engine)


@dataclass
class RunReport:
    policy: str
    seed: int
    alpha: float
    n: int
    responses: dict
    mean_wait: float
    peak_queue: int
    final_learn_error: float | None
    throughput: float
    benchmark_fraction: float
    degraded_picks: int
    completed_jobs: int
    series: list = field(default_factory=list)
    sampled_histogram: dict = field(default_factory=dict)
    occupancy: dict = field(default_factory=dict)
    occupancy_time: float = 0.0
    group_rates: dict = field(default_factory=dict)
    tail_mean: list = field(default_factory=list)
    milestones: dict = field(default_factory=dict)
    mu_hat_samples: list = field(default_factory=list)

    worker_responses: dict = field(default_factory=dict)

    def occupancy_tail(self, worker_id: int, k: int) -> float:
        """Time-weighted P[Q >= k] for one worker over the stationary phase."""
        levels = self.occupancy.get(worker_id, {})
        total = sum(levels.values())
        if total <= 0:
            return math.nan
        return sum(t for lvl, t in levels.items() if lvl >= k) / total

    def occupancy_mean(self, worker_id: int) -> float:
        """Time-weighted mean in-system count for one worker."""
        levels = self.occupancy.get(worker_id, {})
        total = sum(levels.values())
        if total <= 0:
            return math.nan
        return sum(lvl * t for lvl, t in levels.items()) / total

    def worker_mean_response(self, worker_id: int) -> float:
        entry = self.worker_responses.get(worker_id)
        if not entry or entry[1] == 0:
            return math.nan
        return entry[0] / entry[1]


class MetricsCollector:
    """Accumulates everything a run reports.

    Stationary statistics (occupancy, responses, waits, dispatch rates)
    start at the warm-up boundary; the time series and the running peak
    queue cover the whole run so transients stay visible.
    """

    def __init__(self, n, speeds, sample_interval, tail_kmax=16,
                 track_mu_hat=False, milestones=()):
        self.n = n
        self.speeds = speeds          # live reference; shocks mutate it
        self.sample_interval = sample_interval
        self.tail_kmax = tail_kmax
        self.track_mu_hat = track_mu_hat
        self.milestones = sorted(milestones)
        self._milestones_pending = list(self.milestones)

        self.levels = [0] * n         # current real-in-system count
        self._last_change = [0.0] * n
        self.occupancy = {i: {} for i in range(n)}
        self.stats_started = None     # warm-up boundary time, None until then

        self.responses = []
        self.waits_sum = 0.0
        self.waits_count = 0
        self.peak_queue = 0
        self.completed_real = 0
        self.completed_jobs = 0
        self.group_dispatch = {}
        self.worker_responses = {}
        self.degraded_picks = 0
        self.series = []
        self.sampled_histogram = {i: {} for i in range(n)}
        self.tail_sums = [0.0] * (tail_kmax + 1)
        self.tail_samples = 0
        self.mu_hat_samples = []
        self.milestone_data = {}
        self._final_time = 0.0

    # -- lifecycle

    def start_stats(self, now: float):
        """Warm-up ended: reset stationary accumulators."""
        self.stats_started = now
        self.occupancy = {i: {} for i in range(self.n)}
        self._last_change = [now] * self.n
        self.responses = []
        self.waits_sum = 0.0
        self.waits_count = 0
        self.completed_real = 0
        self.completed_jobs = 0
        self.group_dispatch = {}
        self.worker_responses = {}
        self.sampled_histogram = {i: {} for i in range(self.n)}
        self.tail_sums = [0.0] * (self.tail_kmax + 1)
        self.tail_samples = 0

    def finalize(self, now: float):
        self._final_time = now
        if self.stats_started is None:
            self.start_stats(now)
        for i in range(self.n):
            self._flush_level(i, now)

    # -- event hooks

    def _flush_level(self, i, now):
        dt = now - self._last_change[i]
        if dt > 0:
            bucket = self.occupancy[i]
            lvl = self.levels[i]
            bucket[lvl] = bucket.get(lvl, 0.0) + dt
        self._last_change[i] = now

    def note_level_change(self, i, new_level, now):
        if self.stats_started is not None:
            self._flush_level(i, now)
        self.levels[i] = new_level
        if new_level > self.peak_queue:
            self.peak_queue = new_level

    def note_dispatch(self, speed, now):
        if self.stats_started is not None:
            self.group_dispatch[speed] = self.group_dispatch.get(speed, 0) + 1

    def note_wait(self, wait):
        if self.stats_started is not None:
            self.waits_sum += wait
            self.waits_count += 1

    def note_real_completion(self):
        if self.stats_started is not None:
            self.completed_real += 1

    def note_task_response(self, worker_id, task):
        if self.stats_started is None or task.arrival_time < self.stats_started:
            return
        entry = self.worker_responses.get(worker_id, (0.0, 0))
        self.worker_responses[worker_id] = (
            entry[0] + (task.finish_time - task.arrival_time), entry[1] + 1,
        )

    def note_job_done(self, job):
        if self.stats_started is None or job.arrival_time < self.stats_started:
            return
        self.completed_jobs += 1
        self.responses.append(job.response_time)

    def note_degraded_pick(self):
        self.degraded_picks += 1

    def sample(self, now, event_count, lambda_hat=None, mu_hat=None, true_speeds=None):
        max_q = max(self.levels) if self.levels else 0
        mean_q = sum(self.levels) / self.n if self.n else 0.0
        mu_err = None
        if mu_hat is not None and true_speeds is not None:
            mu_err = sum(abs(h - t) for h, t in zip(mu_hat, true_speeds)) / self.n
        self.series.append({
            "time": now, "events": event_count, "max_queue": max_q,
            "mean_queue": mean_q, "lambda_hat": lambda_hat, "mu_hat_error": mu_err,
        })
        if self.stats_started is not None:
            for i, lvl in enumerate(self.levels):
                bucket = self.sampled_histogram[i]
                bucket[lvl] = bucket.get(lvl, 0) + 1
            tail = weighted_tail_profile(self.levels, self.speeds, self.tail_kmax)
            for k in range(self.tail_kmax + 1):
                self.tail_sums[k] += tail[k]
            self.tail_samples += 1
            if self.track_mu_hat and mu_hat is not None:
                self.mu_hat_samples.append((now, list(mu_hat)))

    def maybe_milestone(self, event_count, now):
        while self._milestones_pending and event_count >= self._milestones_pending[0]:
            mark = self._milestones_pending.pop(0)
            self.milestone_data[mark] = {
                "time": now,
                "levels": list(self.levels),
                "speeds": list(self.speeds),
            }

    # -- report

    def report(self, policy, seed, alpha, n, now, learn_error=None) -> RunReport:
        self.finalize(now)
        window = now - (self.stats_started or 0.0)
        group_rates = {}
        if window > 0:
            for speed, count in sorted(self.group_dispatch.items()):
                group_rates[speed] = count / window
        tail_mean = [
            s / self.tail_samples if self.tail_samples else math.nan
            for s in self.tail_sums
        ]
        return RunReport(
            policy=policy, seed=seed, alpha=alpha, n=n,
            responses=percentile_summary(self.responses),
            mean_wait=(self.waits_sum / self.waits_count) if self.waits_count else math.nan,
            peak_queue=self.peak_queue,
            final_learn_error=learn_error,
            throughput=(self.completed_real / window) if window > 0 else math.nan,
            benchmark_fraction=0.0,
            degraded_picks=self.degraded_picks,
            completed_jobs=self.completed_jobs,
            series=self.series,
            sampled_histogram=self.sampled_histogram,
            occupancy=self.occupancy,
            occupancy_time=window,
            group_rates=group_rates,
            tail_mean=tail_mean,
            milestones=self.milestone_data,
            mu_hat_samples=self.mu_hat_samples,
            worker_responses=dict(self.worker_responses),
        )
