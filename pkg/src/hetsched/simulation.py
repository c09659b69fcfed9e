"""Run drivers.

ContinuousSimulation is the default engine: an event loop over exponential
arrivals and completions.  The discrete runners step the coupled
round-based chain instead (one arrival or one processing event per round)
and exist for the analytic cross-checks, including the coupled two-system
recovery measurement.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import bandits
from .analytics import MetricsCollector, RunReport, l0_distance, l1_distance
from .cluster import MEMORYLESS, SERVICE_MODES, Job, Task, Worker
from .engine import (
    BENCHMARK_ARRIVAL, JOB_ARRIVAL, METRICS_SAMPLE, SPEED_SHOCK,
    TASK_COMPLETION, EventQueue, RandomStream, sample_exponential,
)
from .errors import ConfigurationError, SimulationFault
from .learning import BenchmarkDispatcher, Learner, LearnerConfig
from .policies import (
    EXP3, EXP4, LEARNED, PolicyConfig, WeightedSampler,
    proportional_weights, select_worker, uniform_sampler,
)
from .workloads import JobSource, ShockSchedule, SpeedProfile, WorkloadSpec, apply_shock


@dataclass
class RunSpec:
    """Everything one simulation run needs, after config materialization."""

    profile: SpeedProfile
    workload: WorkloadSpec
    policy: PolicyConfig
    seed: int
    shock: ShockSchedule = field(default_factory=ShockSchedule)
    learner: LearnerConfig | None = None
    benchmarks: bool = False
    service_mode: str = MEMORYLESS
    sample_interval: float = 1.0
    warmup_fraction: float = 0.2
    initial_queue: int = 0
    milestones: tuple = ()
    track_mu_hat: bool = False
    tail_kmax: int = 16
    record_trace: bool = False
    bandit_s_min: float | None = None
    bandit_l_max: float | None = None
    # Static speed-estimate vector for the policy view, e.g. to drive the
    # scheduler with deliberate underestimates while service runs at the
    # true rates.  Ignored in learned mode.
    frozen_estimates: list[float] | None = None

    def __post_init__(self):
        self.policy.validate()
        if self.service_mode not in SERVICE_MODES:
            raise ConfigurationError(f"unknown service mode {self.service_mode!r}")
        if self.sample_interval <= 0:
            raise ConfigurationError("sample interval must be positive")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigurationError("warmup fraction must be in [0,1)")
        needs_learner = (
            self.policy.speed_source == LEARNED or self.benchmarks
            or self.policy.kind == EXP4
        )
        capacity = self.workload.effective_capacity(self.profile.total, self.service_mode)
        if needs_learner and self.learner is None:
            self.learner = LearnerConfig(mu_bar=capacity)
        if self.benchmarks and self.learner is not None:
            lam = self.workload.arrival_rate(self.profile.total, self.service_mode)
            offered = lam + self.learner.c0 * max(self.learner.mu_bar - lam, 0.0)
            if lam < self.learner.mu_bar <= capacity and offered >= capacity:
                raise ConfigurationError(
                    "benchmark load would saturate the cluster: "
                    f"lambda + c0*(mu_bar - lambda) = {offered:.4g} >= capacity {capacity:.4g}"
                )


class ContinuousSimulation:
    def __init__(self, spec: RunSpec):
        self.spec = spec
        self.streams = RandomStream(spec.seed)
        self.arrivals_rng = self.streams.rng("arrivals")
        self.service_rng = self.streams.rng("service")
        self.policy_rng = self.streams.rng("policy")
        self.bench_rng = self.streams.rng("benchmark")
        self.shocks_rng = self.streams.rng("shocks")

        self.profile = spec.profile
        self.n = self.profile.n
        self.workers = [Worker(i, s) for i, s in enumerate(self.profile.speeds)]
        self.waiting = [0] * self.n     # policy-visible queue lengths
        self.mode = spec.service_mode
        self.source = JobSource(spec.workload, self.arrivals_rng)
        self.lam = spec.workload.arrival_rate(self.profile.total, self.mode)
        self.alpha = spec.workload.load_ratio(self.profile.total, self.mode)

        self.learner = Learner(self.n, spec.learner) if spec.learner else None
        self.dispatcher = None
        self.bench_dormant = True
        if spec.benchmarks:
            if self.learner is None:
                raise ConfigurationError("benchmarks need a learner configuration")
            self.dispatcher = BenchmarkDispatcher(spec.learner.c0, spec.learner.mu_bar)

        self.policy = spec.policy
        self._uniform = uniform_sampler(self.n)
        self._speed_version = 0
        self._sampler_cache = (None, None)  # (version key, sampler)

        self.bandit3 = None
        self.bandit4 = None
        if self.policy.kind in (EXP3, EXP4):
            s_min = spec.bandit_s_min
            if s_min is None:
                s_min = min(s for s in self.profile.speeds if s > 0)
            l_max = spec.bandit_l_max
            if l_max is None:
                l_max = 10.0 * spec.workload.task_size_mean
            self.reward_cfg = bandits.RewardConfig(s_min=s_min, l_max=l_max)
            if self.policy.kind == EXP3:
                self.bandit3 = bandits.Exp3State(self.n, self.policy.gamma)
            else:
                self.bandit4 = bandits.Exp4State(self.n, self.policy.gamma)
        self._inflight = {}  # task id -> (worker, probability) for bandit updates

        self.queue = EventQueue()
        self.events = 0
        self.jobs = {}
        self.collector = MetricsCollector(
            self.n, self.profile.speeds, spec.sample_interval,
            tail_kmax=spec.tail_kmax, track_mu_hat=spec.track_mu_hat,
            milestones=spec.milestones,
        )
        self.trace = [] if spec.record_trace else None
        self._warmup_done = False
        self._warmup_events, self._warmup_time = self._warmup_bounds()

        self._prefill()
        self.queue.push(self.source.next_gap(self.lam), JOB_ARRIVAL)
        self.queue.push(spec.sample_interval, METRICS_SAMPLE)
        if spec.shock.enabled:
            self.queue.push(spec.shock.period, SPEED_SHOCK)
        if self.dispatcher is not None:
            self._arm_benchmark(0.0)

    # -- setup helpers

    def _warmup_bounds(self):
        frac = self.spec.warmup_fraction
        w = self.spec.workload
        ev = math.floor(w.max_events * frac) if w.max_events is not None else None
        tm = w.max_time * frac if w.max_time is not None else None
        return ev, tm

    def _prefill(self):
        for worker in self.workers:
            for _ in range(self.spec.initial_queue):
                work = self.source.task_work()
                _, ids = self.source.next_ids()
                task = Task(ids[0], -1, work, arrival_time=0.0)
                dur = worker.enqueue(task, 0.0, self.mode, self.service_rng)
                if dur is not None:
                    self.queue.push(dur, TASK_COMPLETION, worker.id)
            self.waiting[worker.id] = worker.queue_len
            self.collector.levels[worker.id] = worker.system_len
            if worker.system_len > self.collector.peak_queue:
                self.collector.peak_queue = worker.system_len

    def _arm_benchmark(self, now):
        fire = self.dispatcher.next_fire(now, self.learner.lambda_hat, self.bench_rng)
        if fire is None:
            self.bench_dormant = True
        else:
            self.bench_dormant = False
            self.queue.push(fire, BENCHMARK_ARRIVAL)

    # -- speed views

    def _mu_view(self):
        if self.policy.speed_source == LEARNED:
            return self.learner.mu_hat
        if self.spec.frozen_estimates is not None:
            return self.spec.frozen_estimates
        return self.profile.speeds

    def _sampler(self) -> WeightedSampler:
        if self.policy.speed_source == LEARNED:
            key = ("learned", self.learner.version)
        elif self.spec.frozen_estimates is not None:
            key = ("frozen", 0)
        else:
            key = ("oracle", self._speed_version)
        cached_key, sampler = self._sampler_cache
        if cached_key != key:
            sampler = WeightedSampler(self._mu_view())
            self._sampler_cache = (key, sampler)
        return sampler

    # -- dispatch

    def _dispatch(self, task: Task, now: float):
        if self.bandit3 is not None:
            probs = self.bandit3.probabilities()
            idx = WeightedSampler(probs).draw(self.policy_rng.random())
            self._inflight[task.id] = (idx, probs[idx])
        elif self.bandit4 is not None:
            advice = [
                proportional_weights(self._mu_view())[0],
                [1.0 / self.n] * self.n,
            ]
            probs = self.bandit4.mixture(advice)
            idx = WeightedSampler(probs).draw(self.policy_rng.random())
            self._inflight[task.id] = (idx, probs, advice)
        else:
            sampler = self._sampler()
            if sampler.degraded:
                self.collector.note_degraded_pick()
            idx = select_worker(
                self.policy.kind, self.waiting, self._mu_view(), sampler,
                self._uniform, self.policy_rng, self.policy.explore_prob,
            )
        worker = self.workers[idx]
        duration = worker.enqueue(task, now, self.mode, self.service_rng)
        self.waiting[idx] = worker.queue_len
        if not task.is_benchmark:
            self.collector.note_dispatch(worker.rate, now)
            self.collector.note_level_change(idx, worker.system_len, now)
        if duration is not None:
            if not task.is_benchmark:
                self.collector.note_wait(now - task.arrival_time)
            self.queue.push(now + duration, TASK_COMPLETION, idx)
        return idx

    # -- event handlers

    def _on_arrival(self, now: float):
        if self.learner is not None:
            self.learner.record_arrival(now)
            if self.dispatcher is not None and self.bench_dormant:
                self._arm_benchmark(now)
        job_id, task_ids = self.source.next_ids()
        works = [self.source.task_work() for _ in task_ids]
        tasks = [
            Task(tid, job_id, work, arrival_time=now)
            for tid, work in zip(task_ids, works)
        ]
        job = Job(job_id, now, tasks)
        self.jobs[job_id] = job
        for task in tasks:
            self._dispatch(task, now)
        self.queue.push(now + self.source.next_gap(self.lam), JOB_ARRIVAL)

    def _on_completion(self, worker_id: int, now: float):
        worker = self.workers[worker_id]
        task, next_duration = worker.complete_current(now, self.mode, self.service_rng)
        self.waiting[worker_id] = worker.queue_len
        duration = task.finish_time - task.start_time
        if self.learner is not None:
            self.learner.record_completion(worker_id, now, duration)
        if not task.is_benchmark:
            self.collector.note_level_change(worker_id, worker.system_len, now)
            self.collector.note_real_completion()
            self.collector.note_task_response(worker_id, task)
            job = self.jobs.get(task.job_id)
            if job is not None:
                job.remaining -= 1
                if job.remaining == 0:
                    self.collector.note_job_done(job)
                    del self.jobs[task.job_id]
        entry = self._inflight.pop(task.id, None)
        if entry is not None:
            self._bandit_update(entry, task, worker, duration)
        if next_duration is not None:
            started = worker.in_service
            if not started.is_benchmark:
                self.collector.note_wait(now - started.arrival_time)
            self.queue.push(now + next_duration, TASK_COMPLETION, worker_id)

    def _bandit_update(self, entry, task, worker, duration):
        t_d = min(duration, self.reward_cfg.l_max)
        x = bandits.reward(t_d, worker.rate, self.reward_cfg.s_min, self.reward_cfg.l_max)
        if self.bandit3 is not None:
            idx, prob = entry
            self.bandit3.update(idx, x, prob)
        else:
            idx, probs, advice = entry
            self.bandit4.update(idx, x, probs, advice)

    def _on_benchmark(self, now: float):
        idx = self.dispatcher.pick_worker(self.n, self.bench_rng)
        work = sample_exponential(
            self.bench_rng, 1.0 / self.spec.workload.task_size_mean
        )
        _, task_ids = self.source.next_ids()
        task = Task(task_ids[0], -1, work, is_benchmark=True, arrival_time=now)
        worker = self.workers[idx]
        duration = worker.enqueue(task, now, self.mode, self.service_rng)
        self.waiting[idx] = worker.queue_len
        if duration is not None:
            self.queue.push(now + duration, TASK_COMPLETION, idx)
        self._arm_benchmark(now)

    def _on_shock(self, now: float):
        new_speeds = apply_shock(self.profile, self.spec.shock, self.shocks_rng)
        self.profile.speeds[:] = new_speeds
        for worker, rate in zip(self.workers, new_speeds):
            worker.rate = rate   # tasks already in service keep their draw
        self._speed_version += 1
        if self.spec.shock.mode == "resample":
            self.lam = self.spec.workload.arrival_rate(self.profile.total, self.mode)
        self.queue.push(now + self.spec.shock.period, SPEED_SHOCK)

    # -- main loop

    def run(self) -> RunReport:
        spec = self.spec
        max_events = spec.workload.max_events
        max_time = spec.workload.max_time
        now = 0.0
        if max_events is not None and max_events <= 0:
            return self._report(now)
        while True:
            if max_time is not None:
                upcoming = self.queue.peek_time()
                if upcoming is None or upcoming > max_time:
                    now = max_time
                    break
            record = self.queue.pop()
            if record is None:
                break
            now, _, kind, payload = record
            if self.trace is not None:
                self.trace.append((now, kind, payload))
            if kind == METRICS_SAMPLE:
                self._sample(now)
                self.queue.push(now + spec.sample_interval, METRICS_SAMPLE)
                continue
            if kind == JOB_ARRIVAL:
                self._on_arrival(now)
            elif kind == TASK_COMPLETION:
                self._on_completion(payload, now)
            elif kind == BENCHMARK_ARRIVAL:
                self._on_benchmark(now)
            elif kind == SPEED_SHOCK:
                self._on_shock(now)
            else:
                raise SimulationFault(f"unknown event kind {kind}")
            self.events += 1
            if not self._warmup_done:
                if (self._warmup_events is not None and self.events >= self._warmup_events) or (
                    self._warmup_time is not None and now >= self._warmup_time
                ):
                    self.collector.start_stats(now)
                    self._warmup_done = True
            self.collector.maybe_milestone(self.events, now)
            if max_events is not None and self.events >= max_events:
                break
        return self._report(now)

    def _sample(self, now):
        lam_hat = self.learner.lambda_hat if self.learner else None
        mu_hat = self.learner.mu_hat if self.learner else None
        self.collector.sample(now, self.events, lam_hat, mu_hat, self.profile.speeds)

    def _report(self, now) -> RunReport:
        learn_error = None
        if self.learner is not None:
            learn_error = sum(
                abs(h - t) for h, t in zip(self.learner.mu_hat, self.profile.speeds)
            ) / self.n
        report = self.collector.report(
            self.policy.label(), self.spec.seed, self.alpha, self.n, now,
            learn_error=learn_error,
        )
        busy = sum(w.busy_time for w in self.workers)
        bench_busy = sum(w.bench_busy_time for w in self.workers)
        report.benchmark_fraction = (bench_busy / busy) if busy > 0 else 0.0
        return report


def run_simulation(spec: RunSpec) -> RunReport:
    return ContinuousSimulation(spec).run()


# ---------------------------------------------------------------------------
# Discrete-time runners (round-based coupled chain)

_BLOCK = 1 << 15


class _Uniforms:
    """Sequential consumer over block-drawn numpy uniforms."""

    __slots__ = ("gen", "buf", "pos")

    def __init__(self, gen):
        self.gen = gen
        self.buf = gen.random(_BLOCK).tolist()
        self.pos = 0

    def next(self):
        if self.pos >= len(self.buf):
            self.buf = self.gen.random(_BLOCK).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def _policy_draws(kind):
    if kind in ("Uniform", "PSS"):
        return 1
    if kind in ("PoT", "PPoT_SQ", "PPoT_LL"):
        return 2
    raise ConfigurationError(f"discrete runner does not support policy {kind!r}")


def _cumulative(weights):
    cum = []
    acc = 0.0
    for w in weights:
        acc += w
        cum.append(acc)
    return cum, acc


def run_discrete_tails(n, mu, lam, policy_kind, seed, rounds, warmup_rounds=0,
                       k_max=10, initial_queue=0, max_level=4096):
    """Step the round-based chain and return time-averaged tail statistics.

    Tail level k carries the capacity-weighted portion of workers with at
    least k jobs (averaged over post-warm-up rounds); ``max_avg`` is the
    round-averaged maximum queue.  All averages use lazy integrals so the
    per-round cost stays O(1).
    """
    if rounds <= warmup_rounds:
        raise ConfigurationError("round budget must exceed the warm-up")
    mu = [float(m) for m in mu]
    total_mu = sum(mu)
    if total_mu <= 0 or lam <= 0:
        raise ConfigurationError("rates must be positive")
    streams = RandomStream(seed)
    events = _Uniforms(streams.generator("arrivals"))
    picks = _Uniforms(streams.generator("policy"))

    if policy_kind in ("Uniform", "PoT"):
        cum_w, tot_w = _cumulative([1.0] * n)
    else:
        cum_w, tot_w = _cumulative(mu)
    cum_mu, _ = _cumulative(mu)
    total = lam + total_mu
    p_arr = lam / total
    two_picks = _policy_draws(policy_kind) == 2
    is_ll = policy_kind == "PPoT_LL"

    queues = [initial_queue] * n
    w_norm = [m / total_mu for m in mu]

    # Lazy integrals: tails T[k] for k<=k_max, plus the running max.
    tails = [0.0] * (k_max + 1)
    tails[0] = 1.0
    for k in range(1, min(initial_queue, k_max) + 1):
        tails[k] = 1.0
    t_integral = [0.0] * (k_max + 1)
    t_last = [warmup_rounds] * (k_max + 1)
    cnt = [0] * (max_level + 2)
    cnt[min(initial_queue, max_level)] = n
    cur_max = initial_queue
    max_integral = 0.0
    max_last = warmup_rounds
    peak = initial_queue

    ev_next = events.next
    pk_next = picks.next
    bisect = bisect_right

    for r in range(rounds):
        u = ev_next()
        if u < p_arr:
            j1 = bisect(cum_w, pk_next() * tot_w)
            if j1 >= n:
                j1 = n - 1
            if two_picks:
                j2 = bisect(cum_w, pk_next() * tot_w)
                if j2 >= n:
                    j2 = n - 1
                if is_ll:
                    w1 = (queues[j1] + 1) / mu[j1] if mu[j1] > 0 else math.inf
                    w2 = (queues[j2] + 1) / mu[j2] if mu[j2] > 0 else math.inf
                    j = j1 if w1 <= w2 else j2
                else:
                    j = j1 if queues[j1] <= queues[j2] else j2
            else:
                j = j1
            q = queues[j]
            queues[j] = q + 1
            lvl = q + 1
            if lvl <= k_max and r >= warmup_rounds:
                t_integral[lvl] += tails[lvl] * (r - t_last[lvl])
                t_last[lvl] = r
                tails[lvl] += w_norm[j]
            elif lvl <= k_max:
                tails[lvl] += w_norm[j]
            c = min(q, max_level)
            cnt[c] -= 1
            cnt[min(lvl, max_level)] += 1
            if lvl > cur_max:
                if r >= warmup_rounds:
                    max_integral += cur_max * (r - max_last)
                    max_last = r
                cur_max = lvl
                if lvl > peak:
                    peak = lvl
        else:
            x = (u - p_arr) * total
            i = bisect(cum_mu, x)
            if i >= n:
                i = n - 1
            q = queues[i]
            if q > 0:
                queues[i] = q - 1
                if q <= k_max and r >= warmup_rounds:
                    t_integral[q] += tails[q] * (r - t_last[q])
                    t_last[q] = r
                    tails[q] -= w_norm[i]
                elif q <= k_max:
                    tails[q] -= w_norm[i]
                c = min(q, max_level)
                cnt[c] -= 1
                cnt[c - 1] += 1
                if q == cur_max and cnt[min(q, max_level)] == 0:
                    if r >= warmup_rounds:
                        max_integral += cur_max * (r - max_last)
                        max_last = r
                    while cur_max > 0 and cnt[min(cur_max, max_level)] == 0:
                        cur_max -= 1

    span = rounds - warmup_rounds
    for k in range(1, k_max + 1):
        t_integral[k] += tails[k] * (rounds - t_last[k])
    max_integral += cur_max * (rounds - max_last)
    tail_avg = [1.0] + [t_integral[k] / span for k in range(1, k_max + 1)]
    return {
        "tail_avg": tail_avg,
        "max_avg": max_integral / span,
        "peak": peak,
        "final_queues": queues,
        "time_per_round": 1.0 / total,
        "rounds": rounds,
    }


def coupled_recovery_run(n, mu, lam, seed, c_max, eps_target=0.05,
                         burn_in_rounds=None, horizon_time=500.0,
                         sample_interval=0.5, policy_kind="PPoT_SQ"):
    """Measure how fast a backlogged system catches a stationary twin.

    System A starts with every queue at ``c_max``; system B starts empty
    and is burned in first to approximate stationarity.  Both then advance
    under the natural coupling: identical arrival rounds, identical
    candidate draws, identical processing-event workers.  Reports the first
    time the coordinate-disagreement fraction drops to ``eps_target``, the
    full (time, l0, l1) series, and an exponential fit of the l1 decay.
    """
    mu = [float(m) for m in mu]
    total_mu = sum(mu)
    if total_mu <= 0 or lam <= 0:
        raise ConfigurationError("rates must be positive")
    if c_max < 0:
        raise ConfigurationError("backlog must be non-negative")
    streams = RandomStream(seed)
    events = _Uniforms(streams.generator("arrivals"))
    picks = _Uniforms(streams.generator("policy"))

    if policy_kind in ("Uniform", "PoT"):
        cum_w, tot_w = _cumulative([1.0] * n)
    else:
        cum_w, tot_w = _cumulative(mu)
    cum_mu, _ = _cumulative(mu)
    total = lam + total_mu
    p_arr = lam / total
    dt = 1.0 / total
    two_picks = _policy_draws(policy_kind) == 2
    if burn_in_rounds is None:
        burn_in_rounds = 50 * n

    ev_next = events.next
    pk_next = picks.next
    bisect = bisect_right

    def pick_pair():
        j1 = bisect(cum_w, pk_next() * tot_w)
        if j1 >= n:
            j1 = n - 1
        if not two_picks:
            return j1, j1
        j2 = bisect(cum_w, pk_next() * tot_w)
        if j2 >= n:
            j2 = n - 1
        return j1, j2

    # Burn system B towards stationarity.
    b = [0] * n
    for _ in range(burn_in_rounds):
        u = ev_next()
        if u < p_arr:
            j1, j2 = pick_pair()
            j = j1 if b[j1] <= b[j2] else j2
            b[j] += 1
        else:
            i = bisect(cum_mu, (u - p_arr) * total)
            if i >= n:
                i = n - 1
            if b[i] > 0:
                b[i] -= 1

    # Zero backlog means both systems start from the same pre-warmed state:
    # the coupling then holds them identical forever (distance stays 0).
    a = list(b) if c_max == 0 else [c_max] * n
    horizon_rounds = int(horizon_time / dt)
    sample_rounds = max(1, int(sample_interval / dt))
    series = []
    recovery_time = None
    coalesced_at = None
    r = 0
    while r < horizon_rounds:
        u = ev_next()
        if u < p_arr:
            j1, j2 = pick_pair()
            ja = j1 if a[j1] <= a[j2] else j2
            jb = j1 if b[j1] <= b[j2] else j2
            a[ja] += 1
            b[jb] += 1
        else:
            i = bisect(cum_mu, (u - p_arr) * total)
            if i >= n:
                i = n - 1
            if a[i] > 0:
                a[i] -= 1
            if b[i] > 0:
                b[i] -= 1
        r += 1
        if r % sample_rounds == 0:
            l0 = l0_distance(a, b)
            l1 = l1_distance(a, b)
            t = r * dt
            series.append((t, l0, l1))
            if recovery_time is None and l0 <= eps_target:
                recovery_time = t
            if l1 == 0.0:
                coalesced_at = t
                break

    fit_points = [(t, math.log(l1)) for t, _, l1 in series if l1 > 0]
    decay_rate = None
    if len(fit_points) >= 2:
        ts = np.array([p[0] for p in fit_points])
        ys = np.array([p[1] for p in fit_points])
        slope = np.polyfit(ts, ys, 1)[0]
        decay_rate = -float(slope)
    return {
        "series": series,
        "recovery_time": recovery_time,
        "horizon_exceeded": recovery_time is None,
        "coalesced_at": coalesced_at,
        "l1_decay_rate": decay_rate,
        "time_per_round": dt,
        "final_l0": series[-1][1] if series else (0.0 if c_max == 0 else None),
        "final_l1": series[-1][2] if series else (0.0 if c_max == 0 else None),
    }
