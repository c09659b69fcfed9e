"""Workers, tasks, and jobs.

Each worker runs one task at a time from two FIFO queues: real work and
low-priority benchmark probes.  A benchmark starts only when no real task
is waiting, and an in-flight benchmark runs to completion (no mid-task
preemption), so a benchmark can delay a real task by at most one residual
service time.
"""

from __future__ import annotations

import math
from collections import deque

from .engine import sample_exponential
from .errors import ConfigurationError, SimulationFault

MEMORYLESS = "memoryless"
SLEEP = "sleep"
SERVICE_MODES = (MEMORYLESS, SLEEP)


class Task:
    __slots__ = (
        "id", "job_id", "work", "is_benchmark",
        "arrival_time", "start_time", "finish_time",
    )

    def __init__(self, task_id, job_id, work, is_benchmark=False, arrival_time=None):
        if work <= 0 or not math.isfinite(work):
            raise ConfigurationError(f"task work must be positive, got {work!r}")
        self.id = task_id
        self.job_id = job_id
        self.work = work
        self.is_benchmark = is_benchmark
        self.arrival_time = arrival_time
        self.start_time = None
        self.finish_time = None


class Job:
    __slots__ = ("id", "arrival_time", "tasks", "remaining")

    def __init__(self, job_id, arrival_time, tasks):
        self.id = job_id
        self.arrival_time = arrival_time
        self.tasks = tasks
        self.remaining = len(tasks)

    @property
    def response_time(self):
        """max task finish minus arrival; defined only once all tasks finished."""
        if self.remaining:
            return None
        return max(t.finish_time for t in self.tasks) - self.arrival_time


def service_duration(rate: float, task: Task, mode: str, service_rng) -> float:
    """Time to serve ``task`` at a worker of speed ``rate``.

    memoryless: fresh exponential with mean 1/rate, the task size is ignored.
    sleep: exactly work/rate, the deterministic sleep-task model.
    Dispatching to a zero-rate worker is a scheduler bug, not a data error.
    """
    if rate <= 0 or not math.isfinite(rate):
        raise SimulationFault(f"task dispatched to worker with rate {rate!r}")
    if mode == MEMORYLESS:
        return sample_exponential(service_rng, rate)
    if mode == SLEEP:
        return task.work / rate
    raise ConfigurationError(f"unknown service mode {mode!r}")


class Worker:
    """One server: a rate, two FIFO queues, and at most one task in service.

    ``queue_len`` counts waiting real tasks only (the in-service task is
    excluded; least-loaded comparisons add it back as (q+1)/mu).
    """

    __slots__ = (
        "id", "rate", "real_queue", "bench_queue", "in_service",
        "service_started", "completions", "busy_time", "bench_busy_time",
    )

    def __init__(self, worker_id: int, rate: float):
        if rate < 0 or not math.isfinite(rate):
            raise ConfigurationError(f"worker rate must be non-negative, got {rate!r}")
        self.id = worker_id
        self.rate = rate
        self.real_queue: deque[Task] = deque()
        self.bench_queue: deque[Task] = deque()
        self.in_service: Task | None = None
        self.service_started = 0.0
        self.completions = 0
        self.busy_time = 0.0
        self.bench_busy_time = 0.0

    @property
    def queue_len(self) -> int:
        return len(self.real_queue)

    @property
    def system_len(self) -> int:
        """Real tasks present, counting the one in service; benchmarks excluded."""
        n = len(self.real_queue)
        if self.in_service is not None and not self.in_service.is_benchmark:
            n += 1
        return n

    def enqueue(self, task: Task, now: float, mode: str, service_rng):
        """Queue a task; if the worker is idle it enters service immediately.

        Returns the service duration when service starts, else None (the
        caller schedules the completion event).
        """
        if task.is_benchmark:
            self.bench_queue.append(task)
        else:
            self.real_queue.append(task)
        if self.in_service is None:
            return self._start_next(now, mode, service_rng)
        return None

    def _start_next(self, now: float, mode: str, service_rng):
        # Real work strictly before benchmarks.
        if self.real_queue:
            task = self.real_queue.popleft()
        elif self.bench_queue:
            task = self.bench_queue.popleft()
        else:
            return None
        task.start_time = now
        self.in_service = task
        self.service_started = now
        return service_duration(self.rate, task, mode, service_rng)

    def complete_current(self, now: float, mode: str, service_rng):
        """Finish the in-service task and pull the next one.

        Returns (finished_task, next_duration_or_None).  The caller feeds
        the finished duration to the speed learner; benchmark completions
        count there just like real ones.
        """
        task = self.in_service
        if task is None:
            raise SimulationFault(
                f"completion event at worker {self.id} with nothing in service"
            )
        task.finish_time = now
        duration = now - self.service_started
        self.in_service = None
        self.completions += 1
        self.busy_time += duration
        if task.is_benchmark:
            self.bench_busy_time += duration
        next_duration = self._start_next(now, mode, service_rng)
        return task, next_duration
