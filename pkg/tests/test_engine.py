import math

import pytest

from hetsched.engine import (
    JOB_ARRIVAL, TASK_COMPLETION, DiscreteChainState, EventQueue,
    RandomStream, sample_exponential, step_discrete,
)
from hetsched.errors import ConfigurationError, SimulationFault


class ScriptedRng:
    """random.Random stand-in returning a fixed uniform sequence."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_exponential_mean_converges():
    rng = RandomStream(1).rng("service")
    n = 1_000_000
    total = sum(sample_exponential(rng, 1.0) for _ in range(n))
    assert abs(total / n - 1.0) < 0.005


def test_exponential_draws_nonnegative():
    rng = RandomStream(2).rng("service")
    assert all(sample_exponential(rng, 2.0) >= 0.0 for _ in range(1000))


@pytest.mark.parametrize("rate", [0.0, -1.0, math.inf, math.nan])
def test_exponential_rejects_bad_rates(rate):
    rng = RandomStream(3).rng("service")
    with pytest.raises(ConfigurationError):
        sample_exponential(rng, rate)


def test_event_queue_orders_by_time_then_sequence():
    q = EventQueue()
    q.push(5.0, JOB_ARRIVAL, "first-at-5")
    q.push(5.0, TASK_COMPLETION, "second-at-5")
    q.push(1.0, JOB_ARRIVAL, "early")
    assert q.pop()[3] == "early"
    assert q.pop()[3] == "first-at-5"
    assert q.pop()[3] == "second-at-5"
    assert q.pop() is None  # simulation-complete signal, not an error


def test_event_queue_clock_advances_and_rejects_past():
    q = EventQueue()
    q.push(2.0, JOB_ARRIVAL)
    q.pop()
    assert q.now == 2.0
    with pytest.raises(SimulationFault):
        q.push(1.0, JOB_ARRIVAL)


def test_event_queue_min_time_first():
    q = EventQueue()
    q.push(1.0, JOB_ARRIVAL, "late")
    q.push(0.5, JOB_ARRIVAL, "early")
    assert q.pop()[0] == 0.5


def test_step_discrete_arrival_branch():
    # lam=1, mu=[1]: arrival iff the event draw falls below 1/2.
    state = DiscreteChainState([0])
    rng = ScriptedRng([0.49, 0.3])
    step_discrete(state, 1.0, [1.0], lambda queues, u: 0, rng)
    assert state.queues == [1]
    assert state.rounds == 1


def test_step_discrete_processing_branch_and_empty_noop():
    state = DiscreteChainState([0])
    rng = ScriptedRng([0.9])  # processing event at the (empty) worker
    step_discrete(state, 1.0, [1.0], lambda queues, u: 0, rng)
    assert state.queues == [0]  # nothing happens on an empty queue


def test_step_discrete_fast_worker_probability():
    # Nine rate-1 workers plus one rate-6 worker, lam=14: the processing
    # probability at the fast worker is mu_i/(lam + sum mu) = 6/29.
    lam, mu = 14.0, [1.0] * 9 + [6.0]
    total = lam + sum(mu)
    rng = RandomStream(11).rng("arrivals")
    state = DiscreteChainState([5] * 10)
    hits = 0
    rounds = 200_000
    for _ in range(rounds):
        before = state.queues[9]
        step_discrete(state, lam, mu, lambda queues, u: int(u * 10), rng)
        if state.queues[9] == before - 1:
            hits += 1
        state.queues = [max(qv, 5) for qv in state.queues]  # keep busy
    assert abs(hits / rounds - 6.0 / total) < 0.005


def test_step_discrete_rejects_bad_rates():
    state = DiscreteChainState([0])
    rng = ScriptedRng([0.1])
    with pytest.raises(ConfigurationError):
        step_discrete(state, -1.0, [1.0], lambda q, u: 0, rng)
    with pytest.raises(ConfigurationError):
        step_discrete(state, 1.0, [-1.0], lambda q, u: 0, rng)
    with pytest.raises(ConfigurationError):
        step_discrete(state, 1.0, [0.0], lambda q, u: 0, rng)


def test_random_streams_reproducible_and_independent():
    a = RandomStream(123)
    b = RandomStream(123)
    seq_a = [a.rng("arrivals").random() for _ in range(50)]
    seq_b = [b.rng("arrivals").random() for _ in range(50)]
    assert seq_a == seq_b
    c = RandomStream(123)
    arrivals = [c.rng("arrivals").random() for _ in range(50)]
    policy = [c.rng("policy").random() for _ in range(50)]
    assert arrivals != policy


def test_discrete_uniform_routing_geometric_marginals():
    # Uniform mu, uniform routing: each queue is a reflected random walk
    # whose stationary tail is rho**k with rho = lam / sum(mu).
    n, rho = 10, 0.7
    lam, mu = rho * n, [1.0] * n
    rng = RandomStream(2).rng("arrivals")
    state = DiscreteChainState([0] * n)
    rounds, warmup = 1_000_000, 200_000
    occupancy = [dict() for _ in range(n)]
    last_round = [warmup] * n
    prev = list(state.queues)
    for r in range(rounds):
        step_discrete(state, lam, mu, lambda queues, u: int(u * n), rng)
        if r < warmup:
            prev = list(state.queues)
            continue
        for i in range(n):  # at most one worker changed this round
            if state.queues[i] != prev[i]:
                bucket = occupancy[i]
                bucket[prev[i]] = bucket.get(prev[i], 0) + (r - last_round[i])
                last_round[i] = r
                prev[i] = state.queues[i]
                break
    for i in range(n):
        occupancy[i][prev[i]] = occupancy[i].get(prev[i], 0) + (rounds - last_round[i])
    span = rounds - warmup
    for i in range(n):
        for k in range(6):
            tail = sum(c for lvl, c in occupancy[i].items() if lvl >= k) / span
            assert abs(tail - rho ** k) < 0.02, (i, k, tail)
