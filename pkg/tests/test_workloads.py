import collections

import pytest

from hetsched.engine import RandomStream, sample_exponential
from hetsched.errors import ConfigurationError
from hetsched.workloads import (
    FIXED_SETS, JobSource, ShockSchedule, WorkloadSpec, apply_shock,
    make_profile, zipf_speeds,
)


def test_zipf_mass_ratio_between_first_two_classes():
    rng = RandomStream(1).rng("speeds")
    speeds = zipf_speeds(40_000, rng, exponent=2.0, cap=100.0)
    counts = collections.Counter(speeds)
    ratio = counts[1.0] / counts[0.5]
    assert abs(ratio - 4.0) < 0.35  # P[k=1]/P[k=2] = 2**2


def test_zipf_respects_cap():
    rng = RandomStream(2).rng("speeds")
    speeds = zipf_speeds(5000, rng, exponent=2.0, cap=100.0)
    assert max(speeds) / min(speeds) <= 100.0 + 1e-12


def test_zipf_huge_exponent_degenerates_to_homogeneous():
    rng = RandomStream(3).rng("speeds")
    speeds = zipf_speeds(500, rng, exponent=60.0, cap=100.0)
    assert all(s == 1.0 for s in speeds)


def test_zipf_parameter_validation():
    rng = RandomStream(4).rng("speeds")
    with pytest.raises(ConfigurationError):
        zipf_speeds(10, rng, exponent=1.0)
    with pytest.raises(ConfigurationError):
        zipf_speeds(10, rng, cap=1.0)


def test_fixed_set_s1_exact():
    assert FIXED_SETS["S1"] == [
        0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6,
    ]


def test_fixed_set_s2_exact():
    assert FIXED_SETS["S2"] == [
        0.15, 0.15, 0.15, 0.15, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 1, 1, 1, 2, 2,
    ]


def test_fixed_set_tpch_shape():
    assert FIXED_SETS["TPCH"][0] == 0.01
    assert FIXED_SETS["TPCH"][-1] == 0.81
    assert len(FIXED_SETS["TPCH"]) == 9


def test_fixed_profile_tiling():
    profile = make_profile("fixed", fixed_name="S1", n=30)
    assert profile.n == 30
    assert profile.total == pytest.approx(2 * 13.5)
    with pytest.raises(ConfigurationError):
        make_profile("fixed", fixed_name="S1", n=20)


def test_permute_shock_preserves_multiset_and_capacity():
    rng = RandomStream(5).rng("shocks")
    profile = make_profile("fixed", fixed_name="S1")
    before_total = profile.total
    new_speeds = apply_shock(profile, ShockSchedule(period=1.0, mode="permute"), rng)
    assert sorted(new_speeds) == sorted(profile.speeds)
    assert sum(new_speeds) == pytest.approx(before_total)


def test_resample_shock_redraws_and_rate_follows_alpha():
    rng = RandomStream(6).rng("shocks")
    profile = make_profile("zipf", n=100, stream_rng=rng)
    spec = WorkloadSpec(alpha=0.9, max_events=10)
    lam_before = spec.arrival_rate(profile.total)
    new_speeds = apply_shock(profile, ShockSchedule(period=1.0, mode="resample"), rng)
    profile.speeds[:] = new_speeds
    lam_after = spec.arrival_rate(profile.total)
    assert lam_after == pytest.approx(0.9 * sum(new_speeds))
    assert lam_before != lam_after  # capacity moved, rate follows


def test_arrival_rate_is_alpha_times_capacity():
    spec = WorkloadSpec(alpha=0.9, max_events=10)
    assert spec.arrival_rate(15.0) == pytest.approx(13.5)


def test_sleep_mode_rescales_effective_capacity():
    spec = WorkloadSpec(alpha=0.8, task_size_mean=0.1, max_events=10)
    assert spec.effective_capacity(9.75, "sleep") == pytest.approx(97.5)
    assert spec.arrival_rate(9.75, "sleep") == pytest.approx(78.0)
    assert spec.load_ratio(9.75, "sleep") == pytest.approx(0.8)


def test_workload_spec_validation():
    with pytest.raises(ConfigurationError):
        WorkloadSpec(alpha=0.5, lambda_rate=3.0, max_events=10)
    with pytest.raises(ConfigurationError):
        WorkloadSpec(max_events=10)
    with pytest.raises(ConfigurationError):
        WorkloadSpec(alpha=0.5)
    with pytest.raises(ConfigurationError):
        WorkloadSpec(alpha=0.5, tasks_per_job=0, max_events=10)


def test_empirical_arrival_rate_within_one_percent():
    rng = RandomStream(7).rng("arrivals")
    lam = 3.0
    n = 1_000_000
    total = sum(sample_exponential(rng, lam) for _ in range(n))
    assert abs(n / total - lam) / lam < 0.01


def test_job_source_draws_are_reproducible():
    spec = WorkloadSpec(alpha=0.5, tasks_per_job=3, max_events=10)
    src_a = JobSource(spec, RandomStream(8).rng("arrivals"))
    src_b = JobSource(spec, RandomStream(8).rng("arrivals"))
    seq_a = [src_a.next_gap(2.0) for _ in range(10)] + [src_a.task_work() for _ in range(10)]
    seq_b = [src_b.next_gap(2.0) for _ in range(10)] + [src_b.task_work() for _ in range(10)]
    assert seq_a == seq_b
    job_id, task_ids = src_a.next_ids()
    assert job_id == 0 and task_ids == [0, 1, 2]
