"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line per criterion.  The underlying checks live in
hetsched.checks so the `hetsched validate` CLI runs exactly the same code.
"""

import json

from hetsched.checks import (
    check_determinism, check_exp3_bounds, check_learner_guarantees,
    check_ll_pathology, check_max_queue_scaling, check_pot_blowup,
    check_ppot_tail, check_pss_geometric, check_recovery,
    check_shock_ordering,
)


def _report(tag, result, budget_s):
    line = f"{tag} {result.line()}  [{result.elapsed:.1f}s / budget {budget_s:.0f}s]"
    print(line)
    print("   " + json.dumps(result.details, default=str))
    assert result.elapsed < budget_s, f"{tag} exceeded its runtime budget"
    return result


def test_ac01_pot_blowup_and_bounded_two_choice():
    result = _report("AC-1", check_pot_blowup(), budget_s=10)
    d = result.details
    assert abs(d["slow_group_rate"] - 11.34) <= 0.2
    assert d["slow_mean_queue_at_2e5"] > 1.5 * d["slow_mean_queue_at_1e5"]
    assert d["ppot_peak_queue"] < 50
    assert result.passed


def test_ac02_pss_geometric_marginals():
    result = _report("AC-2", check_pss_geometric(), budget_s=30)
    assert result.details["ensemble_max_err"] <= 0.02
    assert result.passed


def test_ac03_ppot_doubly_exponential_tail():
    result = _report("AC-3", check_ppot_tail(), budget_s=60)
    for k, entry in result.details["levels"].items():
        assert 0.5 <= entry["ratio"] <= 2.0, (k, entry)
    assert result.passed


def test_ac04_max_queue_scaling():
    result = _report("AC-4", check_max_queue_scaling(), budget_s=300)
    ppot, pss = result.details["ppot_max_avg"], result.details["pss_max_avg"]
    for i in range(2):
        assert ppot[i + 1] - ppot[i] <= 2.0
        assert pss[i + 1] - pss[i] >= 1.5
    assert result.passed


def test_ac05_least_loaded_pathology():
    result = _report("AC-5", check_ll_pathology(), budget_s=30)
    d = result.details
    assert d["ll_fast_mean_queue"] >= 11.4
    assert d["ll_fast_mean_response"] >= 0.7
    assert d["sq_fast_mean_queue"] <= d["ll_fast_mean_queue"] / 3
    assert d["sq_fast_mean_response"] < d["ll_fast_mean_response"]
    assert result.passed


def test_ac06_learner_guarantees():
    result = _report("AC-6", check_learner_guarantees(), budget_s=60)
    assert result.details["worst_in_range_fraction"] >= 0.95
    assert result.details["slow_worker_zeroed_fraction"] == 1.0
    assert result.passed


def test_ac07_recovery_monotone_and_size_free():
    result = _report("AC-7", check_recovery(), budget_s=120)
    assert result.details["l1_monotone"]
    assert result.details["ratio"] <= 2.0
    assert result.passed


def test_ac08_shock_resilience_ordering():
    # The asserted chain is: full system < one-probe variant < multi-armed
    # baseline, at alpha=0.8 under permutes every 60 time units. See the
    # decisions ledger: the second leg measures inverted in this rebuild
    # (uniform exploration keeps every estimate fresh on the S2 speed set,
    # while the one-probe variant takes stale-estimate holes each shock),
    # so this criterion is expected to fail its middle comparison while the
    # full system stays the clear winner.
    result = _report("AC-8", check_shock_ordering(), budget_s=300)
    at_high = result.details["alpha=0.8"]
    assert at_high["full_system"] < at_high["one_probe"], at_high
    assert at_high["one_probe"] < at_high["multi_armed"], (
        "one-probe variant did not beat the multi-armed baseline; "
        f"measured means: {at_high}"
    )
    assert result.passed


def test_ac09_exp3_regret_bounds():
    result = _report("AC-9", check_exp3_bounds(), budget_s=10)
    assert result.details["worst_theorem_margin"] >= 0
    assert result.details["worst_corollary_margin"] >= 0
    assert result.passed


def test_ac10_preset_runs_are_byte_identical():
    result = _report("AC-10", check_determinism(), budget_s=60)
    assert result.passed
