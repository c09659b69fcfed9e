"""Named validation checks tying simulations back to the analytic oracles.

Each check builds its configuration, runs it, and reports pass/fail with
the measured numbers.  Tolerances are fixed here, not configurable: they
are the acceptance gates of the artifact.  The `validate` CLI subcommand
and the acceptance test suite both call these functions.
"""

from __future__ import annotations

import filecmp
import math
import os
import tempfile
import time
import warnings
from dataclasses import dataclass, field

from .analytics import mm1_tail, ppot_tail
from .bandits import run_exp3_regret, tuned_gamma
from .config import ExperimentConfig
from .engine import RandomStream
from .errors import ConfigurationError
from .learning import LearnerConfig, derive_params
from .policies import PolicyConfig
from .presets import preset
from .runner import run_experiment
from .simulation import (
    RunSpec, coupled_recovery_run, run_discrete_tails, run_simulation,
)
from .workloads import FIXED_SETS, ShockSchedule, WorkloadSpec, make_profile


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.time()
        result = fn(*args, **kwargs)
        result.elapsed = time.time() - start
        return result
    return wrapper


# ---------------------------------------------------------------------------
# AC-1: uniform two-choice sampling overloads the slow group


@_timed
def check_pot_blowup(seed: int = 1) -> CheckResult:
    speeds = [1.0] * 9 + [6.0]

    def build(kind):
        return RunSpec(
            profile=make_profile("explicit", values=list(speeds)),
            workload=WorkloadSpec(lambda_rate=14.0, max_events=200000),
            policy=PolicyConfig(kind),
            seed=seed,
            sample_interval=5.0,
            warmup_fraction=0.2,
            milestones=(100000, 200000),
        )

    pot = run_simulation(build("PoT"))
    slow_rate = pot.group_rates.get(1.0, 0.0)
    q1 = pot.milestones[100000]["levels"]
    q2 = pot.milestones[200000]["levels"]
    slow_mean_1 = sum(q1[i] for i in range(9)) / 9
    slow_mean_2 = sum(q2[i] for i in range(9)) / 9

    ppot = run_simulation(build("PPoT_SQ"))

    rate_ok = abs(slow_rate - 11.34) <= 0.2
    growth_ok = slow_mean_2 > 1.5 * slow_mean_1
    bounded_ok = ppot.peak_queue < 50
    return CheckResult(
        "pot-blowup", rate_ok and growth_ok and bounded_ok,
        {
            "slow_group_rate": slow_rate, "expected_rate": 11.34,
            "slow_mean_queue_at_1e5": slow_mean_1,
            "slow_mean_queue_at_2e5": slow_mean_2,
            "ppot_peak_queue": ppot.peak_queue,
        },
    )


# ---------------------------------------------------------------------------
# AC-2: geometric marginals under proportional sampling


@_timed
def check_pss_geometric(seed: int = 42, alpha: float = 0.7) -> CheckResult:
    if not 0 < alpha < 1:
        raise ConfigurationError(
            f"geometric-marginal check needs alpha in (0,1), got {alpha!r}"
        )
    streams = RandomStream(seed)
    profile = make_profile("zipf", n=100, stream_rng=streams.rng("speeds"))
    spec = RunSpec(
        profile=profile,
        workload=WorkloadSpec(alpha=alpha, max_events=1000000),
        policy=PolicyConfig("PSS"),
        seed=seed,
        sample_interval=10.0,
        warmup_fraction=0.2,
    )
    report = run_simulation(spec)

    # The marginal is the same for every worker, so the ensemble tail is
    # the per-worker estimate pooled over all the data; it carries the
    # +-0.02 gate.  Individual workers are additionally held to a wide
    # structural band that catches blow-ups or policy skew but tolerates
    # the sampling noise of slow, rarely-cycling workers.
    ensemble_errs = []
    for k in range(1, 6):
        pooled = sum(report.occupancy_tail(i, k) for i in range(100)) / 100
        ensemble_errs.append(abs(pooled - mm1_tail(alpha, k)))
    ensemble_ok = max(ensemble_errs) <= 0.02

    worst_worker = 0.0
    structural_ok = True
    for i in range(100):
        for k in range(1, 6):
            err = abs(report.occupancy_tail(i, k) - mm1_tail(alpha, k))
            worst_worker = max(worst_worker, err)
            if err > 0.5 * mm1_tail(alpha, k) + 0.05:
                structural_ok = False
    return CheckResult(
        "pss-geometric", ensemble_ok and structural_ok,
        {
            "ensemble_max_err": max(ensemble_errs),
            "tolerance": 0.02,
            "worst_worker_err": worst_worker,
            "n_events": 1000000,
        },
    )


# ---------------------------------------------------------------------------
# AC-3: doubly-exponential tail under two proportional choices


@_timed
def check_ppot_tail(seed: int = 7) -> CheckResult:
    n, alpha = 1000, 0.9
    out = run_discrete_tails(
        n, [1.0] * n, alpha * n, "PPoT_SQ", seed,
        rounds=2000000, warmup_rounds=400000, k_max=8,
    )
    ratios = {}
    ok = True
    for k in (1, 2, 3):
        expected = ppot_tail(alpha, k)
        measured = out["tail_avg"][k]
        ratio = measured / expected if expected > 0 else math.inf
        ratios[k] = {"measured": measured, "expected": expected, "ratio": ratio}
        if not 0.5 <= ratio <= 2.0:
            ok = False
    return CheckResult("ppot-tail", ok, {"levels": ratios})


# ---------------------------------------------------------------------------
# AC-4: max-queue growth, log n for one choice vs log log n for two


@_timed
def check_max_queue_scaling(seeds=(1, 2, 3, 4, 5)) -> CheckResult:
    alpha = 0.9
    sizes = (256, 1024, 4096)
    horizon = 600.0  # time units; warm-up is the first third
    averages = {"PPoT_SQ": [], "PSS": []}
    for n in sizes:
        rounds = int(horizon * (1.0 + alpha) * n)
        for kind in ("PPoT_SQ", "PSS"):
            vals = []
            for seed in seeds:
                out = run_discrete_tails(
                    n, [1.0] * n, alpha * n, kind, seed,
                    rounds=rounds, warmup_rounds=rounds // 3, k_max=4,
                )
                vals.append(out["max_avg"])
            averages[kind].append(sum(vals) / len(vals))

    ppot = averages["PPoT_SQ"]
    pss = averages["PSS"]
    ppot_ok = all(ppot[i + 1] - ppot[i] <= 2.0 for i in range(2))
    pss_ok = all(pss[i + 1] - pss[i] >= 1.5 for i in range(2))
    return CheckResult(
        "max-queue-scaling", ppot_ok and pss_ok,
        {
            "sizes": list(sizes),
            "ppot_max_avg": ppot,
            "pss_max_avg": pss,
        },
    )


# ---------------------------------------------------------------------------
# AC-5: least-loaded routing turns the fast worker into a slow one


@_timed
def check_ll_pathology(seed: int = 1) -> CheckResult:
    mu = 20
    speeds = [float(mu)] + [1.0] * mu

    def run(kind):
        return run_simulation(RunSpec(
            profile=make_profile("explicit", values=list(speeds)),
            workload=WorkloadSpec(lambda_rate=1.5 * mu, max_events=600000),
            policy=PolicyConfig(kind),
            seed=seed,
            sample_interval=5.0,
            warmup_fraction=0.3,
        ))

    ll = run("PPoT_LL")
    sq = run("PPoT_SQ")
    ll_queue = ll.occupancy_mean(0)
    sq_queue = sq.occupancy_mean(0)
    ll_resp = ll.worker_mean_response(0)
    sq_resp = sq.worker_mean_response(0)

    queue_floor_ok = ll_queue >= 0.6 * (mu - 1)
    resp_floor_ok = ll_resp >= 0.7
    sq_queue_ok = sq_queue <= ll_queue / 3.0
    sq_resp_ok = sq_resp < ll_resp
    return CheckResult(
        "ll-pathology",
        queue_floor_ok and resp_floor_ok and sq_queue_ok and sq_resp_ok,
        {
            "ll_fast_mean_queue": ll_queue, "queue_floor": 0.6 * (mu - 1),
            "ll_fast_mean_response": ll_resp,
            "sq_fast_mean_queue": sq_queue,
            "sq_fast_mean_response": sq_resp,
            "ll_overall_mean_response": ll.responses["mean"],
            "sq_overall_mean_response": sq.responses["mean"],
            "ll_overall_mean_wait": ll.mean_wait,
            "sq_overall_mean_wait": sq.mean_wait,
        },
    )


# ---------------------------------------------------------------------------
# AC-6: learner accuracy band and slow-worker cutoff


def _learner_run(values, seed):
    profile = make_profile("explicit", values=values)
    spec = RunSpec(
        profile=profile,
        workload=WorkloadSpec(alpha=0.5, max_time=20000.0),
        policy=PolicyConfig("PPoT_SQ", speed_source="learned"),
        learner=LearnerConfig(mu_bar=profile.total, window_mode="theoretical"),
        benchmarks=True,
        seed=seed,
        sample_interval=5.0,
        warmup_fraction=0.6,
        track_mu_hat=True,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_simulation(spec), profile.speeds


@_timed
def check_learner_guarantees(seed: int = 11) -> CheckResult:
    alpha = 0.5
    s1 = [float(v) for v in FIXED_SETS["S1"]]
    params = derive_params(alpha, 1.0, len(s1), "theoretical")
    eps = params.epsilon

    report, speeds = _learner_run(s1, seed)
    total = len(report.mu_hat_samples)
    in_range_fraction = {}
    accuracy_ok = True
    for i, mu in enumerate(speeds):
        hits = sum(
            1 for _, mh in report.mu_hat_samples
            if (1 - 2 * eps) * mu <= mh[i] <= (1 + eps) * mu
        )
        frac = hits / total
        in_range_fraction[i] = frac
        if frac < 0.95:
            accuracy_ok = False

    # Second run with one worker below the cutoff (1-eps)(1-alpha)/10.
    cutoff = (1 - eps) * (1 - alpha) / 10.0
    slow_value = 0.02
    report2, _ = _learner_run(s1 + [slow_value], seed)
    slow_idx = len(s1)
    zero_hits = sum(1 for _, mh in report2.mu_hat_samples if mh[slow_idx] == 0.0)
    zeroed_ok = zero_hits == len(report2.mu_hat_samples)

    return CheckResult(
        "learner-guarantees", accuracy_ok and zeroed_ok,
        {
            "epsilon": eps,
            "worst_in_range_fraction": min(in_range_fraction.values()),
            "samples": total,
            "cutoff": cutoff, "slow_worker_rate": slow_value,
            "slow_worker_zeroed_fraction": zero_hits / len(report2.mu_hat_samples),
        },
    )


# ---------------------------------------------------------------------------
# AC-7: recovery is monotone in l1 and size-independent in time


@_timed
def check_recovery(seed: int = 3) -> CheckResult:
    alpha, c_max, eps_target = 0.5, 20, 0.05
    results = {}
    monotone_ok = True
    for n in (256, 4096):
        out = coupled_recovery_run(
            n, [1.0] * n, alpha * n, seed, c_max=c_max,
            eps_target=eps_target, horizon_time=400.0,
        )
        l1s = [point[2] for point in out["series"]]
        if any(b > a for a, b in zip(l1s, l1s[1:])):
            monotone_ok = False
        results[n] = out["recovery_time"]
    t_small, t_large = results[256], results[4096]
    found_ok = t_small is not None and t_large is not None
    ratio = (max(t_small, t_large) / min(t_small, t_large)) if found_ok else None
    ratio_ok = found_ok and ratio <= 2.0
    return CheckResult(
        "recovery", monotone_ok and ratio_ok,
        {
            "recovery_time_n256": t_small,
            "recovery_time_n4096": t_large,
            "ratio": ratio,
            "l1_monotone": monotone_ok,
        },
    )


# ---------------------------------------------------------------------------
# AC-8: response-time ordering under periodic speed permutations


def _shock_run(kind, alpha, seed, benchmarks, eta=None):
    profile = make_profile("fixed", fixed_name="S2")
    spec = RunSpec(
        profile=profile,
        workload=WorkloadSpec(alpha=alpha, task_size_mean=0.1, max_time=6000.0),
        policy=PolicyConfig(kind, explore_prob=eta, speed_source="learned"),
        shock=ShockSchedule(period=60.0, mode="permute"),
        learner=LearnerConfig(
            mu_bar=profile.total / 0.1, window_mode="practical",
            window_c=20.0, arrival_window=1000,
        ),
        benchmarks=benchmarks,
        seed=seed,
        sample_interval=10.0,
        warmup_fraction=0.5,
        service_mode="sleep",
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return run_simulation(spec).responses["mean"]


@_timed
def check_shock_ordering(seeds=(1, 2, 3)) -> CheckResult:
    details = {}
    for alpha in (0.5, 0.8):
        means = {}
        for label, kind, bench, eta in (
            ("full_system", "PPoT_SQ", True, None),
            ("one_probe", "PSS", True, None),
            ("multi_armed", "MultiArmed", False, 0.2),
        ):
            vals = [_shock_run(kind, alpha, s, bench, eta) for s in seeds]
            means[label] = sum(vals) / len(vals)
        details[f"alpha={alpha}"] = means
    at_high = details["alpha=0.8"]
    ordering_ok = (
        at_high["full_system"] < at_high["one_probe"] < at_high["multi_armed"]
    )
    details["asserted"] = "full_system < one_probe < multi_armed at alpha=0.8"
    details["full_system_best"] = (
        at_high["full_system"] < at_high["one_probe"]
        and at_high["full_system"] < at_high["multi_armed"]
    )
    return CheckResult("shock-ordering", ordering_ok, details)


# ---------------------------------------------------------------------------
# AC-9: exponential-weight regret bounds


@_timed
def check_exp3_bounds(seeds=tuple(range(10))) -> CheckResult:
    rates = [1.0, 2.0, 3.0, 4.0]
    rounds = 10000
    worst_theorem_margin = math.inf
    worst_corollary_margin = math.inf
    all_ok = True
    for seed in seeds:
        out = run_exp3_regret(rates, rounds, seed)
        theorem_ok = out["regret"] <= out["theorem_bound"]
        corollary_ok = out["regret"] <= out["corollary_bound"]
        worst_theorem_margin = min(
            worst_theorem_margin, out["theorem_bound"] - out["regret"])
        worst_corollary_margin = min(
            worst_corollary_margin, out["corollary_bound"] - out["regret"])
        if not (theorem_ok and corollary_ok):
            all_ok = False
    return CheckResult(
        "exp3-regret", all_ok,
        {
            "rates": rates, "rounds": rounds, "n_seeds": len(seeds),
            "gamma": tuned_gamma(
                rounds * (1.0 / 10.0) * (1.0 - rates[0] / rates[-1]), len(rates)),
            "worst_theorem_margin": worst_theorem_margin,
            "worst_corollary_margin": worst_corollary_margin,
        },
    )


# ---------------------------------------------------------------------------
# AC-10: byte-identical replays


@_timed
def check_determinism(preset_name: str = "blowup") -> CheckResult:
    config = ExperimentConfig.from_dict(preset(preset_name))
    with tempfile.TemporaryDirectory() as tmp:
        dir_a = os.path.join(tmp, "a")
        dir_b = os.path.join(tmp, "b")
        run_experiment(config, dir_a)
        run_experiment(config, dir_b)
        identical = all(
            filecmp.cmp(
                os.path.join(dir_a, name), os.path.join(dir_b, name),
                shallow=False,
            )
            for name in ("summary.csv", "timeseries.csv", "histogram.csv")
        )
    return CheckResult(
        "determinism", identical, {"preset": preset_name},
    )


# ---------------------------------------------------------------------------
# Quick standalone invariant: exact l1 monotonicity of the coupling


@_timed
def check_l1_monotone(seed: int = 9) -> CheckResult:
    out = coupled_recovery_run(
        64, [1.0] * 64, 32.0, seed, c_max=10, horizon_time=200.0,
    )
    l1s = [point[2] for point in out["series"]]
    ok = all(b <= a for a, b in zip(l1s, l1s[1:]))
    return CheckResult("l1-monotone", ok, {"samples": len(l1s)})


CHECKS = {
    "pot-blowup": check_pot_blowup,
    "pss-geometric": check_pss_geometric,
    "ppot-tail": check_ppot_tail,
    "max-queue-scaling": check_max_queue_scaling,
    "ll-pathology": check_ll_pathology,
    "learner-guarantees": check_learner_guarantees,
    "recovery": check_recovery,
    "shock-ordering": check_shock_ordering,
    "exp3-regret": check_exp3_bounds,
    "determinism": check_determinism,
    "l1-monotone": check_l1_monotone,
}


def run_checks(names=None):
    selected = names or list(CHECKS)
    results = []
    for name in selected:
        if name not in CHECKS:
            raise ConfigurationError(
                f"unknown check {name!r}; available: {', '.join(sorted(CHECKS))}"
            )
        results.append(CHECKS[name]())
    return results
