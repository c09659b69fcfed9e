"""Experiment execution: expand the run matrix, run it (optionally in
parallel), and emit the three CSVs plus an echo of the resolved config."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import yaml

from .config import ExperimentConfig
from .reporting import (
    HISTOGRAM_COLUMNS, SUMMARY_COLUMNS, TIMESERIES_COLUMNS,
    atomic_write_text, histogram_rows, recovery_timeseries_rows, summary_row,
    timeseries_rows, write_csv,
)
from .simulation import coupled_recovery_run, run_discrete_tails, run_simulation


def _continuous_run(raw: dict, policy_index: int, seed: int):
    config = ExperimentConfig.from_dict(raw)
    spec = config.build_run_spec(config.policies[policy_index], seed)
    report = run_simulation(spec)
    return summary_row(report), timeseries_rows(report), histogram_rows(report)


def _discrete_run(raw: dict, policy_index: int, seed: int):
    config = ExperimentConfig.from_dict(raw)
    policy = config.policies[policy_index]
    profile = config.build_profile(seed)
    workload = config.build_workload()
    lam = workload.arrival_rate(profile.total)
    label = policy.label()
    alpha = workload.load_ratio(profile.total)
    metrics = raw.get("metrics") or {}
    initial_queue = raw.get("initial_queue", 0)

    if initial_queue > 0:
        # Coupled recovery mode: a backlogged copy chases a stationary twin.
        horizon = workload.max_time or 400.0
        result = coupled_recovery_run(
            profile.n, profile.speeds, lam, seed, c_max=initial_queue,
            horizon_time=horizon,
            sample_interval=metrics.get("sample_interval", 0.5),
            policy_kind=policy.kind,
        )
        summary = {
            "policy": label, "seed": seed, "alpha": alpha, "n": profile.n,
            "mean_response": None, "mean_wait": None,
            "max_queue": initial_queue,
            "learn_error_final": None, "throughput": None,
            "benchmark_fraction": None, "completed_jobs": None,
        }
        return summary, recovery_timeseries_rows(label, seed, result), []

    rounds = workload.max_events
    if rounds is None:
        total = lam + profile.total
        rounds = int(workload.max_time * total)
    warmup = int(rounds * metrics.get("warmup_fraction", 0.2))
    out = run_discrete_tails(
        profile.n, profile.speeds, lam, policy.kind, seed, rounds,
        warmup_rounds=warmup, k_max=metrics.get("tail_kmax", 10),
    )
    summary = {
        "policy": label, "seed": seed, "alpha": alpha, "n": profile.n,
        "mean_response": None, "mean_wait": None,
        "max_queue": out["peak"],
        "learn_error_final": None, "throughput": None,
        "benchmark_fraction": None, "completed_jobs": None,
    }
    histogram = []
    for worker_id, q in enumerate(out["final_queues"]):
        histogram.append({
            "policy": label, "seed": seed, "worker_id": worker_id,
            "queue_len": q, "count": 1,
        })
    return summary, [], histogram


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Execute every (policy, seed) run and write the CSVs.

    Returns {"summary": [...], "out_dir": ...}; rows are ordered by the
    config's policy order then seed, independent of execution order.
    """
    out_dir = out_dir or config.output
    runner = _discrete_run if config.time_mode == "discrete" else _continuous_run
    jobs = [
        (policy_index, seed)
        for policy_index in range(len(config.policies))
        for seed in config.seeds
    ]
    if config.parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.parallel) as pool:
            results = list(pool.map(
                _run_job, [(runner.__name__, config.raw, pi, s) for pi, s in jobs],
            ))
    else:
        results = [runner(config.raw, pi, s) for pi, s in jobs]

    summary_rows, ts_rows, hist_rows = [], [], []
    for row, ts, hist in results:
        summary_rows.append(row)
        ts_rows.extend(ts)
        hist_rows.extend(hist)

    os.makedirs(out_dir, exist_ok=True)
    atomic_write_text(
        os.path.join(out_dir, "config.yaml"),
        yaml.safe_dump(config.raw, sort_keys=True),
    )
    write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS, summary_rows)
    write_csv(os.path.join(out_dir, "timeseries.csv"), TIMESERIES_COLUMNS, ts_rows)
    write_csv(os.path.join(out_dir, "histogram.csv"), HISTOGRAM_COLUMNS, hist_rows)
    return {"summary": summary_rows, "out_dir": out_dir}


def _run_job(packed):
    name, raw, policy_index, seed = packed
    fn = _discrete_run if name == "_discrete_run" else _continuous_run
    return fn(raw, policy_index, seed)


def run_sweep(config: ExperimentConfig, parameter: str, values,
              out_dir: str | None = None) -> dict:
    """Cartesian sweep over one parameter; one summary row per point per
    (policy, seed)."""
    if not values:
        raise ValueError("sweep needs a non-empty list of values")
    out_dir = out_dir or config.output
    # alpha and n are already summary columns; other parameters get a
    # leading tag column so every row carries its sweep point.
    extra = [parameter] if parameter not in SUMMARY_COLUMNS else []
    all_rows = []
    for value in values:
        variant = config.sweep_variant(parameter, value)
        sub = run_experiment(variant, os.path.join(out_dir, variant.name))
        for row in sub["summary"]:
            tagged = {parameter: value} if extra else {}
            tagged.update(row)
            all_rows.append(tagged)
    write_csv(os.path.join(out_dir, "sweep_summary.csv"),
              extra + SUMMARY_COLUMNS, all_rows)
    return {"summary": all_rows, "out_dir": out_dir}
