"""CSV emission.

Three files per experiment, with fixed column names:

summary.csv    one row per run: policy, seed, alpha, n, p5, p25, p50, p75,
               p95, mean_response, mean_wait, max_queue, learn_error_final,
               throughput, benchmark_fraction, completed_jobs
timeseries.csv per metrics sample: policy, seed, time, max_queue, l1, l0,
               lambda_hat, mu_hat_error (l0/l1 populated by coupled
               recovery runs, blank otherwise)
histogram.csv  sampled queue-length counts: policy, seed, worker_id,
               queue_len, count

All writes are atomic: content goes to a temp file in the target directory
and is renamed into place.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile

SUMMARY_COLUMNS = [
    "policy", "seed", "alpha", "n", "p5", "p25", "p50", "p75", "p95",
    "mean_response", "mean_wait", "max_queue", "learn_error_final",
    "throughput", "benchmark_fraction", "completed_jobs",
]
TIMESERIES_COLUMNS = [
    "policy", "seed", "time", "max_queue", "l1", "l0", "lambda_hat",
    "mu_hat_error",
]
HISTOGRAM_COLUMNS = ["policy", "seed", "worker_id", "queue_len", "count"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return format(value, ".10g")
    return str(value)


def atomic_write_text(path: str, content: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in columns])
    atomic_write_text(path, buf.getvalue())


def summary_row(report) -> dict:
    r = report.responses
    return {
        "policy": report.policy,
        "seed": report.seed,
        "alpha": report.alpha,
        "n": report.n,
        "p5": r.get("p5"), "p25": r.get("p25"), "p50": r.get("p50"),
        "p75": r.get("p75"), "p95": r.get("p95"),
        "mean_response": r.get("mean"),
        "mean_wait": report.mean_wait,
        "max_queue": report.peak_queue,
        "learn_error_final": report.final_learn_error,
        "throughput": report.throughput,
        "benchmark_fraction": report.benchmark_fraction,
        "completed_jobs": report.completed_jobs,
    }


def timeseries_rows(report) -> list[dict]:
    rows = []
    for point in report.series:
        rows.append({
            "policy": report.policy,
            "seed": report.seed,
            "time": point["time"],
            "max_queue": point["max_queue"],
            "l1": point.get("l1"),
            "l0": point.get("l0"),
            "lambda_hat": point.get("lambda_hat"),
            "mu_hat_error": point.get("mu_hat_error"),
        })
    return rows


def recovery_timeseries_rows(policy: str, seed: int, recovery: dict) -> list[dict]:
    rows = []
    for t, l0, l1 in recovery["series"]:
        rows.append({
            "policy": policy, "seed": seed, "time": t,
            "max_queue": None, "l1": l1, "l0": l0,
            "lambda_hat": None, "mu_hat_error": None,
        })
    return rows


def histogram_rows(report) -> list[dict]:
    rows = []
    for worker_id in sorted(report.sampled_histogram):
        counts = report.sampled_histogram[worker_id]
        for level in sorted(counts):
            rows.append({
                "policy": report.policy,
                "seed": report.seed,
                "worker_id": worker_id,
                "queue_len": level,
                "count": counts[level],
            })
    return rows
