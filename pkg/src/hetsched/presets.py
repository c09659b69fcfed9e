"""Named experiment presets, one per headline experiment family."""

from __future__ import annotations

import copy

from .errors import ConfigurationError

PRESETS: dict[str, dict] = {
    # Classical two-choice sampling melts down when one worker is much
    # faster: nine rate-1 workers plus one rate-6 worker at lambda=14.
    "blowup": {
        "name": "blowup",
        "seeds": [1],
        "lambda_rate": 14.0,
        "speeds": {"source": "explicit", "values": [1, 1, 1, 1, 1, 1, 1, 1, 1, 6]},
        "policies": [{"kind": "PoT"}, {"kind": "PPoT_SQ"}],
        "budget": {"max_events": 200000},
        "metrics": {"sample_interval": 5.0, "warmup_fraction": 0.2},
        "output": "out/blowup",
    },
    # Least-loaded routing turns the fast worker into a long-queue trap:
    # one rate-20 worker plus twenty rate-1 workers at lambda=30.
    "ll-pathology": {
        "name": "ll-pathology",
        "seeds": [1],
        "lambda_rate": 30.0,
        "speeds": {"source": "explicit", "values": [20.0] + [1.0] * 20},
        "policies": [{"kind": "PPoT_LL"}, {"kind": "PPoT_SQ"}],
        "budget": {"max_events": 300000},
        "metrics": {"sample_interval": 5.0, "warmup_fraction": 0.3},
        "output": "out/ll-pathology",
    },
    # Doubly-exponential tail of the two-choice stationary distribution,
    # homogeneous cluster at alpha=0.9 in the round-based chain.
    "tail-loglog": {
        "name": "tail-loglog",
        "seeds": [1],
        "n": 1000,
        "alpha": 0.9,
        "speeds": {"source": "homogeneous"},
        "time_mode": "discrete",
        "policies": [{"kind": "PPoT_SQ"}, {"kind": "PSS"}],
        "budget": {"max_events": 2000000},
        "metrics": {"warmup_fraction": 0.2, "sample_interval": 1.0, "tail_kmax": 8},
        "output": "out/tail-loglog",
    },
    # Coupled backlogged-vs-stationary twin run measuring recovery time.
    "shock-recovery": {
        "name": "shock-recovery",
        "seeds": [1],
        "n": 256,
        "alpha": 0.5,
        "speeds": {"source": "homogeneous"},
        "time_mode": "discrete",
        "policies": [{"kind": "PPoT_SQ"}],
        "budget": {"max_time": 400.0},
        "initial_queue": 20,
        "metrics": {"sample_interval": 0.5, "warmup_fraction": 0.0},
        "output": "out/shock-recovery",
    },
    # Sliding-window constant ablation under periodic speed permutations.
    "window-ablation": {
        "name": "window-ablation",
        "seeds": [1, 2, 3],
        "alpha": 0.8,
        "speeds": {"source": "fixed", "set": "S2"},
        "service_mode": "sleep",
        "workload": {"task_size_mean": 0.1},
        "shock": {"period": 60.0, "mode": "permute"},
        "policies": [{"kind": "PPoT_SQ", "speed_source": "learned"}],
        "learner": {
            "window_mode": "practical", "window_c": 20.0,
            "arrival_window": 1000, "benchmarks": True,
        },
        "budget": {"max_time": 6000.0},
        "metrics": {"sample_interval": 10.0, "warmup_fraction": 0.5},
        "output": "out/window-ablation",
    },
}


def preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return copy.deepcopy(PRESETS[name])
