"""Experiment configuration: schema, validation, and materialization.

One YAML file describes a whole experiment (workload, speeds, shocks,
policies, learner constants, seeds, budgets, outputs).  Validation is
strict: unknown keys are rejected by name so typos cannot silently fall
back to defaults.  CLI flags may override top-level scalars.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import yaml

from .errors import ConfigurationError
from .learning import THEORETICAL, LearnerConfig
from .policies import EXP3, EXP4, MULTI_ARMED, POLICY_KINDS, SPEED_SOURCES, PolicyConfig
from .simulation import RunSpec
from .workloads import (
    PERMUTE, ShockSchedule, SpeedProfile, WorkloadSpec, make_profile,
)
from .engine import RandomStream

SWEEPABLE = ("alpha", "n", "window_c", "gamma", "eta", "shock_period")

_SCHEMA = {
    "name": str,
    "seeds": list,
    "n": int,
    "alpha": (int, float),
    "lambda_rate": (int, float),
    "speeds": {
        "source": str,            # zipf | fixed | explicit | homogeneous
        "set": str,               # fixed source: S1 | S2 | TPCH
        "values": list,           # explicit source
        "zipf_exponent": (int, float),
        "zipf_cap": (int, float),
    },
    "shock": {
        "period": (int, float),
        "mode": str,              # permute | resample
    },
    "workload": {
        "tasks_per_job": int,
        "task_size_mean": (int, float),
    },
    "service_mode": str,          # memoryless | sleep
    "time_mode": str,             # continuous | discrete
    "policies": list,
    "learner": {
        "window_mode": str,       # theoretical | practical
        "arrival_window": int,
        "c0": (int, float),
        "c1": (int, float),
        "window_c": (int, float),
        "initial_lambda": (int, float),
        "mu_bar": (int, float),
        "window_max": int,
        "benchmarks": bool,
    },
    "budget": {
        "max_events": int,
        "max_time": (int, float),
    },
    "metrics": {
        "sample_interval": (int, float),
        "warmup_fraction": (int, float),
        "tail_kmax": int,
        "track_mu_hat": bool,
    },
    "initial_queue": int,
    "bandit": {
        "s_min": (int, float),
        "l_max": (int, float),
    },
    "output": str,
    "parallel": int,
}

_POLICY_SCHEMA = {
    "kind": str,
    "explore_prob": (int, float),
    "gamma": (int, float),
    "speed_source": str,
}


def _check_keys(data, schema, path=""):
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected a mapping at '{path or '<top>'}'")
    for key, value in data.items():
        if key not in schema:
            raise ConfigurationError(f"unknown config key '{path}{key}'")
        expected = schema[key]
        if isinstance(expected, dict):
            _check_keys(value, expected, f"{path}{key}.")
        elif value is not None and not isinstance(value, expected):
            if expected is list and isinstance(value, (tuple,)):
                continue
            raise ConfigurationError(
                f"config key '{path}{key}' has wrong type "
                f"{type(value).__name__}"
            )


@dataclass
class ExperimentConfig:
    """Validated experiment description plus materialization helpers."""

    raw: dict
    name: str = "experiment"
    seeds: list[int] = field(default_factory=lambda: [1])
    policies: list[PolicyConfig] = field(default_factory=list)
    output: str = "out"
    parallel: int = 1
    time_mode: str = "continuous"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        _check_keys(data, _SCHEMA)
        policies_raw = data.get("policies")
        if not policies_raw:
            raise ConfigurationError("config needs a non-empty 'policies' list")
        policies = []
        for entry in policies_raw:
            _check_keys(entry, _POLICY_SCHEMA, "policies[].")
            if "kind" not in entry:
                raise ConfigurationError("each policy entry needs a 'kind'")
            kind = entry["kind"]
            if kind not in POLICY_KINDS:
                raise ConfigurationError(
                    f"unknown policy kind {kind!r}; choose from {POLICY_KINDS}"
                )
            source = entry.get("speed_source", "oracle")
            if source not in SPEED_SOURCES:
                raise ConfigurationError(f"unknown speed_source {source!r}")
            policies.append(
                PolicyConfig(
                    kind=kind,
                    explore_prob=entry.get("explore_prob"),
                    gamma=entry.get("gamma"),
                    speed_source=source,
                ).validate()
            )
        seeds = data.get("seeds", [1])
        if not seeds:
            raise ConfigurationError("'seeds' must not be empty")
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError("'seeds' contains duplicates")
        time_mode = data.get("time_mode", "continuous")
        if time_mode not in ("continuous", "discrete"):
            raise ConfigurationError(f"unknown time_mode {time_mode!r}")
        cfg = cls(
            raw=data,
            name=data.get("name", "experiment"),
            seeds=[int(s) for s in seeds],
            policies=policies,
            output=data.get("output", "out"),
            parallel=int(data.get("parallel", 1)),
            time_mode=time_mode,
        )
        cfg._validate_sections()
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
        if data is None:
            raise ConfigurationError(f"config file {path} is empty")
        return cls.from_dict(data)

    # -- validation of the scalar sections (materialize once to surface errors)

    def _validate_sections(self):
        budget = self.raw.get("budget") or {}
        if budget.get("max_events") is None and budget.get("max_time") is None:
            raise ConfigurationError("budget needs max_events or max_time")
        if (self.raw.get("alpha") is None) == (self.raw.get("lambda_rate") is None):
            raise ConfigurationError("specify exactly one of alpha or lambda_rate")
        if self.parallel < 1:
            raise ConfigurationError("parallel degree must be at least 1")
        self.build_run_spec(self.policies[0], self.seeds[0])

    # -- materialization

    def build_profile(self, seed: int) -> SpeedProfile:
        spec = self.raw.get("speeds") or {"source": "homogeneous"}
        source = spec.get("source", "homogeneous")
        rng = RandomStream(seed).rng("speeds")
        return make_profile(
            source,
            n=self.raw.get("n"),
            values=spec.get("values"),
            fixed_name=spec.get("set"),
            exponent=spec.get("zipf_exponent", 2.0),
            cap=spec.get("zipf_cap", 100.0),
            stream_rng=rng,
        )

    def build_workload(self) -> WorkloadSpec:
        w = self.raw.get("workload") or {}
        budget = self.raw.get("budget") or {}
        return WorkloadSpec(
            alpha=self.raw.get("alpha"),
            lambda_rate=self.raw.get("lambda_rate"),
            tasks_per_job=w.get("tasks_per_job", 1),
            task_size_mean=w.get("task_size_mean", 1.0),
            max_events=budget.get("max_events"),
            max_time=budget.get("max_time"),
        )

    def build_shock(self) -> ShockSchedule:
        s = self.raw.get("shock") or {}
        return ShockSchedule(period=s.get("period", 0.0), mode=s.get("mode", PERMUTE))

    def build_learner(self, profile: SpeedProfile, workload: WorkloadSpec,
                      service_mode: str) -> LearnerConfig | None:
        section = self.raw.get("learner")
        needs = any(p.speed_source == "learned" or p.kind == EXP4 for p in self.policies)
        if section is None and not needs:
            return None
        section = section or {}
        mu_bar = section.get("mu_bar")
        if mu_bar is None:
            mu_bar = workload.effective_capacity(profile.total, service_mode)
        cfg = LearnerConfig(
            mu_bar=mu_bar,
            window_mode=section.get("window_mode", THEORETICAL),
            arrival_window=section.get("arrival_window", 100),
            c0=section.get("c0", 0.1),
            c1=section.get("c1", 4.0),
            window_c=section.get("window_c", 20.0),
            initial_lambda=section.get("initial_lambda"),
            window_max=section.get("window_max", 8192),
        )
        return cfg

    @property
    def benchmarks_enabled(self) -> bool:
        section = self.raw.get("learner") or {}
        return bool(section.get("benchmarks", False))

    def build_run_spec(self, policy: PolicyConfig, seed: int) -> RunSpec:
        profile = self.build_profile(seed)
        workload = self.build_workload()
        service_mode = self.raw.get("service_mode", "memoryless")
        metrics = self.raw.get("metrics") or {}
        bandit = self.raw.get("bandit") or {}
        learner = self.build_learner(profile, workload, service_mode)
        return RunSpec(
            profile=profile,
            workload=workload,
            policy=copy.deepcopy(policy),
            seed=seed,
            shock=self.build_shock(),
            learner=learner,
            benchmarks=self.benchmarks_enabled,
            service_mode=service_mode,
            sample_interval=metrics.get("sample_interval", 1.0),
            warmup_fraction=metrics.get("warmup_fraction", 0.2),
            initial_queue=self.raw.get("initial_queue", 0),
            tail_kmax=metrics.get("tail_kmax", 16),
            track_mu_hat=metrics.get("track_mu_hat", False),
            bandit_s_min=bandit.get("s_min"),
            bandit_l_max=bandit.get("l_max"),
        )

    def run_matrix(self):
        """(policy, seed) pairs in deterministic order."""
        return [(policy, seed) for policy in self.policies for seed in self.seeds]

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """New config with top-level keys replaced (CLI flag overrides)."""
        data = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            if value is None:
                continue
            data[key] = value
        return ExperimentConfig.from_dict(data)

    def sweep_variant(self, parameter: str, value) -> "ExperimentConfig":
        if parameter not in SWEEPABLE:
            raise ConfigurationError(
                f"unknown sweep parameter {parameter!r}; choose from {SWEEPABLE}"
            )
        data = copy.deepcopy(self.raw)
        if parameter == "alpha":
            data["alpha"] = float(value)
            data.pop("lambda_rate", None)
        elif parameter == "n":
            data["n"] = int(value)
        elif parameter == "window_c":
            data.setdefault("learner", {})["window_c"] = float(value)
        elif parameter == "gamma":
            for entry in data.get("policies", []):
                if entry.get("kind") in (EXP3, EXP4):
                    entry["gamma"] = float(value)
        elif parameter == "eta":
            for entry in data.get("policies", []):
                if entry.get("kind") == MULTI_ARMED:
                    entry["explore_prob"] = float(value)
        elif parameter == "shock_period":
            data.setdefault("shock", {})["period"] = float(value)
        variant = ExperimentConfig.from_dict(data)
        variant.name = f"{self.name}_{parameter}={value:g}" if isinstance(
            value, (int, float)) else f"{self.name}_{parameter}={value}"
        return variant
