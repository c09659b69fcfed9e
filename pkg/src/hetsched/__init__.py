"""Discrete-event simulator and scheduling library for heterogeneous
clusters: proportional-sampling power-of-two-choices with an online speed
learner, classic baselines, bandit schedulers, and analytic queueing
oracles for validation."""

__version__ = "0.1.0"
