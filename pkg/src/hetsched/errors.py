"""Exception types shared across the simulator.

ConfigurationError maps to CLI exit code 1, SimulationFault to exit code 2.
Oracle-check failures are reported, not raised (exit code 3 in the CLI).
"""


class ConfigurationError(ValueError):
    """Invalid configuration: bad rates, unknown keys, missing parameters."""


class SimulationFault(RuntimeError):
    """Internal inconsistency during a run, e.g. a corrupted event trace."""
