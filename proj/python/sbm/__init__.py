"""Python access to the interacting superprocess simulator.

Configurations are plain dicts in the same layout as the JSON files the command-line tool reads.
"""

import json as _json

from . import _sbm
from ._sbm import ConfigError, DomainError, NumericalAbort, g_m_coefficient, h_k, heat_kernel, weight_j

__all__ = [
    "ConfigError",
    "DomainError",
    "NumericalAbort",
    "g_m_coefficient",
    "h_k",
    "heat_kernel",
    "weight_j",
    "validate",
    "simulate",
    "simulate_u",
    "simulate_total_mass",
    "run_cli",
]


def _doc(config):
    return _json.dumps(config if config is not None else {})


def validate(config=None):
    """List of (field path, message); empty when the configuration is valid."""
    return _sbm.validate_config(_doc(config))


def simulate(config=None, seed=1):
    """Density run. Returns (times, x, fields) with fields shaped (len(times), len(x))."""
    return _sbm.simulate(_doc(config), seed)


def simulate_u(config=None, seed=1):
    """Distribution-function run. Returns (times, [(x_i, u_i), ...]) per partition interval."""
    return _sbm.simulate_u(_doc(config), seed)


def simulate_total_mass(rate=1.0, z0=1.0, horizon=1.0, dt=1e-3, seed=1):
    """Total mass for a constant rate. Returns (times, values)."""
    return _sbm.simulate_total_mass(rate, z0, horizon, dt, seed)


def run_cli(*args):
    """Runs the command-line tool in process. Returns (exit status, stdout, stderr)."""
    return _sbm.run_cli([str(a) for a in args])
