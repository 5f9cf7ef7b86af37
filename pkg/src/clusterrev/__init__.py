"""Cluster-scoped certificate revocation for vehicular networks, as a
deterministic discrete-event simulation with a global-CRL baseline."""

from .report import RunReport, emit_comparison, emit_report, replay
from .runner import run_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario, random_scenario

__version__ = "0.1.0"

__all__ = [
    "RunReport",
    "ScenarioConfig",
    "ScenarioError",
    "emit_comparison",
    "emit_report",
    "load_scenario",
    "random_scenario",
    "replay",
    "run_scenario",
]
