"""Simulator for a two-agent nano-satellite debris-push mission.

Two BDI agents coordinate through a CoAP server over a simulated radio
link; the run reports synchronization error, per-action energy and the
resulting debris motion.
"""

from .runner import RunReport, Simulation, emit_outputs, run, simulate
from .scenario import Scenario, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "RunReport",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "emit_outputs",
    "load_scenario",
    "run",
    "simulate",
]
