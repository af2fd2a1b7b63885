"""Deterministic discrete-event simulation of a TSN plant bridged over a 5G segment."""

from .network import Network, SimulationReport, run
from .scenario import Scenario, build_scenario, bundled_scenarios, load_scenario
from .stats import DelayStats, ccdf, measure_task_delays, multicast_fanout

__all__ = [
    "Network", "SimulationReport", "run",
    "Scenario", "build_scenario", "bundled_scenarios", "load_scenario",
    "DelayStats", "ccdf", "measure_task_delays", "multicast_fanout",
]
