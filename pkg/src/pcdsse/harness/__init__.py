"""Experiment harness: scenarios, runner, comparisons and the CLI."""

from .compare import CompareTable, compare, measure_step_cost
from .runner import RunResult, run_scenario, steady_state
from .scenario import Scenario, load_scenario, load_sweep, scenario_hash

__all__ = [
    "CompareTable",
    "RunResult",
    "Scenario",
    "compare",
    "load_scenario",
    "load_sweep",
    "measure_step_cost",
    "run_scenario",
    "scenario_hash",
    "steady_state",
]
