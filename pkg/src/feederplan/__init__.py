"""Day-ahead loss-minimising planning for radial distribution feeders.

Combines conservation voltage reduction (lowering the substation voltage to
shrink voltage-dependent load) with switch reconfiguration, solved as a
mixed-integer second-order cone program.
"""

from .case_model import NetworkCase, builtin_case, load_case, read_case
from .mi_solver import MIOptions, check_feasibility, solve_misocp
from .opt_model import ModelOptions, ScenarioConfig, build_model, extract_solution
from .oracle import Topology, brute_force_best_topology, sweep_powerflow
from .runner import RunOptions, compare_scenarios, emit_report, run_scenario

__version__ = "0.1.0"

__all__ = [
    "MIOptions",
    "ModelOptions",
    "NetworkCase",
    "RunOptions",
    "ScenarioConfig",
    "Topology",
    "brute_force_best_topology",
    "build_model",
    "builtin_case",
    "check_feasibility",
    "compare_scenarios",
    "emit_report",
    "extract_solution",
    "load_case",
    "read_case",
    "run_scenario",
    "solve_misocp",
    "sweep_powerflow",
]
