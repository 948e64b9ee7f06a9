"""Robust output regulation under noise, modeled and unmodeled disturbance.

The usual entry points::

    from regforge import load_problem, check_assumptions, design, simulate

    pr = load_problem("furuta.json")
    d = design(pr)
    trace = simulate(d.closed_loop(), horizon=20.0)
"""

from .pipeline import Design, design
from .errors import (Diverged, ParseError, RegforgeError, SynthesisFailed)
from .experiments import SCENARIOS, run_scenario
from .model import (AssumptionReport, Exosystem, Plant, Problem, assumption_mode,
                    check_assumptions, load_problem, problem_from_dict)
from .numerics import solve_care, solve_game_care, solve_lyapunov, solve_sylvester
from .profiles import DisturbanceProfile, sinusoid
from .sim import ClosedLoop, SimTrace, power_norm, simulate, verify_bound

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport", "ClosedLoop", "Design", "DisturbanceProfile", "Diverged",
    "Exosystem", "ParseError", "Plant", "Problem", "RegforgeError", "SCENARIOS",
    "SimTrace", "SynthesisFailed", "assumption_mode", "check_assumptions", "design",
    "load_problem", "power_norm", "problem_from_dict", "run_scenario", "simulate",
    "sinusoid", "solve_care", "solve_game_care", "solve_lyapunov", "solve_sylvester",
    "verify_bound",
]
