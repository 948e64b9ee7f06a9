"""Named simulation scenarios and the checks run on them."""

from dataclasses import dataclass

import numpy as np

from .profiles import DisturbanceProfile
from .sim import DEFAULT_DISCARD, simulate, verify_bound

DEFAULT_W1 = DisturbanceProfile("sinusoid", "w1", {
    "amplitudes": [1.0], "frequencies": [1.0], "phases": [0.0]})


@dataclass(frozen=True)
class Scenario:
    name: str
    noise: bool = False
    w1: bool = False
    w2: bool = False
    ablate: bool = False


SCENARIOS = {s.name: s for s in (
    Scenario("nominal"),
    Scenario("noise", noise=True),
    Scenario("w1", w1=True),
    Scenario("w2", w2=True),
    Scenario("all", noise=True, w1=True, w2=True),
    Scenario("w1-ablate", w1=True, ablate=True),
    Scenario("all-ablate", noise=True, w1=True, w2=True, ablate=True),
)}
DEFAULT_SCENARIOS = ("nominal", "noise", "w1", "w1-ablate", "all")


def w1_profile(problem):
    return problem.profiles.get("w1", DEFAULT_W1)


def run_scenario(design, name, dt=1e-3, horizon=20.0, seed=0, channels=None):
    """Simulate one named scenario; noise scenarios use ``seed``."""
    sc = SCENARIOS[name]
    cl = design.closed_loop(ablate=sc.ablate, with_disturbance=sc.w2)
    profiles = {"w1": w1_profile(design.problem)} if sc.w1 else {}
    return simulate(cl, profiles, seed if sc.noise else None, dt, horizon, channels,
                    scenario=name)


def regulation_error(trace, discard=DEFAULT_DISCARD):
    """Post-transient ``max|e|`` relative to ``max|r|`` (absolute if ``r`` is zero)."""
    rmax = float(np.max(np.abs(trace["r"]))) if trace["r"].size else 0.0
    emax = trace.steady_max("e", discard)
    return emax / rmax if rmax > 0 else emax


def ablation_factor(design, dt=1e-3, horizon=40.0, discard=DEFAULT_DISCARD):
    """Steady-state ``max|e|`` with ``u_f = 0`` divided by the same with the compensator."""
    on = run_scenario(design, "w1", dt, horizon, channels=["e"]).steady_max("e", discard)
    off = run_scenario(design, "w1-ablate", dt, horizon, channels=["e"]).steady_max("e", discard)
    return off / on if on > 0 else float("inf"), on, off


def noise_power(design, seeds, dt=1e-3, horizon=2000.0, discard=DEFAULT_DISCARD):
    """Monte Carlo ``||e||_P`` over ``seeds`` for the noise-only scenario."""
    vals = [run_scenario(design, "noise", dt, horizon, s, channels=["e"]).power("e", discard)
            for s in seeds]
    return float(np.mean(vals)), float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0, vals


def scenario_report(design, trace, discard=DEFAULT_DISCARD):
    """:func:`verify_bound` report for a trace, with the budget on noise scenarios."""
    sc = SCENARIOS[trace.scenario]
    gamma = design.gamma
    budget = design.budget if sc.noise else None
    rep = verify_bound(trace, gamma, budget, discard).to_dict()
    rep["scenario"] = trace.scenario
    rep["seed"] = trace.seed
    rep["regulation_error"] = regulation_error(trace, discard)
    rep["steady_max_e"] = trace.steady_max("e", discard)
    return rep
