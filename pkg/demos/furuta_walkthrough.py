"""
Three-loop design for the Furuta pendulum
=========================================

Load the bundled pendulum problem, check its standing assumptions, design the
stabilizing, tracking and compensation loops, and look at how each one behaves
in simulation.
"""
from importlib import resources

import numpy as np

import regforge as rf
from regforge import experiments as ex

DATA = resources.files("regforge") / "data"

problem = rf.load_problem(DATA / "furuta.json")
pl = problem.plant
print(f"plant: n={pl.n}, m={pl.m}, p={pl.p}, stabilization outputs q={pl.q}")

# Every assumption either passes or reports a witness (an eigenvalue, a
# frequency) that shows why it fails.
rep = rf.check_assumptions(pl, problem.reference, problem.disturbance, "three-loop")
for a in rep.entries:
    print(f"  {a.id:>3}  {a.status:<4}  {a.detail}")

d = rf.design(problem)
report = d.report()
for name, g in report["gains"].items():
    print(name, np.round(np.array(g), 4).tolist())

# Separation: each loop is designed on its own, and the closed loop is Hurwitz
# once the marginally stable exosystem states are set aside.
for loop, info in report["loops"].items():
    print(f"{loop:<10} abscissa {info['abscissa']:+.3f}")
print("closed loop:", report["closed_loop"])

# The compensator certificate: swept norm of the w1 -> z channel against gamma.
cert = d.synthesis.certificates
print(f"gamma {d.gamma}, swept norm {cert['swept_norm']:.4f} over {cert['sweep_points']} points")

# Tracking with everything switched off is exact; with the unmodeled
# disturbance on, the measured ratio ||z||/||w1|| sits well below gamma.
for name in ("nominal", "w1", "w1-ablate", "all"):
    tr = ex.run_scenario(d, name, horizon=20.0, seed=0)
    r = ex.scenario_report(d, tr)
    ratio = "" if r["ratio"] is None else f", ||z||/||w1|| = {r['ratio']:.4f}"
    print(f"{name:<10} steady max|e| = {r['steady_max_e']:.2e}{ratio}")
