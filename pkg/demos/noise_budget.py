"""
Predicted versus measured noise power
=====================================

For a Kalman-mode design the steady tracking-error power under white noise
has a closed form built from two Lyapunov solutions: the filter error
covariance P1 and the state covariance P2 driven through the regulator.
Here we compare it against long Monte Carlo runs.
"""
from importlib import resources

import numpy as np

import regforge as rf

d = rf.design(rf.load_problem(resources.files("regforge") / "data" / "noise2.json"))
b = d.budget
print("P1 =\n", np.round(b.P1, 5))
print("P2 =\n", np.round(b.P2, 5))
print(f"predicted ||e||_P = {b.predicted_error_power:.4f}")

# Each run is 2000 time units at dt = 1e-3; averaging the squared power over
# seeds keeps the estimator variance well inside the comparison band.
cl = d.closed_loop()
powers = []
for seed in range(8):
    tr = rf.simulate(cl, noise=seed, horizon=2000.0, channels=["e"])
    powers.append(tr.power("e"))
    print(f"seed {seed}: ||e||_P = {powers[-1]:.4f}")
measured = np.sqrt(np.mean(np.square(powers)))
print(f"measured {measured:.4f}, relative error "
      f"{abs(measured - b.predicted_error_power) / b.predicted_error_power:.3%}")

# The noise enters through a sampled feedthrough D0 w0 as well; at finite dt
# that term has power D0 D0^T / dt rather than D0 D0^T. Here D0 is small
# enough that the difference does not matter.
D0 = d.problem.plant.D0
dd = (D0 @ D0.T).item()
print(f"D0 D0^T = {dd:.2e}, D0 D0^T / dt = {dd / 1e-3:.2e}")
