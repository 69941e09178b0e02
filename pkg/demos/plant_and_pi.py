"""Tour of the surrogate finger and the PI baseline.

Run: python demos/plant_and_pi.py
"""
# %%
import numpy as np

from memctrl.baseline import PidController, tune_gains
from memctrl.harness import avg_tracking_error, default_test_reference, run_episode
from memctrl.plant import SoftFingerPlant

plant = SoftFingerPlant()

# %% The pressure-to-angle map saturates: equal pressure steps buy less and less angle.
for u in (0, 25, 50, 100, 150, 200):
    print(f"u = {u:5.1f} kPa  ->  steady angle {plant.steady_state(u):6.2f} deg")

# %% Step response: a first-order lag, ~63% of the way after 10 steps.
plant.reset()
theta = [plant.step(60.0).theta for _ in range(40)]
print("step to 60 kPa:", np.round(theta[::5], 2))

# %% Grid-tune a PI loop on the step profile used for testing.
ref = default_test_reference()
gains, rows = tune_gains(SoftFingerPlant, ref)
print(f"best of {len(rows)} grid points: kp={gains.kp}, ki={gains.ki}")
trace = run_episode(PidController(gains), SoftFingerPlant(), ref)
print(f"PI average tracking error: {avg_tracking_error(trace):.4f} deg")

# %% Where the error comes from: transients at the four plateau changes.
seg = len(ref) // 4
for j in range(4):
    e = np.abs(trace.error[j * seg:(j + 1) * seg])
    print(f"plateau {j}: mean |e| {e.mean():.3f}, last |e| {e[-1]:.2e}")
