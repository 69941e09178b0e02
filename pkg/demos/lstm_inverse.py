"""Learn the finger's inverse model with an LSTM, then track open- and closed-loop.

Run: python demos/lstm_inverse.py   (about half a minute)
"""
# %%
import numpy as np

from memctrl.harness import avg_tracking_error, default_test_reference, run_episode
from memctrl.lstmctrl import (ClosedLoopLstmController, OpenLoopLstmController,
                              generate_dataset, train_inverse)
from memctrl.plant import SoftFingerPlant

# %% Excite the plant with random steps, ramps and sines and record the angles.
ds = generate_dataset(SoftFingerPlant(), M=20_000)
print(f"{len(ds)} transitions, angles in [{ds.p.min():.1f}, {ds.p.max():.1f}] deg")

# %% Fit u_t from (p_t, p_t+1) with the default schedule (200 epochs).
model, rep = train_inverse(ds)
print(f"loss {rep.train_loss[0]:.4f} -> {rep.train_loss[-1]:.5f}, "
      f"held-out relative error {rep.val_rel_error:.3%}")

# %% Open loop feeds the reference pair; closed loop swaps in the measured angle.
ref = default_test_reference()
kick = {200: 12.0}     # someone bumps the finger by 12 degrees at t=200
for ctrl in (OpenLoopLstmController(model), ClosedLoopLstmController(model)):
    clean = run_episode(ctrl, SoftFingerPlant(), ref)
    hit = run_episode(ctrl, SoftFingerPlant(), ref, disturbance=kick)
    window = slice(200, 300)
    print(f"{ctrl.name:12s} average error {avg_tracking_error(clean):.4f} deg; "
          f"t=200..299 without/with bump: {np.mean(np.abs(clean.error[window])):.3f} / "
          f"{np.mean(np.abs(hit.error[window])):.3f} deg")
