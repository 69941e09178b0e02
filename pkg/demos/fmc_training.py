"""Train a finite memory controller with DDPG and watch it learn.

A reduced budget (40 episodes) keeps this under a minute; the full
comparison uses 150.

Run: python demos/fmc_training.py
"""
# %%
import numpy as np

from memctrl.fmc import FmcController
from memctrl.harness import (avg_tracking_error, default_test_reference, default_train_reference,
                             episodes_to_plateau, run_episode)
from memctrl.plant import SoftFingerPlant
from memctrl.rl import TrainerConfig, train_fmc_ddpg

cfg = TrainerConfig(episodes=40, seed=0)
weights, log = train_fmc_ddpg(SoftFingerPlant(), default_train_reference(), cfg)

# %% Mean reward per episode; the FMC has only k+1 = 5 weights to find.
for n in range(0, len(log), 5):
    print(f"episode {n + 1:3d}  mean reward {log.mean_rewards[n]:9.3f}")
print("episodes to 90% of plateau:", episodes_to_plateau(log.mean_rewards))
print("weights (kPa per degree):", np.round(weights.w, 4))

# %% The weights act on the current and four past errors of a step profile it never saw.
ctrl = FmcController(weights)
trace = run_episode(ctrl, SoftFingerPlant(), default_test_reference())
print(f"test average tracking error: {avg_tracking_error(trace):.4f} deg")
