from .common import (DEFAULT_ACTION_SET, ReplayBuffer, TrackingEnv, TrainerConfig, TrainLog,
                     Transition, reward, snapshot_if_improved, soft_update)
from .ddpg import td_target_ddpg, train_fmc_ddpg
from .dqn import td_target_dqn, train_fmc_dqn
from .sac import train_fmc_sac
from .baselines import train_baseline_rl

__all__ = [
    "DEFAULT_ACTION_SET", "ReplayBuffer", "TrackingEnv", "TrainerConfig", "TrainLog",
    "Transition", "reward", "snapshot_if_improved", "soft_update",
    "td_target_ddpg", "train_fmc_ddpg", "td_target_dqn", "train_fmc_dqn",
    "train_fmc_sac", "train_baseline_rl",
]
