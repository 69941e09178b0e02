"""Three-layer reinforcement-learning controllers trained on the same task.

They share the environment, reward and episode protocol with the FMC
trainers; only the policy network differs.
"""
from __future__ import annotations

import numpy as np

from ..fmc import ErrorHistory, apply_increment
from ..nn import Network, mlp
from .common import TrackingEnv
from .ddpg import run_ddpg
from .dqn import greedy, run_dqn
from .sac import GaussianPolicy, run_sac

ALGORITHMS = ("ddpg", "dqn", "sac")


def baseline_actor(algo, state_dim, cfg, rng) -> Network:
    """Three dense layers: ReLU for DDPG and SAC, sigmoid for DQN."""
    h = cfg.baseline_hidden
    if algo == "ddpg":
        return mlp([state_dim, h, h, 1], "relu", "tanh", rng=rng)
    if algo == "dqn":
        return mlp([state_dim, h, h, len(cfg.action_set)], "sigmoid", "linear", rng=rng)
    if algo == "sac":
        return mlp([state_dim, h, h, 1], "relu", "linear", rng=rng)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


def baseline_env(plant, ref_traj, cfg) -> TrackingEnv:
    return TrackingEnv(plant, ref_traj, cfg.k, cfg.reward_scale, obs=cfg.baseline_obs,
                       steps_per_episode=cfg.steps_per_episode, error_norm=cfg.error_norm)


def train_baseline_rl(plant, ref_traj, cfg, algo):
    """Returns ``(network, TrainLog)``; for SAC the network is the policy mean."""
    rng = np.random.default_rng(cfg.seed)
    env = baseline_env(plant, ref_traj, cfg)
    net = baseline_actor(algo, env.state_dim, cfg, rng)
    name = f"baseline-{algo}"
    if algo == "ddpg":
        log = run_ddpg(env, net, cfg, rng, name)
        best = log.best
    elif algo == "dqn":
        log = run_dqn(env, net, cfg, rng, name)
        best = log.best
    else:
        policy = GaussianPolicy(net, cfg.sac_init_std, cfg.std_floor)
        log = run_sac(env, policy, cfg, rng, name)
        best = log.best.mean if log.best is not None else None
    return (best if best is not None else net), log


class NetworkController:
    """Incremental controller around a trained baseline network.

    ``increment`` maps the network output to kPa: ``out_scale * y`` for the
    continuous actors, ``action_set[argmax y]`` for a Q-network.
    """
    uses_measurement = True

    def __init__(self, net: Network, algo, cfg, u_min=0.0, u_max=200.0, theta_max=90.0,
                 name=None):
        self.net, self.algo = net, algo
        self.k, self.obs = cfg.k, cfg.baseline_obs
        self.error_norm, self.theta_max = cfg.error_norm, theta_max
        self.out_scale = cfg.out_scale
        self.action_set = np.asarray(cfg.action_set, dtype=float)
        self.u_min, self.u_max = u_min, u_max
        self.name = name or f"baseline-{algo}"
        self.reset()

    def reset(self):
        self.history = ErrorHistory(self.k)
        self.u = 0.0

    def _state(self, obs):
        if self.obs == "errors":
            return self.history.state_vector() / self.error_norm
        return np.array([obs.theta, obs.ref]) / self.theta_max

    def act(self, obs):
        self.history.push(obs.theta - obs.ref)
        s = self._state(obs)
        if self.algo == "dqn":
            inc = float(self.action_set[greedy(self.net, s)])
        else:
            y = float(self.net(s)[0])
            if self.algo == "ddpg":
                y = min(max(y, -1.0), 1.0)
            inc = self.out_scale * y
        self.u = apply_increment(self.u, inc, (self.u_min, self.u_max))
        return self.u
